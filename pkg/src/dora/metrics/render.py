"""Orthographic software rasterizer producing camera-space normal maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..mesh import TriangleMesh, face_normals

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
DEFAULT_VIEWS = 22
DEFAULT_RES = 512


@dataclass(frozen=True)
class CameraView:
    """Orthographic camera looking at the origin from ``direction``.

    The image plane spans [-1, 1]^2 in camera x (right) and y (up); camera
    z is ``direction`` itself, pointing at the viewer.
    """

    direction: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def frame(self) -> np.ndarray:
        """Rows are the camera x, y, z axes in world coordinates (right-handed)."""
        z = np.asarray(self.direction, dtype=np.float64)
        z = z / np.linalg.norm(z)
        up = np.asarray(self.up, dtype=np.float64)
        if abs(np.dot(up, z)) > 0.999:
            up = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.999 else np.array([1.0, 0.0, 0.0])
        x = np.cross(up, z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return np.stack([x, y, z])


def fibonacci_directions(n: int) -> np.ndarray:
    """Spherical Fibonacci lattice: z_i = 1 - (2i+1)/n, azimuth i * golden angle."""
    if n < 1:
        raise ValueError("need at least one view")
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    d = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def default_views(n: int = DEFAULT_VIEWS) -> list[CameraView]:
    return [CameraView(tuple(d)) for d in fibonacci_directions(n)]


@dataclass(frozen=True, eq=False)
class NormalMapImage:
    """Encoded normals ``(n + 1) / 2`` of shape (H, W, 3) plus a coverage mask."""

    encoded: np.ndarray
    coverage: np.ndarray

    @property
    def width(self) -> int:
        return self.encoded.shape[1]

    @property
    def height(self) -> int:
        return self.encoded.shape[0]

    def decoded(self) -> np.ndarray:
        return self.encoded * 2.0 - 1.0


def render_normal_map(mesh: TriangleMesh, view: CameraView, res: int = DEFAULT_RES) -> NormalMapImage:
    """Z-buffer rasterization sampled at pixel centers with flat face normals.

    Pixel (row, col) covers camera x = -1 + (col + 0.5) * 2/res and
    y = 1 - (row + 0.5) * 2/res. The nearest surface has the largest camera z;
    on exact depth ties the lower face index wins.
    """
    if res < 16:
        raise ValueError("resolution must be at least 16")
    frame = view.frame()
    cam = mesh.vertices @ frame.T
    normals, degenerate = face_normals(mesh)
    cam_normals = normals @ frame.T

    step = 2.0 / res
    depth = np.full((res, res), -np.inf)
    owner = np.full((res, res), -1, dtype=np.int64)

    tri = cam[mesh.faces]
    # pixel-space coordinates: column = (x + 1)/step - 0.5, row = (1 - y)/step - 0.5
    col = (tri[..., 0] + 1.0) / step - 0.5
    row = (1.0 - tri[..., 1]) / step - 0.5
    c0 = np.maximum(np.ceil(col.min(axis=1)), 0).astype(np.int64)
    c1 = np.minimum(np.floor(col.max(axis=1)), res - 1).astype(np.int64)
    r0 = np.maximum(np.ceil(row.min(axis=1)), 0).astype(np.int64)
    r1 = np.minimum(np.floor(row.max(axis=1)), res - 1).astype(np.int64)

    ax, bx, cx = col.T
    ay, by, cy = row.T
    area = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
    # area 0: edge-on to the camera
    faces = np.flatnonzero((c0 <= c1) & (r0 <= r1) & ~degenerate & (area != 0.0))
    a = area[faces]
    # barycentrics as affine functions of (column, row): w = k0 + kc*col + kr*row
    coef = np.stack(
        [
            bx * cy - cx * by, by - cy, cx - bx,
            cx * ay - ax * cy, cy - ay, ax - cx,
        ],
        axis=1,
    )[faces] / a[:, None]
    boxes = np.stack([r0, r1, c0, c1], axis=1)[faces]
    _rasterize(faces, boxes, coef, np.ascontiguousarray(tri[faces, :, 2]), depth, owner)

    encoded = np.full((res, res, 3), 0.5)
    coverage = np.zeros((res, res), dtype=np.uint8)
    _shade(owner, np.ascontiguousarray(cam_normals), encoded, coverage)
    return NormalMapImage(encoded, coverage)


@njit(cache=True)
def _rasterize(faces, boxes, coef, zs, depth, owner):
    # ascending face order with a strict test: lower index wins exact ties
    for i in range(len(faces)):
        k = coef[i]
        for r in range(boxes[i, 0], boxes[i, 1] + 1):
            for c in range(boxes[i, 2], boxes[i, 3] + 1):
                w0 = k[0] + k[1] * c + k[2] * r
                w1 = k[3] + k[4] * c + k[5] * r
                w2 = 1.0 - w0 - w1
                if w0 >= 0 and w1 >= 0 and w2 >= 0:
                    z = w0 * zs[i, 0] + w1 * zs[i, 1] + w2 * zs[i, 2]
                    if z > depth[r, c]:
                        depth[r, c] = z
                        owner[r, c] = faces[i]


@njit(cache=True)
def _shade(owner, normals, encoded, coverage):
    for r in range(owner.shape[0]):
        for c in range(owner.shape[1]):
            f = owner[r, c]
            if f >= 0:
                coverage[r, c] = 1
                for j in range(3):
                    encoded[r, c, j] = (normals[f, j] + 1.0) / 2.0
