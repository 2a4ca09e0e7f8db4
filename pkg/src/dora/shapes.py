"""Procedural shapes with exact occupancy: test fixtures and the toy training set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    subdivisions: int = 3

    def mesh(self) -> TriangleMesh:
        m = icosphere(self.subdivisions)
        return TriangleMesh(m.vertices * self.radius + np.asarray(self.center), m.faces)

    def occupancy(self, points: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(np.asarray(points) - np.asarray(self.center), axis=-1)
        return (d < self.radius).astype(np.float64)


@dataclass(frozen=True)
class BoxUnion:
    """Union of axis-aligned boxes given as ``(lo, hi)`` corner pairs.

    Boxes must not touch along edges only (that would make the boundary
    non-manifold); faces may be shared.
    """

    boxes: tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...]

    def occupancy(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        inside = np.zeros(len(p), dtype=bool)
        for lo, hi in self.boxes:
            inside |= np.all((p > np.asarray(lo)) & (p < np.asarray(hi)), axis=1)
        return inside.astype(np.float64)

    def mesh(self) -> TriangleMesh:
        return _box_union_mesh(self.boxes)


def box(lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0)) -> BoxUnion:
    return BoxUnion(((tuple(map(float, lo)), tuple(map(float, hi))),))


def cube(half: float = 1.0) -> TriangleMesh:
    """Cube ``[-half, half]^3`` as 8 vertices and 12 outward-wound triangles."""
    return box((-half,) * 3, (half,) * 3).mesh()


def bump_box(
    half_extents=(0.8, 0.8, 0.3),
    grid=(4, 4),
    bump_size: float = 0.14,
    bump_height: float = 0.1,
) -> BoxUnion:
    """A slab with a grid of square keys on its top face (keyboard-like)."""
    hx, hy, hz = half_extents
    boxes = [((-hx, -hy, -hz), (hx, hy, hz))]
    nx, ny = grid
    xs = np.linspace(-hx, hx, nx + 2)[1:-1]
    ys = np.linspace(-hy, hy, ny + 2)[1:-1]
    h = bump_size / 2
    for x in xs:
        for y in ys:
            boxes.append(((x - h, y - h, hz), (x + h, y + h, hz + bump_height)))
    return BoxUnion(tuple((tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in boxes))


def bump_box_dataset(n: int = 8, seed: int = 0) -> list[BoxUnion]:
    """Deterministic family of bump-grid boxes with varied layouts, all inside [-1, 1]^3."""
    rng = np.random.default_rng(seed)
    shapes = []
    for _ in range(n):
        hx, hy = rng.uniform(0.55, 0.85, size=2)
        hz = rng.uniform(0.15, 0.35)
        gx, gy = rng.integers(2, 5, size=2)
        size = rng.uniform(0.12, 0.2)
        height = rng.uniform(0.08, 0.16)
        shapes.append(bump_box((hx, hy, hz), (int(gx), int(gy)), size, height))
    return shapes


def _box_union_mesh(boxes) -> TriangleMesh:
    # voxelize on the rectilinear lattice spanned by all box planes, then
    # emit every inside/outside cell interface as two outward-wound triangles
    lo = np.array([b[0] for b in boxes], dtype=np.float64)
    hi = np.array([b[1] for b in boxes], dtype=np.float64)
    axes = [np.unique(np.concatenate([lo[:, k], hi[:, k]])) for k in range(3)]
    centers = [0.5 * (a[1:] + a[:-1]) for a in axes]
    cx, cy, cz = np.meshgrid(*centers, indexing="ij")
    c = np.stack([cx, cy, cz], axis=-1)
    inside = np.zeros(cx.shape, dtype=bool)
    for l, h in zip(lo, hi):
        inside |= np.all((c > l) & (c < h), axis=-1)
    padded = np.pad(inside, 1)

    shape = tuple(len(a) for a in axes)
    vid = -np.ones(shape, dtype=np.int64)
    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []

    def vertex(i, j, k):
        if vid[i, j, k] < 0:
            vid[i, j, k] = len(verts)
            verts.append((axes[0][i], axes[1][j], axes[2][k]))
        return int(vid[i, j, k])

    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        for idx in np.argwhere(inside):
            for side in (-1, 1):
                nb = idx + 1
                nb[axis] += side
                if padded[tuple(nb)]:
                    continue
                base = idx.copy()
                if side > 0:
                    base[axis] += 1
                corners = []
                for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    p = base.copy()
                    p[u] += du
                    p[v] += dv
                    corners.append(vertex(*p))
                # (u, v, axis) is a cyclic permutation of (x, y, z), so this
                # order is counter-clockwise seen from +axis
                if side < 0:
                    corners = corners[::-1]
                a, b, cc, d = corners
                faces.append((a, b, cc))
                faces.append((a, cc, d))
    return TriangleMesh(np.array(verts), np.array(faces))


def icosahedron() -> TriangleMesh:
    """Regular icosahedron with unit circumradius, outward winding."""
    t = (1.0 + 5.0 ** 0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return TriangleMesh(v, f)


def icosphere(subdivisions: int = 3) -> TriangleMesh:
    """Unit sphere by midpoint subdivision of the icosahedron."""
    base = icosahedron()
    verts = [tuple(p) for p in base.vertices]
    faces = [tuple(f) for f in base.faces.tolist()]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = (np.asarray(verts[a]) + np.asarray(verts[b])) / 2
                verts.append(tuple(p / np.linalg.norm(p)))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(verts), np.array(faces))


def plane_grid(n: int = 4, size: float = 1.0) -> TriangleMesh:
    """Flat ``n x n`` quad grid in the z=0 plane, triangulated, facing +z."""
    xs = np.linspace(-size, size, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b, c, d = a + (n + 1), a + (n + 1) + 1, a + 1
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, np.array(faces))
