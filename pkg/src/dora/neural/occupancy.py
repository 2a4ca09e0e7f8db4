"""Occupancy supervision: query sampling and inside/outside oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..mesh import MeshError, TriangleMesh, check_watertight
from ..sampling import sample_uniform

# generic direction: avoids grazing axis-aligned edges and faces of box fixtures
RAY_DIRECTION = np.array([0.5773502691896258, 0.5804, 0.5742])
RAY_DIRECTION = RAY_DIRECTION / np.linalg.norm(RAY_DIRECTION)


@dataclass
class OccupancyBatch:
    queries: np.ndarray
    labels: np.ndarray
    predicted: np.ndarray | None = None

    def __post_init__(self):
        self.queries = np.asarray(self.queries, dtype=np.float64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if len(self.queries) != len(self.labels):
            raise ValueError("queries and labels differ in length")
        if not np.isin(self.labels, (0.0, 1.0)).all():
            raise ValueError("occupancy labels must be 0 or 1")
        if self.predicted is not None and len(self.predicted) != len(self.labels):
            raise ValueError("predictions and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)


def ray_parity(mesh: TriangleMesh, points: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Inside test by counting crossings of a fixed ray (Moller-Trumbore)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    pvec = np.cross(RAY_DIRECTION, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-15
    v0, e1, e2, pvec, det = v0[ok], e1[ok], e2[ok], pvec[ok], det[ok]
    inv = 1.0 / det
    out = np.zeros(len(points), dtype=np.float64)
    step = max(1, chunk * 64 // max(len(v0), 1))
    for s in range(0, len(points), step):
        p = points[s : s + step]
        tvec = p[:, None, :] - v0[None]
        u = np.einsum("qtk,tk->qt", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None])
        v = np.einsum("k,qtk->qt", RAY_DIRECTION, qvec) * inv
        t = np.einsum("qtk,tk->qt", qvec, e2) * inv
        hit = (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        out[s : s + step] = hit.sum(axis=1) % 2
    return out


def occupancy_oracle(mesh: TriangleMesh, analytic: Callable | None = None) -> Callable:
    """The analytic inside test when given, else ray parity on a watertight mesh."""
    if analytic is not None:
        return analytic
    report = check_watertight(mesh)
    if not report.is_watertight:
        raise MeshError(
            f"occupancy needs a watertight mesh or an analytic shape "
            f"({report.boundary_edges} boundary, {report.nonmanifold_edges} non-manifold edges)"
        )
    return lambda pts: ray_parity(mesh, pts)


def sample_queries(
    mesh: TriangleMesh,
    n_near: int,
    n_uniform: int,
    sigma: float = 0.02,
    seed: int = 0,
    occupancy: Callable | None = None,
) -> OccupancyBatch:
    """Near-surface points (surface samples pushed along the normal by N(0, sigma))
    followed by uniform points in [-1, 1]^3, labelled by the exact oracle."""
    oracle = occupancy_oracle(mesh, occupancy)
    rng = np.random.default_rng([seed, 0x51])
    parts = []
    if n_near:
        surf = sample_uniform(mesh, n_near, int(rng.integers(2**31)))
        offset = rng.normal(0.0, sigma, size=(n_near, 1))
        parts.append(surf.positions + offset * surf.normals)
    if n_uniform:
        parts.append(rng.uniform(-1.0, 1.0, size=(n_uniform, 3)))
    q = np.clip(np.concatenate(parts), -1.0, 1.0) if parts else np.zeros((0, 3))
    return OccupancyBatch(q, oracle(q))
