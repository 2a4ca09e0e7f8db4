"""F-score and Chamfer distance between point sets."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..mesh import TriangleMesh
from ..sampling import sample_uniform

DEFAULT_EVAL_POINTS = 1_000_000


def _check(points, name):
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or len(p) == 0:
        raise ValueError(f"{name} point set is empty")
    return p


def nearest_distances(src: np.ndarray, dst: np.ndarray, upper_bound: float = np.inf) -> np.ndarray:
    """Euclidean distance from each point of ``src`` to its nearest point in ``dst``.

    Distances beyond ``upper_bound`` may be reported as ``inf``.
    """
    d, _ = cKDTree(dst).query(src, k=1, distance_upper_bound=upper_bound)
    return d


def precision_recall(pred, gt, r: float) -> tuple[float, float]:
    pred, gt = _check(pred, "pred"), _check(gt, "gt")
    if not r > 0:
        raise ValueError("distance threshold must be positive")
    # the bound prunes the search; a distance of exactly r fails either way
    precision = float(np.mean(nearest_distances(pred, gt, r) < r))
    recall = float(np.mean(nearest_distances(gt, pred, r) < r))
    return precision, recall


def fscore(pred, gt, r: float = 0.01) -> float:
    """Harmonic mean of precision and recall at distance ``r`` (strict ``<``)."""
    p, rec = precision_recall(pred, gt, r)
    if p + rec == 0:
        return 0.0
    return 2 * p * rec / (p + rec)


def chamfer(pred, gt, mode: str = "symmetric") -> float:
    """Mean nearest-neighbour L2 distance.

    ``symmetric`` averages both directions with weight 1/2; ``pred-to-gt``
    only measures reconstructed points against the ground truth.
    """
    pred, gt = _check(pred, "pred"), _check(gt, "gt")
    forward = float(np.mean(nearest_distances(pred, gt)))
    if mode == "pred-to-gt":
        return forward
    if mode != "symmetric":
        raise ValueError(f"unknown chamfer mode {mode!r}")
    backward = float(np.mean(nearest_distances(gt, pred)))
    return 0.5 * forward + 0.5 * backward


def mesh_points(mesh: TriangleMesh, n: int = DEFAULT_EVAL_POINTS, seed: int = 0) -> np.ndarray:
    return sample_uniform(mesh, n, seed).positions
