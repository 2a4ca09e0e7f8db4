"""Sharp Normal Error: normal-map MSE restricted to dilated Canny edges of the ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mesh import TriangleMesh
from .edges import CANNY_HIGH, CANNY_LOW, DILATE_RADIUS, canny, dilate, luminance
from .render import DEFAULT_RES, CameraView, NormalMapImage, default_views, render_normal_map


class EmptyMaskError(ValueError):
    """Every view produced an empty edge mask, so SNE is undefined."""


@dataclass
class SneResult:
    value: float
    per_view: list[float | None]
    masks: list[np.ndarray] = field(default_factory=list, repr=False)
    gt_maps: list[NormalMapImage] = field(default_factory=list, repr=False)
    pred_maps: list[NormalMapImage] = field(default_factory=list, repr=False)


def edge_mask(
    gt_map: NormalMapImage,
    low: float = CANNY_LOW,
    high: float = CANNY_HIGH,
    dilate_radius: int = DILATE_RADIUS,
    dilate_iterations: int = 1,
) -> np.ndarray:
    return dilate(canny(luminance(gt_map.encoded), low, high), dilate_radius, dilate_iterations)


def masked_mse(gt_map: NormalMapImage, pred_map: NormalMapImage, mask: np.ndarray) -> float:
    sel = mask.astype(bool)
    diff = gt_map.encoded[sel] - pred_map.encoded[sel]
    return float(np.mean(diff**2))


def sne_details(
    gt_mesh: TriangleMesh,
    pred_mesh: TriangleMesh,
    views: list[CameraView] | None = None,
    res: int = DEFAULT_RES,
    low: float = CANNY_LOW,
    high: float = CANNY_HIGH,
    dilate_radius: int = DILATE_RADIUS,
    dilate_iterations: int = 1,
    keep_images: bool = False,
) -> SneResult:
    views = default_views() if views is None else views
    per_view: list[float | None] = []
    result = SneResult(0.0, per_view)
    for view in views:
        gt_map = render_normal_map(gt_mesh, view, res)
        mask = edge_mask(gt_map, low, high, dilate_radius, dilate_iterations)
        # the prediction only matters under a nonempty mask
        pred_map = render_normal_map(pred_mesh, view, res) if keep_images or mask.any() else None
        per_view.append(masked_mse(gt_map, pred_map, mask) if mask.any() else None)
        if keep_images:
            result.masks.append(mask)
            result.gt_maps.append(gt_map)
            result.pred_maps.append(pred_map)
    valid = [v for v in per_view if v is not None]
    if not valid:
        raise EmptyMaskError("all views have empty edge masks")
    result.value = float(np.mean(valid))
    return result


def sne(
    gt_mesh: TriangleMesh,
    pred_mesh: TriangleMesh,
    views: list[CameraView] | None = None,
    res: int = DEFAULT_RES,
    **kwargs,
) -> float:
    """Mean over views (with a nonempty mask) of the masked encoded-normal MSE."""
    return sne_details(gt_mesh, pred_mesh, views, res, **kwargs).value
