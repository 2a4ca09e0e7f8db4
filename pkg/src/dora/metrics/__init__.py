from .edges import CANNY_HIGH, CANNY_LOW, canny, dilate, luminance
from .pointsets import chamfer, fscore, mesh_points, precision_recall
from .render import CameraView, NormalMapImage, default_views, render_normal_map
from .sne import EmptyMaskError, sne, sne_details

__all__ = [
    "CANNY_HIGH",
    "CANNY_LOW",
    "CameraView",
    "EmptyMaskError",
    "NormalMapImage",
    "canny",
    "chamfer",
    "default_views",
    "dilate",
    "fscore",
    "luminance",
    "mesh_points",
    "precision_recall",
    "render_normal_map",
    "sne",
    "sne_details",
]
