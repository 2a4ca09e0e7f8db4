"""Mesh extraction from an occupancy field."""

from __future__ import annotations

from typing import Callable

import numpy as np
from skimage import measure

from ..mesh import TriangleMesh

ISO_LEVEL = 0.5


class EmptySurfaceError(ValueError):
    """The occupancy grid is entirely inside or entirely outside."""


def grid_points(res: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, res)
    g = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)


def extract_surface(
    occupancy: Callable[[np.ndarray], np.ndarray], grid_res: int = 64, interpolation: str = "midpoint"
) -> TriangleMesh:
    """Marching cubes on a regular grid over [-1, 1]^3 at level 0.5.

    With ``midpoint`` the field is thresholded first, so every vertex lands
    on the midpoint of its grid edge; ``linear`` interpolates the raw field.
    A one-cell outside border closes surfaces cut by the box.
    """
    if grid_res < 16:
        raise ValueError("grid_res must be at least 16")
    occ = np.asarray(occupancy(grid_points(grid_res)), dtype=np.float64).reshape((grid_res,) * 3)
    inside = occ > ISO_LEVEL
    if inside.all() or not inside.any():
        raise EmptySurfaceError("occupancy grid has no inside/outside transition")
    if interpolation == "midpoint":
        field = inside.astype(np.float64)
    elif interpolation == "linear":
        field = occ
    else:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    field = np.pad(field, 1)
    verts, faces, _, _ = measure.marching_cubes(field, ISO_LEVEL, allow_degenerate=False)
    step = 2.0 / (grid_res - 1)
    verts = (verts - 1.0) * step - 1.0
    # skimage winds faces clockwise seen from the low side; flip to outward CCW
    faces = faces[:, ::-1]
    return TriangleMesh(verts, faces)


def extract_mesh(model, z, grid_res: int = 64, interpolation: str = "midpoint", chunk: int = 32768) -> TriangleMesh:
    """Decode one latent code (1, N_s, C) on the grid and extract its surface."""
    import torch

    model.eval()
    with torch.no_grad():
        latents = model.decode_latents(z)

        def occ(points):
            out = []
            for s in range(0, len(points), chunk):
                q = torch.as_tensor(points[s : s + chunk], dtype=latents.dtype)[None]
                out.append(model.query_occupancy(latents, q)[0].numpy())
            return np.concatenate(out)

        return extract_surface(occ, grid_res, interpolation)
