"""Boundary extraction, exact distance transforms and signed distance maps."""

from __future__ import annotations

import numpy as np

from ._edt import squared_edt
from ._errors import EmptyMask, EmptyPointSet, NotBinary
from .volume import Spacing, VoxelVolume


def as_binary(mask) -> np.ndarray:
    """Boolean view of a {0, 1} array or volume; anything else is NotBinary."""
    data = mask.data if isinstance(mask, VoxelVolume) else np.asarray(mask)
    if data.dtype == bool:
        return data
    if data.size and not np.all((data == 0) | (data == 1)):
        raise NotBinary("mask values must be 0 or 1")
    return data.astype(bool)


def boundary_mask(mask) -> np.ndarray:
    """Foreground voxels with at least one background 6-neighbour.

    The region outside the array counts as background.
    """
    fg = as_binary(mask)
    padded = np.pad(fg, 1, constant_values=False)
    interior = padded.copy()
    for axis in range(3):
        interior[1:-1, 1:-1, 1:-1] &= np.roll(padded, 1, axis)[1:-1, 1:-1, 1:-1]
        interior[1:-1, 1:-1, 1:-1] &= np.roll(padded, -1, axis)[1:-1, 1:-1, 1:-1]
    return fg & ~interior[1:-1, 1:-1, 1:-1]


def boundary_voxels(mask) -> np.ndarray:
    """Indices ``(n, 3)`` of the boundary voxels, in C order."""
    return np.argwhere(boundary_mask(mask))


def _points_to_seeds(points, dims) -> np.ndarray:
    pts = np.asarray(points)
    if pts.dtype == bool and pts.shape == tuple(dims):
        return pts
    pts = pts.reshape(-1, 3).astype(np.int64) if pts.size else np.empty((0, 3), np.int64)
    seeds = np.zeros(dims, dtype=bool)
    if len(pts):
        if np.any(pts < 0) or np.any(pts >= np.asarray(dims)):
            raise ValueError("point index outside the grid")
        seeds[pts[:, 0], pts[:, 1], pts[:, 2]] = True
    return seeds


def edt(points, dims, spacing=1.0) -> VoxelVolume:
    """Exact distance (mm) from each voxel centre to the nearest point.

    ``points`` is an ``(n, 3)`` index array or a boolean array of shape ``dims``.
    """
    dims = tuple(int(n) for n in dims)
    spacing = Spacing.of(spacing)
    seeds = _points_to_seeds(points, dims)
    if not seeds.any():
        raise EmptyPointSet("edt needs at least one point")
    dist = np.sqrt(squared_edt(seeds, tuple(spacing)))
    return VoxelVolume(dist, spacing, kind="distance")


def signed_distance_map(mask, spacing=None) -> VoxelVolume:
    """Signed distance to the mask boundary: negative inside, 0 on it, positive outside.

    Magnitudes are exact centre-to-centre distances in mm to the nearest
    boundary voxel.
    """
    if isinstance(mask, VoxelVolume):
        spacing = mask.spacing if spacing is None else Spacing.of(spacing)
        origin = mask.origin
    else:
        spacing = Spacing.of(1.0 if spacing is None else spacing)
        origin = (0.0, 0.0, 0.0)
    fg = as_binary(mask)
    edge = boundary_mask(fg)
    if not edge.any():
        raise EmptyMask("signed distance map needs a non-empty mask")
    dist = np.sqrt(squared_edt(edge, tuple(spacing)))
    sdm = np.where(fg, -dist, dist)
    sdm[edge] = 0.0
    return VoxelVolume(sdm, spacing, origin, kind="distance")


def dilate(mask, radius_mm: float, spacing=1.0) -> np.ndarray:
    """Voxels within ``radius_mm`` (centre to centre) of the mask."""
    fg = as_binary(mask)
    if radius_mm <= 0 or not fg.any():
        return fg.copy()
    return squared_edt(fg, tuple(Spacing.of(spacing))) <= radius_mm * radius_mm + 1e-9


def distance_to(mask, spacing=1.0) -> np.ndarray:
    """Unsigned distance (mm) to the mask, 0 inside; ``inf`` for an empty mask."""
    fg = as_binary(mask)
    return np.sqrt(squared_edt(fg, tuple(Spacing.of(spacing))))
