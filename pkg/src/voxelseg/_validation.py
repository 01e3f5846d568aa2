"""Input checks shared by the estimator wrappers."""

import numpy as np

from ._errors import ShapeMismatch
from .volume import VoxelVolume


def check_volume(X, kind=None, spacing=None) -> VoxelVolume:
    """Coerce ``X`` to a :class:`VoxelVolume`, optionally of a given kind."""
    if isinstance(X, VoxelVolume):
        vol = X
    else:
        arr = np.asarray(X)
        if arr.ndim not in (3, 4):
            raise ValueError(f"expected a 3D volume, got an array of shape {arr.shape}")
        vol = VoxelVolume(arr, 1.0 if spacing is None else spacing, kind=kind or ("offset" if arr.ndim == 4 else "intensity"))
    if kind is not None and vol.kind != kind:
        if kind == "label" and vol.kind in ("intensity", "probability"):
            data = np.asarray(vol.data)
            if not np.all(data == np.round(data)):
                raise ValueError("label data must be integral")
            return vol.with_data(data.astype(np.uint16), kind="label")
        raise ValueError(f"expected a {kind} volume, got {vol.kind}")
    return vol


def check_same_grid(a: VoxelVolume, b: VoxelVolume) -> None:
    if a.dims != b.dims:
        raise ShapeMismatch(f"volumes differ in size: {a.dims} vs {b.dims}")
    if a.spacing != b.spacing:
        raise ShapeMismatch(f"volumes differ in spacing: {tuple(a.spacing)} vs {tuple(b.spacing)}")
