"""Dense voxel containers with physical geometry.

Arrays are indexed ``data[x, y, z]`` in memory.  On disk the element order is
x-fastest (Fortran order), little-endian, described by a ``.vjson`` sidecar
next to a ``.raw`` blob.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from ._errors import BadPercentiles, EmptyVolume, InterpMismatch, ShapeMismatch

KINDS = ("intensity", "label", "probability", "distance", "offset")
LABEL_MAX = 65535

_DTYPES = {"f32": "<f4", "u16": "<u2", "u8": "u1"}
_DEFAULT_DTYPE = {
    "intensity": "f32",
    "label": "u16",
    "probability": "f32",
    "distance": "f32",
    "offset": "f32",
}


@dataclass(frozen=True)
class Spacing:
    """Millimetres per voxel along x, y, z."""

    sx: float
    sy: float
    sz: float

    def __post_init__(self):
        for v in (self.sx, self.sy, self.sz):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"spacing components must be positive and finite, got {tuple(self)}")

    @classmethod
    def of(cls, value: Union["Spacing", float, Sequence[float]]) -> "Spacing":
        if isinstance(value, Spacing):
            return value
        if np.isscalar(value):
            v = float(value)
            return cls(v, v, v)
        sx, sy, sz = (float(v) for v in value)
        return cls(sx, sy, sz)

    def __iter__(self) -> Iterator[float]:
        return iter((self.sx, self.sy, self.sz))

    def as_array(self) -> np.ndarray:
        return np.array([self.sx, self.sy, self.sz], dtype=np.float64)


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive voxel index box."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if any(a > b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"lo {self.lo} must be <= hi {self.hi}")

    @property
    def size(self) -> tuple:
        return tuple(int(b - a + 1) for a, b in zip(self.lo, self.hi))

    def slices(self) -> tuple:
        return tuple(slice(int(a), int(b) + 1) for a, b in zip(self.lo, self.hi))

    def clip(self, dims) -> "BoundingBox":
        lo = tuple(int(max(0, a)) for a in self.lo)
        hi = tuple(int(min(n - 1, b)) for b, n in zip(self.hi, dims))
        return BoundingBox(lo, hi)

    @classmethod
    def of_mask(cls, mask: np.ndarray, margin: int = 0) -> "BoundingBox":
        idx = np.argwhere(mask)
        if idx.size == 0:
            raise EmptyVolume("mask has no foreground voxels")
        lo = idx.min(axis=0) - margin
        hi = idx.max(axis=0) + margin
        return cls(tuple(int(v) for v in lo), tuple(int(v) for v in hi)).clip(mask.shape)


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    """A dense 3D grid plus its physical geometry.

    ``origin`` is the physical position (mm) of the centre of voxel (0, 0, 0);
    voxel ``i`` sits at ``origin + i * spacing``.
    """

    data: np.ndarray
    spacing: Spacing = field(default_factory=lambda: Spacing(1.0, 1.0, 1.0))
    origin: tuple = (0.0, 0.0, 0.0)
    kind: str = "intensity"

    def __post_init__(self):
        object.__setattr__(self, "spacing", Spacing.of(self.spacing))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if self.kind not in KINDS:
            raise ValueError(f"unknown volume kind {self.kind!r}")
        data = np.asarray(self.data)
        want = 4 if self.kind == "offset" else 3
        if data.ndim != want or (want == 4 and data.shape[-1] != 3):
            raise ValueError(f"{self.kind} volume needs a {'(nx, ny, nz, 3)' if want == 4 else '3D'} array, got {data.shape}")
        if self.kind == "label":
            if data.size and (data.min() < 0 or data.max() > LABEL_MAX):
                raise ValueError("label values must lie in [0, 65535]")
        elif self.kind == "probability":
            if data.size and (np.nanmin(data) < 0 or np.nanmax(data) > 1):
                raise ValueError("probability values must lie in [0, 1]")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.data.shape[:3])

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def with_data(self, data: np.ndarray, kind: str | None = None, **changes) -> "VoxelVolume":
        return replace(self, data=data, kind=kind or self.kind, **changes)

    def index_to_phys(self, index) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(index, dtype=np.float64) * self.spacing.as_array()

    def phys_to_index(self, point) -> np.ndarray:
        """Nearest voxel index (round half up) of a physical point."""
        rel = (np.asarray(point, dtype=np.float64) - np.asarray(self.origin)) / self.spacing.as_array()
        return np.floor(rel + 0.5).astype(np.int64)

    def contains_point(self, point) -> bool:
        rel = (np.asarray(point, dtype=np.float64) - np.asarray(self.origin)) / self.spacing.as_array()
        return bool(np.all(rel >= -0.5) and np.all(rel < np.asarray(self.dims) - 0.5))

    def voxel_centers(self) -> np.ndarray:
        """Physical coordinates of every voxel centre, shape (nx, ny, nz, 3)."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def same_grid(self, other: "VoxelVolume") -> bool:
        return self.dims == other.dims and self.spacing == other.spacing and np.allclose(self.origin, other.origin)


def _as_volume(vol) -> VoxelVolume:
    if isinstance(vol, VoxelVolume):
        return vol
    return VoxelVolume(np.asarray(vol))


def _lerp_axis(data: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    # a + f * (b - a) keeps constant runs exact
    n = data.shape[axis]
    i0 = np.floor(coords).astype(np.intp)
    i1 = np.minimum(i0 + 1, n - 1)
    shape = [1] * data.ndim
    shape[axis] = len(coords)
    f = (coords - i0).reshape(shape)
    a = np.take(data, i0, axis=axis)
    return a + f * (np.take(data, i1, axis=axis) - a)


def resample(vol: VoxelVolume, target, interp: str = "trilinear") -> VoxelVolume:
    """Resample onto a grid with spacing ``target``.

    Output voxel ``i`` keeps the origin and is centred at ``origin + i * target``,
    sampled from input continuous index ``i * target / spacing``.  Samples past
    the last input voxel replicate the edge.
    """
    vol = _as_volume(vol)
    target = Spacing.of(target)
    if vol.size == 0:
        raise EmptyVolume("cannot resample an empty volume")
    if interp not in ("nearest", "trilinear"):
        raise ValueError(f"interp must be 'nearest' or 'trilinear', got {interp!r}")
    if interp == "trilinear" and vol.kind == "label":
        raise InterpMismatch("label volumes must be resampled with nearest interpolation")
    if target == vol.spacing:
        return vol.with_data(vol.data.copy())

    src = vol.spacing.as_array()
    tgt = target.as_array()
    dims = np.asarray(vol.dims)
    out_dims = tuple(int(math.ceil(n * s / t - 1e-9)) for n, s, t in zip(dims, src, tgt))
    coords = [np.clip(np.arange(m) * t / s, 0, n - 1) for m, s, t, n in zip(out_dims, src, tgt, dims)]

    if interp == "nearest":
        idx = [np.floor(c + 0.5).astype(np.intp) for c in coords]
        out = vol.data[np.ix_(*idx)]
        return vol.with_data(out, spacing=target)

    out = vol.data.astype(np.float64)
    for axis, c in enumerate(coords):
        out = _lerp_axis(out, c, axis)
    if vol.kind == "probability":
        out = np.clip(out, 0.0, 1.0)
    return vol.with_data(out.astype(vol.data.dtype, copy=False) if vol.data.dtype.kind == "f" else out, spacing=target)


def patch_bounds(center, size) -> tuple:
    """Start index and exclusive end of a ``size`` window centred on ``center``."""
    center = np.asarray(center, dtype=np.int64)
    size = np.asarray(size, dtype=np.int64)
    lo = center - size // 2
    return lo, lo + size


def extract_patch(vol: VoxelVolume, center, size, pad_value=0) -> VoxelVolume:
    """Copy a ``size`` window centred on voxel ``center``; outside is ``pad_value``.

    The window starts at ``center - size // 2``.  The returned volume's origin
    is shifted so every patch voxel keeps its physical position.
    """
    vol = _as_volume(vol)
    size = tuple(int(s) for s in size)
    if len(size) != 3 or any(s <= 0 for s in size):
        raise ValueError(f"patch size must be three positive integers, got {size}")
    lo, hi = patch_bounds(center, size)
    dims = np.asarray(vol.dims)
    src_lo = np.maximum(lo, 0)
    src_hi = np.minimum(hi, dims)
    out = np.full(size + vol.data.shape[3:], pad_value, dtype=vol.data.dtype)
    if np.all(src_hi > src_lo):
        dst_lo = src_lo - lo
        dst_hi = src_hi - lo
        out[tuple(slice(a, b) for a, b in zip(dst_lo, dst_hi))] = \
            vol.data[tuple(slice(a, b) for a, b in zip(src_lo, src_hi))]
    origin = vol.index_to_phys(lo)
    return vol.with_data(out, origin=tuple(origin))


def paste_patch(target: np.ndarray, patch: np.ndarray, lo) -> None:
    """Write the in-bounds part of ``patch`` (window start ``lo``) into ``target``."""
    lo = np.asarray(lo, dtype=np.int64)
    hi = lo + np.asarray(patch.shape[:3])
    dims = np.asarray(target.shape[:3])
    src_lo = np.maximum(lo, 0)
    src_hi = np.minimum(hi, dims)
    if np.any(src_hi <= src_lo):
        return
    target[tuple(slice(a, b) for a, b in zip(src_lo, src_hi))] = \
        patch[tuple(slice(a, b) for a, b in zip(src_lo - lo, src_hi - lo))]


def normalize_intensity(vol: VoxelVolume, p_lo: float = 0.5, p_hi: float = 99.5, mask=None) -> VoxelVolume:
    """Clip to the ``[p_lo, p_hi]`` percentile range and rescale to ``[0, 1]``.

    With ``mask``, percentiles come from the masked voxels only and everything
    outside the mask is set to 0.
    """
    vol = _as_volume(vol)
    if not (0 <= p_lo < p_hi <= 100):
        raise BadPercentiles(f"need 0 <= p_lo < p_hi <= 100, got {p_lo}, {p_hi}")
    if vol.size == 0:
        raise EmptyVolume("cannot normalize an empty volume")
    data = vol.data.astype(np.float64)
    sample = data if mask is None else data[np.asarray(mask, bool)]
    if sample.size == 0:
        return vol.with_data(np.zeros(data.shape, dtype=np.float32), kind="probability")
    lo, hi = np.percentile(sample, [p_lo, p_hi])
    if hi <= lo:
        out = np.zeros(data.shape, dtype=np.float32)
    else:
        out = ((np.clip(data, lo, hi) - lo) / (hi - lo)).astype(np.float32)
    if mask is not None:
        out[~np.asarray(mask, bool)] = 0
    return vol.with_data(out, kind="probability")


# -- file format ---------------------------------------------------------------

def _stem(path) -> Path:
    p = Path(path)
    if p.suffix in (".vjson", ".raw"):
        p = p.with_suffix("")
    return p


def save_volume(vol: VoxelVolume, path, dtype: str | None = None) -> Path:
    """Write ``<path>.vjson`` + ``<path>.raw``; returns the sidecar path."""
    stem = _stem(path)
    dtype = dtype or _DEFAULT_DTYPE[vol.kind]
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}")
    if vol.kind in ("label",) and dtype == "f32":
        raise ValueError("label volumes are stored as integers")
    data = vol.data
    if vol.kind == "offset":
        # interleaved (dx, dy, dz) per voxel, voxels x-fastest
        flat = np.transpose(data, (3, 0, 1, 2)).ravel(order="F")
    else:
        flat = data.ravel(order="F")
    if dtype in ("u16", "u8") and flat.size and (flat.min() < 0 or flat.max() > np.iinfo(_DTYPES[dtype]).max):
        raise ValueError(f"values do not fit in {dtype}")
    raw = np.ascontiguousarray(flat.astype(_DTYPES[dtype]))
    meta = {
        "dims": list(vol.dims),
        "spacing_mm": [float(v) for v in vol.spacing],
        "origin_mm": [float(v) for v in vol.origin],
        "kind": vol.kind,
        "dtype": dtype,
        "order": "x-fastest",
        "endian": "little",
    }
    stem.parent.mkdir(parents=True, exist_ok=True)
    sidecar = stem.with_suffix(".vjson")
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    with open(stem.with_suffix(".raw"), "wb") as fh:
        fh.write(raw.tobytes())
    return sidecar


def load_volume(path) -> VoxelVolume:
    stem = _stem(path)
    with open(stem.with_suffix(".vjson")) as fh:
        meta = json.load(fh)
    if meta.get("order", "x-fastest") != "x-fastest" or meta.get("endian", "little") != "little":
        raise ValueError("only x-fastest little-endian volumes are supported")
    dims = tuple(int(n) for n in meta["dims"])
    kind = meta["kind"]
    raw = np.fromfile(stem.with_suffix(".raw"), dtype=_DTYPES[meta["dtype"]])
    ncomp = 3 if kind == "offset" else 1
    if raw.size != int(np.prod(dims)) * ncomp:
        raise ValueError(f"{stem}.raw holds {raw.size} elements, expected {int(np.prod(dims)) * ncomp}")
    if kind == "offset":
        data = np.transpose(raw.reshape((3,) + dims, order="F"), (1, 2, 3, 0))
    else:
        data = raw.reshape(dims, order="F")
    data = np.ascontiguousarray(data.astype(data.dtype.newbyteorder("=")))
    return VoxelVolume(data, Spacing.of(meta["spacing_mm"]), tuple(meta["origin_mm"]), kind)


def volume_exists(path) -> bool:
    stem = _stem(path)
    return os.path.exists(stem.with_suffix(".vjson")) and os.path.exists(stem.with_suffix(".raw"))
