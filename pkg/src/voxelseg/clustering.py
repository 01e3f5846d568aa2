"""Centroid localisation from predicted offsets.

Foreground voxels vote for the voxel their offset points at; density peaks
of the vote map (high count, far from any denser voxel) become centroids, and
every foreground voxel joins its nearest centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ._errors import AllZeroDensity, EmptyCentroids, ShapeMismatch
from .sdt import as_binary
from .volume import VoxelVolume

DEFAULT_DELTA_MIN = 4.0
DEFAULT_RHO_FLOOR = 10
DEFAULT_RHO_FRACTION = 0.2

_BRUTE_FORCE_LIMIT = 4096


@dataclass(frozen=True)
class Centroid:
    position: tuple
    rho: int
    delta: float

    def to_json(self) -> dict:
        return {"pos_mm": [float(v) for v in self.position], "rho": int(self.rho), "delta_mm": float(self.delta)}


@dataclass
class CentroidSet:
    """Centroids sorted by descending density."""

    centroids: list = field(default_factory=list)

    def __len__(self):
        return len(self.centroids)

    def __iter__(self):
        return iter(self.centroids)

    def __getitem__(self, i):
        return self.centroids[i]

    @property
    def positions(self) -> np.ndarray:
        if not self.centroids:
            return np.empty((0, 3))
        return np.array([c.position for c in self.centroids], dtype=np.float64)

    @classmethod
    def from_positions(cls, positions) -> "CentroidSet":
        return cls([Centroid(tuple(float(v) for v in p), 0, 0.0) for p in np.asarray(positions, float).reshape(-1, 3)])

    def to_json(self) -> list:
        return [c.to_json() for c in self.centroids]

    @classmethod
    def from_json(cls, items) -> "CentroidSet":
        return cls([Centroid(tuple(float(v) for v in d["pos_mm"]), int(d.get("rho", 0)), float(d.get("delta_mm", 0.0)))
                    for d in items])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CentroidSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def vote_density(offsets: VoxelVolume, fg_mask) -> VoxelVolume:
    """Count, per voxel, the foreground voxels whose offset lands there.

    A vote lands on ``round((position + offset - origin) / spacing)`` with
    halves rounded up; votes outside the grid are dropped.
    """
    fg = as_binary(fg_mask)
    if offsets.kind != "offset":
        raise ValueError("offsets must be an offset volume")
    if fg.shape != offsets.dims:
        raise ShapeMismatch(f"offsets {offsets.dims} vs mask {fg.shape}")
    if isinstance(fg_mask, VoxelVolume) and (fg_mask.spacing != offsets.spacing):
        raise ShapeMismatch("offsets and mask spacing differ")
    dims = np.asarray(offsets.dims)
    counts = np.zeros(offsets.size, dtype=np.int64)
    idx = np.argwhere(fg)
    if len(idx):
        origin = np.asarray(offsets.origin)
        sp = offsets.spacing.as_array()
        pos = origin + idx * sp + offsets.data[fg].astype(np.float64)
        vote = np.floor((pos - origin) / sp + 0.5)
        ok = np.all((vote >= 0) & (vote < dims), axis=1)
        vote = vote[ok].astype(np.int64)
        flat = np.ravel_multi_index(vote.T, offsets.dims)
        counts = np.bincount(flat, minlength=offsets.size)
    density = counts.reshape(offsets.dims).astype(np.uint32)
    return VoxelVolume(density, offsets.spacing, offsets.origin, kind="intensity")


def _rank_order(idx: np.ndarray, rho: np.ndarray) -> np.ndarray:
    # descending density, then ascending (z, y, x)
    return np.lexsort((idx[:, 0], idx[:, 1], idx[:, 2], -rho))


def _sq_dist(a: np.ndarray, b: np.ndarray, sp: np.ndarray) -> np.ndarray:
    d = (a[:, None, :] - b[None, :, :]).astype(np.float64) * sp
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def _delta_brute(idx: np.ndarray, sp: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Squared distance from each ranked point to the nearest earlier-ranked one."""
    n = len(idx)
    out = np.full(n, np.inf)
    for a in range(1, n, chunk):
        b = min(n, a + chunk)
        d2 = _sq_dist(idx[a:b], idx[:b], sp)
        later = np.arange(b)[None, :] >= np.arange(a, b)[:, None]
        d2[later] = np.inf
        out[a:b] = d2.min(axis=1)
    return out


def _delta_tree(idx: np.ndarray, sp: np.ndarray) -> np.ndarray:
    n = len(idx)
    tree = cKDTree(idx * sp)
    out = np.full(n, np.inf)
    todo = np.arange(1, n)
    k = 16
    while len(todo):
        kk = min(k, n)
        _, nbr = tree.query(idx[todo] * sp, k=kk)
        nbr = nbr.reshape(len(todo), kk)
        earlier = nbr < todo[:, None]
        found = earlier.any(axis=1)
        for row in np.flatnonzero(found):
            i = todo[row]
            cand = nbr[row][earlier[row]]
            out[i] = _sq_dist(idx[i:i + 1], idx[cand], sp).min()
        todo = todo[~found]
        if kk == n:
            break
        k *= 4
    return out


def compute_rho_delta(density: VoxelVolume):
    """Ranked nonzero voxels with their density and separation (mm).

    Returns ``(idx, rho, delta)`` in rank order.  The top-ranked voxel gets the
    physical grid diagonal as its separation.
    """
    data = np.asarray(density.data)
    idx = np.argwhere(data > 0)
    if len(idx) == 0:
        raise AllZeroDensity("density map has no votes")
    rho = data[idx[:, 0], idx[:, 1], idx[:, 2]].astype(np.int64)
    order = _rank_order(idx, rho)
    idx, rho = idx[order], rho[order]
    sp = density.spacing.as_array()
    d2 = _delta_brute(idx, sp) if len(idx) <= _BRUTE_FORCE_LIMIT else _delta_tree(idx, sp)
    delta = np.sqrt(d2)
    delta[0] = float(np.linalg.norm(np.asarray(density.dims) * sp))
    return idx, rho, delta


def default_rho_min(max_rho: int) -> float:
    return max(DEFAULT_RHO_FLOOR, DEFAULT_RHO_FRACTION * max_rho)


def density_peaks(density: VoxelVolume, rho_min: float | None = None,
                  delta_min: float = DEFAULT_DELTA_MIN) -> CentroidSet:
    """Voxels with ``rho >= rho_min`` and ``delta >= delta_min``, densest first.

    Equal densities are ranked by ascending (z, y, x), so a plateau of equal
    counts yields a single peak.
    """
    idx, rho, delta = compute_rho_delta(density)
    if rho_min is None:
        rho_min = default_rho_min(int(rho[0]))
    keep = (rho >= rho_min) & (delta >= delta_min)
    out = []
    for i in np.flatnonzero(keep):
        pos = density.index_to_phys(idx[i])
        out.append(Centroid(tuple(float(v) for v in pos), int(rho[i]), float(delta[i])))
    return CentroidSet(out)


def assign_instances(fg_mask, centroids, spacing=None, origin=None) -> VoxelVolume:
    """Label each foreground voxel with its nearest centroid (1-based, ties to the lower id)."""
    if isinstance(fg_mask, VoxelVolume):
        spacing = fg_mask.spacing if spacing is None else spacing
        origin = fg_mask.origin if origin is None else origin
    fg = as_binary(fg_mask)
    ref = VoxelVolume(np.zeros(fg.shape, np.uint16), spacing if spacing is not None else 1.0,
                      origin if origin is not None else (0.0, 0.0, 0.0), kind="label")
    pos = centroids.positions if isinstance(centroids, CentroidSet) else np.asarray(centroids, float).reshape(-1, 3)
    if len(pos) == 0:
        raise EmptyCentroids("need at least one centroid")
    if len(pos) > 65535:
        raise ValueError("too many centroids for a 16-bit label volume")
    idx = np.argwhere(fg)
    labels = np.zeros(fg.shape, dtype=np.uint16)
    chunk = 65536
    for a in range(0, len(idx), chunk):
        part = idx[a:a + chunk]
        phys = ref.index_to_phys(part)
        d = (phys[:, None, :] - pos[None, :, :])
        d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
        labels[part[:, 0], part[:, 1], part[:, 2]] = np.argmin(d2, axis=1) + 1
    return ref.with_data(labels)


def oracle_offsets(labels: VoxelVolume, centroids) -> VoxelVolume:
    """Offsets pointing every label-k voxel at centroid k (1-based)."""
    pos = np.asarray(centroids, dtype=np.float64).reshape(-1, 3)
    data = np.zeros(labels.dims + (3,), dtype=np.float64)
    lab = np.asarray(labels.data)
    idx = np.argwhere(lab > 0)
    if len(idx):
        k = lab[idx[:, 0], idx[:, 1], idx[:, 2]].astype(np.int64) - 1
        data[idx[:, 0], idx[:, 1], idx[:, 2]] = pos[k] - labels.index_to_phys(idx)
    return VoxelVolume(data, labels.spacing, labels.origin, kind="offset")
