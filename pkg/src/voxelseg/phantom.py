"""Synthetic dental-arch phantoms with exact per-tooth ground truth.

Teeth sit along the front of an elliptical arch.  Each tooth is a smooth
union of a superellipsoid crown and a tapered root capsule, oriented with the
arch tangent.  Labels come from the crisp geometry; the image is composited
(tooth over bone over background), blurred and given Gaussian noise.

Randomness comes from a Philox counter-based generator keyed by the seed, so
the same config gives the same bytes on every platform.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, cKDTree

from ._edt import squared_edt
from ._errors import ConfigOverlap, InvalidConfig
from .sdt import boundary_mask, dilate
from .volume import Spacing, VoxelVolume, save_volume


@dataclass(frozen=True)
class PhantomConfig:
    tooth_count: int = 14
    arch_semi_axes_mm: tuple = (26.0, 22.0)
    arch_extension_rad: float = 0.35
    crown_radius_mm: tuple = (2.0, 2.6)
    crown_depth_ratio: tuple = (0.8, 0.95)
    crown_half_height_mm: tuple = (2.0, 2.6)
    root_length_mm: tuple = (4.0, 6.0)
    exponent: tuple = (2.0, 3.0)
    blend_mm: float = 0.6
    gap_mm: float = 0.6
    background_level: float = 0.0
    bone_level: float = 0.35
    tooth_level: float = 0.85
    blur_sigma_mm: float = 0.4
    noise_sigma: float = 0.03
    spacing_mm: float = 0.4
    margin_mm: float = 3.0
    grid_shape: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.tooth_count) < 1:
            raise InvalidConfig("tooth_count must be >= 1")
        if self.gap_mm < 0:
            raise InvalidConfig("gap_mm must be >= 0")
        positives = [self.spacing_mm, self.blend_mm, *self.arch_semi_axes_mm]
        for rng in (self.crown_radius_mm, self.crown_depth_ratio, self.crown_half_height_mm,
                    self.root_length_mm, self.exponent):
            if len(rng) != 2 or rng[0] > rng[1]:
                raise InvalidConfig(f"bad range {rng}")
            positives.extend(rng)
        if any(not (v > 0) for v in positives):
            raise InvalidConfig("geometric parameters must be positive")
        if min(self.exponent) < 2.0:
            raise InvalidConfig("superellipsoid exponents must be >= 2")
        if self.blur_sigma_mm < 0 or self.noise_sigma < 0 or self.margin_mm < 0:
            raise InvalidConfig("blur, noise and margin must be non-negative")

    @classmethod
    def from_json(cls, d: dict) -> "PhantomConfig":
        d = dict(d)
        for k, v in list(d.items()):
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class ToothShape:
    center: tuple      # crown centre, mm
    angle: float       # rotation of the local x axis about z
    a: float
    b: float
    c: float
    e: float
    root_length: float

    @property
    def root_top_radius(self) -> float:
        return 0.6 * min(self.a, self.b)

    @property
    def root_tip_radius(self) -> float:
        return 0.25 * min(self.a, self.b)

    def footprint_radius(self, blend: float) -> float:
        """Upper bound on the horizontal reach of the shape from its axis."""
        crown = max(self.a, self.b) * 2.0 ** (0.5 - 1.0 / self.e)
        return crown + 0.25 * blend * max(self.a, self.b, self.c) / min(self.a, self.b, self.c)

    def extent(self, blend: float):
        r = self.footprint_radius(blend) + blend
        cx, cy, cz = self.center
        top = cz + self.c + blend
        bottom = cz - 0.5 * self.c - self.root_length - self.root_tip_radius - blend
        return np.array([cx - r, cy - r, bottom]), np.array([cx + r, cy + r, top])

    def implicit(self, pts: np.ndarray, blend: float) -> np.ndarray:
        """Approximate signed distance (mm), negative inside."""
        rel = pts - np.asarray(self.center)
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        x = rel[..., 0] * ca + rel[..., 1] * sa
        y = -rel[..., 0] * sa + rel[..., 1] * ca
        z = rel[..., 2]
        e = self.e
        f = (np.abs(x / self.a) ** e + np.abs(y / self.b) ** e + np.abs(z / self.c) ** e) ** (1.0 / e)
        d_crown = (f - 1.0) * min(self.a, self.b, self.c)
        top = -0.5 * self.c
        length = self.root_length
        t = np.clip((top - z) / length, 0.0, 1.0)
        radial = np.sqrt(x * x + y * y + (z - (top - t * length)) ** 2)
        d_root = radial - (self.root_top_radius + t * (self.root_tip_radius - self.root_top_radius))
        h = np.clip(0.5 + 0.5 * (d_root - d_crown) / blend, 0.0, 1.0)
        return d_root * (1 - h) + d_crown * h - blend * h * (1 - h)


@dataclass
class PhantomCase:
    image: VoxelVolume
    labels: VoxelVolume
    centroids: list
    adjacency: list
    config: PhantomConfig | None = None
    teeth: list = field(default_factory=list)

    @property
    def tooth_count(self) -> int:
        return len(self.centroids)

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_volume(self.image, out / "image")
        save_volume(self.labels, out / "labels")
        (out / "centroids.json").write_text(json.dumps(
            [{"id": i + 1, "pos_mm": [float(v) for v in c]} for i, c in enumerate(self.centroids)], indent=2) + "\n")
        (out / "adjacency.json").write_text(json.dumps([list(p) for p in self.adjacency]) + "\n")

    @classmethod
    def load(cls, in_dir) -> "PhantomCase":
        from .volume import load_volume

        d = Path(in_dir)
        cents = json.loads((d / "centroids.json").read_text())
        cents = sorted(cents, key=lambda c: c["id"])
        adj = [tuple(p) for p in json.loads((d / "adjacency.json").read_text())] \
            if (d / "adjacency.json").exists() else []
        return cls(load_volume(d / "image"), load_volume(d / "labels"),
                   [tuple(c["pos_mm"]) for c in cents], adj)


def _uniform(rng, bounds) -> float:
    lo, hi = bounds
    return float(lo + (hi - lo) * rng.random())


def _arch_polyline(a: float, b: float, ext: float, n: int = 20000):
    theta = np.linspace(math.pi + ext, -ext, n)
    return theta, np.stack([a * np.cos(theta), b * np.sin(theta)], axis=1)


def _footprint(a, b, c, e, root, blend, step=0.15) -> np.ndarray:
    """Convex hull (local xy, mm) of the tooth's horizontal projection, padded by ``step``."""
    probe = ToothShape((0.0, 0.0, 0.0), 0.0, a, b, c, e, root)
    lo, hi = probe.extent(blend)
    axes = [np.arange(l, h + step, step) for l, h in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    inside = probe.implicit(pts, blend) <= 0
    xy = pts[inside][:, :2]
    xy = np.unique(np.round(xy / step).astype(np.int64), axis=0) * step
    hull = xy[ConvexHull(xy).vertices]
    norms = np.linalg.norm(hull, axis=1, keepdims=True)
    return hull * (1.0 + step / np.maximum(norms, step))


def _support(hull: np.ndarray, angle: float, u: np.ndarray) -> float:
    ca, sa = math.cos(angle), math.sin(angle)
    local = np.array([u[0] * ca + u[1] * sa, -u[0] * sa + u[1] * ca])
    return float((hull @ local).max())


def _tangent_angle(a_arch, b_arch, th) -> float:
    return math.atan2(b_arch * math.cos(th), -a_arch * math.sin(th))


def _place(poly, theta, arch, start, hulls, gap):
    """Polyline indices of successive tooth centres, neighbours ``gap`` apart.

    Neighbour separation is measured along the chord between centres, using
    each tooth's support in that direction, so the true gap is never smaller.
    """
    out = [start]
    cur = start
    for i in range(len(hulls) - 1):
        p0 = poly[cur]
        ang0 = _tangent_angle(*arch, theta[cur])
        u = np.array([math.cos(ang0), math.sin(ang0)])
        dist = np.hypot(*(poly[cur:] - p0).T)
        nxt = None
        for _ in range(6):
            guess = cur if nxt is None else nxt
            ang1 = _tangent_angle(*arch, theta[guess])
            need = _support(hulls[i], ang0, u) + _support(hulls[i + 1], ang1, -u) + gap
            hit = np.flatnonzero(dist >= need)
            if len(hit) == 0:
                return None
            cand = cur + int(hit[0])
            if cand == nxt:
                break
            nxt = cand
            chord = poly[nxt] - p0
            u = chord / np.linalg.norm(chord)
        # final verification with the settled direction
        ang1 = _tangent_angle(*arch, theta[nxt])
        need = _support(hulls[i], ang0, u) + _support(hulls[i + 1], ang1, -u) + gap
        while dist[nxt - cur] < need:
            nxt += 1
            if nxt >= len(poly):
                return None
            chord = poly[nxt] - p0
            u = chord / np.linalg.norm(chord)
            ang1 = _tangent_angle(*arch, theta[nxt])
            need = _support(hulls[i], ang0, u) + _support(hulls[i + 1], ang1, -u) + gap
        out.append(nxt)
        cur = nxt
    return out


def _tooth_layout(cfg: PhantomConfig, rng) -> list:
    k = int(cfg.tooth_count)
    dims = []
    for _ in range(k):
        a = _uniform(rng, cfg.crown_radius_mm)
        b = a * _uniform(rng, cfg.crown_depth_ratio)
        c = _uniform(rng, cfg.crown_half_height_mm)
        e = _uniform(rng, cfg.exponent)
        root = _uniform(rng, cfg.root_length_mm)
        dims.append((a, b, c, e, root))
    hulls = [_footprint(*d, cfg.blend_mm) for d in dims]

    arch = cfg.arch_semi_axes_mm
    theta, poly = _arch_polyline(*arch, cfg.arch_extension_rad)
    n = len(poly)
    if _place(poly, theta, arch, 0, hulls, cfg.gap_mm) is None:
        raise ConfigOverlap(f"{k} teeth with gap {cfg.gap_mm} mm do not fit on the arch")
    # centre the row: latest start whose end still lands symmetrically
    lo, hi = 0, n // 2
    while lo < hi:
        mid = (lo + hi + 1) // 2
        idx = _place(poly, theta, arch, mid, hulls, cfg.gap_mm)
        if idx is not None and idx[-1] <= n - 1 - mid:
            lo = mid
        else:
            hi = mid - 1
    idx = _place(poly, theta, arch, lo, hulls, cfg.gap_mm)

    teeth = []
    for (a, b, c, e, root), i in zip(dims, idx):
        ang = _tangent_angle(*arch, theta[i])
        teeth.append(ToothShape((float(poly[i, 0]), float(poly[i, 1]), 0.0), ang, a, b, c, e, root))
    return teeth


def _grid(cfg: PhantomConfig, teeth: list):
    sp = float(cfg.spacing_mm)
    lo = np.min([t.extent(cfg.blend_mm)[0] for t in teeth], axis=0) - cfg.margin_mm
    hi = np.max([t.extent(cfg.blend_mm)[1] for t in teeth], axis=0) + cfg.margin_mm
    if cfg.grid_shape is None:
        dims = tuple(int(math.ceil((h - l) / sp)) + 1 for l, h in zip(lo, hi))
        origin = lo
    else:
        dims = tuple(int(n) for n in cfg.grid_shape)
        need = (hi - lo) / sp
        if any(nd > d - 1 for nd, d in zip(need, dims)):
            raise ConfigOverlap(f"teeth need {np.ceil(need).astype(int).tolist()} voxels, grid is {list(dims)}")
        mid = 0.5 * (lo + hi)
        origin = mid - sp * (np.asarray(dims) - 1) / 2.0
    origin = np.round(np.asarray(origin) / sp) * sp
    return dims, tuple(float(v) for v in origin)


def _rasterize(tooth: ToothShape, blend: float, dims, origin, sp):
    lo, hi = tooth.extent(blend)
    i0 = np.maximum(np.floor((lo - origin) / sp).astype(int), 0)
    i1 = np.minimum(np.ceil((hi - origin) / sp).astype(int) + 1, dims)
    axes = [origin[d] + sp * np.arange(i0[d], i1[d]) for d in range(3)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    inside = tooth.implicit(pts, blend) <= 0
    lab, n = ndimage.label(inside)
    if n > 1:
        sizes = np.bincount(lab.ravel())
        sizes[0] = 0
        inside = lab == int(np.argmax(sizes))
    return tuple(slice(a, b) for a, b in zip(i0, i1)), inside


def _bone_mask(cfg: PhantomConfig, teeth: list, dims, origin, sp) -> np.ndarray:
    a_arch, b_arch = cfg.arch_semi_axes_mm
    _, poly = _arch_polyline(a_arch, b_arch, cfg.arch_extension_rad, 4000)
    xs = origin[0] + sp * np.arange(dims[0])
    ys = origin[1] + sp * np.arange(dims[1])
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    d, _ = cKDTree(poly).query(np.stack([gx.ravel(), gy.ravel()], axis=1))
    width = 1.3 * max(cfg.crown_radius_mm)
    band = (d <= width).reshape(gx.shape)
    zs = origin[2] + sp * np.arange(dims[2])
    top = -0.3 * min(t.c for t in teeth)
    bottom = min(t.extent(cfg.blend_mm)[0][2] for t in teeth) + cfg.blend_mm - 1.0
    zband = (zs <= top) & (zs >= bottom)
    return band[:, :, None] & zband[None, None, :]


def generate_phantom(config: PhantomConfig = PhantomConfig()) -> PhantomCase:
    cfg = config
    rng = np.random.Generator(np.random.Philox(int(cfg.seed)))
    teeth = _tooth_layout(cfg, rng)
    dims, origin = _grid(cfg, teeth)
    sp = float(cfg.spacing_mm)
    org = np.asarray(origin)

    labels = np.zeros(dims, dtype=np.uint16)
    for k, tooth in enumerate(teeth, start=1):
        sl, inside = _rasterize(tooth, cfg.blend_mm, dims, org, sp)
        view = labels[sl]
        if np.any(view[inside] != 0):
            raise ConfigOverlap(f"tooth {k} overlaps a neighbour")
        view[inside] = k

    image = np.full(dims, cfg.background_level, dtype=np.float64)
    image[_bone_mask(cfg, teeth, dims, org, sp)] = cfg.bone_level
    image[labels > 0] = cfg.tooth_level
    if cfg.blur_sigma_mm > 0:
        image = ndimage.gaussian_filter(image, cfg.blur_sigma_mm / sp, mode="nearest")
    if cfg.noise_sigma > 0:
        image = image + cfg.noise_sigma * rng.standard_normal(dims)

    spacing = Spacing.of(sp)
    lab_vol = VoxelVolume(labels, spacing, origin, kind="label")
    centroids = label_centroids(lab_vol)
    adjacency = adjacent_pairs(lab_vol, 2.0 * cfg.gap_mm)
    return PhantomCase(
        image=VoxelVolume(image.astype(np.float32), spacing, origin, kind="intensity"),
        labels=lab_vol,
        centroids=centroids,
        adjacency=adjacency,
        config=cfg,
        teeth=teeth,
    )


def label_centroids(labels: VoxelVolume) -> list:
    """Mean voxel-centre position of each label id 1..K."""
    data = np.asarray(labels.data)
    k = int(data.max()) if data.size else 0
    out = []
    idx = np.argwhere(data > 0)
    ids = data[idx[:, 0], idx[:, 1], idx[:, 2]].astype(np.int64)
    phys = labels.index_to_phys(idx)
    for i in range(1, k + 1):
        sel = phys[ids == i]
        out.append(tuple(float(v) for v in sel.mean(axis=0)) if len(sel) else (math.nan,) * 3)
    return out


def surface_gap(mask_a: np.ndarray, mask_b: np.ndarray, spacing) -> float:
    """Smallest centre distance (mm) between the boundary voxels of two masks."""
    ea = boundary_mask(mask_a)
    eb = boundary_mask(mask_b)
    if not ea.any() or not eb.any():
        return math.inf
    return float(np.sqrt(squared_edt(ea, tuple(Spacing.of(spacing)))[eb].min()))


def adjacent_pairs(labels: VoxelVolume, threshold_mm: float) -> list:
    """Label pairs whose surface distance is below ``threshold_mm``."""
    data = np.asarray(labels.data)
    k = int(data.max()) if data.size else 0
    sp = tuple(labels.spacing)
    reach = int(math.ceil(threshold_mm / min(sp))) + 1
    boxes = {}
    for i, sl in enumerate(ndimage.find_objects(data.astype(np.int32)), start=1):
        if sl is not None:
            boxes[i] = sl
    pairs = []
    for i in range(1, k + 1):
        if i not in boxes:
            continue
        for j in range(i + 1, k + 1):
            if j not in boxes:
                continue
            lo = [max(0, min(a.start, b.start) - reach) for a, b in zip(boxes[i], boxes[j])]
            hi = [min(n, max(a.stop, b.stop) + reach) for a, b, n in zip(boxes[i], boxes[j], data.shape)]
            gap_lo = [max(a.start, b.start) - min(a.stop, b.stop) for a, b in zip(boxes[i], boxes[j])]
            if max(gap_lo) * min(sp) > threshold_mm + max(sp):
                continue
            sub = data[tuple(slice(a, b) for a, b in zip(lo, hi))]
            if surface_gap(sub == i, sub == j, sp) < threshold_mm - 1e-9:
                pairs.append((i, j))
    return pairs


def corrupt_adhesion(case: PhantomCase, grow_mm: float):
    """Dilate every tooth by ``grow_mm``.

    Returns ``(union, masks)``: the merged binary foreground and a boolean
    ``(K, nx, ny, nz)`` stack of per-tooth dilated masks, which may overlap.
    """
    if grow_mm < 0:
        raise ValueError("grow_mm must be >= 0")
    data = np.asarray(case.labels.data)
    k = case.tooth_count
    masks = np.zeros((k,) + data.shape, dtype=bool)
    sp = case.labels.spacing
    pad = int(math.ceil(grow_mm / min(sp))) + 1
    for i, sl in enumerate(ndimage.find_objects(data.astype(np.int32))[:k]):
        if sl is None:
            continue
        sl = tuple(slice(max(0, s.start - pad), min(n, s.stop + pad)) for s, n in zip(sl, data.shape))
        masks[i][sl] = dilate(data[sl] == i + 1, grow_mm, sp)
    union = masks.any(axis=0)
    return VoxelVolume(union.astype(np.uint8), sp, case.labels.origin, kind="label"), masks
