"""Three-stage tooth instance segmentation with pluggable predictors.

Stage 1 segments the dentition, stage 2 votes centroids from predicted
offsets inside the dentition ROI, and stage 3 segments every tooth from a
centroid-prompted patch before the per-tooth masks are stitched back.

Predictors are plain objects with a ``predict`` method.  The oracle
predictors in this module read the ground truth of a :class:`PhantomCase` and
stand in for trained networks.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage

from ._errors import (
    AllZeroDensity,
    CentroidOutOfBounds,
    MissingSDM,
    NoCentroidsFound,
    ShapeMismatch,
    TargetMissing,
)
from .clustering import (
    DEFAULT_DELTA_MIN,
    CentroidSet,
    assign_instances,
    density_peaks,
    vote_density,
)
from .losses import LossWeights
from .metrics import CaseReport, evaluate_case, format_scores
from .phantom import PhantomCase, PhantomConfig, generate_phantom
from .sdt import as_binary, boundary_mask, distance_to, signed_distance_map
from .volume import BoundingBox, VoxelVolume, extract_patch, normalize_intensity, patch_bounds

VARIANTS = {
    "B": dict(centroid_prompt=False, multilabel=False, shape=False),
    "C": dict(centroid_prompt=True, multilabel=False, shape=False),
    "CM": dict(centroid_prompt=True, multilabel=True, shape=False),
    "CMS": dict(centroid_prompt=True, multilabel=True, shape=True),
}

BACKGROUND, TARGET, ADJACENT = 0, 1, 2


@dataclass(frozen=True)
class PipelineConfig:
    patch_size: tuple = (64, 64, 64)
    prompt_radius: int = 2
    sdm_threshold: float = 0.0
    rho_min: float | None = None
    delta_min: float = DEFAULT_DELTA_MIN
    roi_margin_mm: float = 2.0
    centroid_prompt: bool = True
    multilabel: bool = True
    shape: bool = True
    loss_weights: LossWeights = field(default_factory=LossWeights)
    threads: int = 1

    def __post_init__(self):
        ps = tuple(int(v) for v in (self.patch_size if np.ndim(self.patch_size) else (self.patch_size,) * 3))
        if len(ps) != 3 or any(v < 16 or v % 2 for v in ps):
            raise ValueError(f"patch_size must be even and >= 16, got {ps}")
        object.__setattr__(self, "patch_size", ps)
        if int(self.prompt_radius) < 1:
            raise ValueError("prompt_radius must be >= 1")
        if int(self.threads) < 1:
            raise ValueError("threads must be >= 1")
        if isinstance(self.loss_weights, dict):
            w = dict(self.loss_weights)
            if "class_weights" in w:
                w["class_weights"] = tuple(w["class_weights"])
            object.__setattr__(self, "loss_weights", LossWeights(**w))

    @classmethod
    def for_variant(cls, name: str, **kw) -> "PipelineConfig":
        if name not in VARIANTS:
            raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
        return cls(**{**VARIANTS[name], **kw})

    @property
    def variant(self) -> str:
        for name, flags in VARIANTS.items():
            if all(getattr(self, k) == v for k, v in flags.items()):
                return name
        return "custom"

    def to_json(self) -> dict:
        d = asdict(self)
        d["patch_size"] = list(self.patch_size)
        d["loss_weights"]["class_weights"] = list(self.loss_weights.class_weights)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if "variant" in d:
            d = {**VARIANTS[d.pop("variant")], **d}
        return cls(**d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class PromptPatch:
    """Two-channel network input cut around one centroid.

    ``lo`` is the source-image index of patch voxel (0, 0, 0).
    """

    intensity: VoxelVolume
    prompt: VoxelVolume
    lo: tuple

    @property
    def shape(self) -> tuple:
        return self.intensity.dims

    def stack(self) -> np.ndarray:
        return np.stack([self.intensity.data.astype(np.float32), self.prompt.data.astype(np.float32)])


@dataclass
class PredictorOutput:
    """Class probabilities ``(C, ...)`` plus optional level set and boundary heads."""

    probabilities: np.ndarray
    sdm: np.ndarray | None = None
    boundary: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 4 or p.shape[0] < 2:
            raise ShapeMismatch(f"probabilities must be (C, nx, ny, nz) with C >= 2, got {p.shape}")
        if np.any(p < 0) or np.any(p > 1) or np.max(np.abs(p.sum(axis=0) - 1.0)) > 1e-5:
            raise ValueError("class probabilities must lie in [0, 1] and sum to 1 per voxel")
        for name in ("sdm", "boundary"):
            v = getattr(self, name)
            if v is not None and np.shape(v) != p.shape[1:]:
                raise ShapeMismatch(f"{name} shape {np.shape(v)} vs {p.shape[1:]}")
        self.probabilities = p


class ToothPredictor(Protocol):
    def predict(self, patch: PromptPatch) -> PredictorOutput: ...


class DentitionPredictor(Protocol):
    def predict(self, image: VoxelVolume) -> PredictorOutput: ...


class OffsetPredictor(Protocol):
    def predict(self, roi: VoxelVolume) -> tuple: ...


# -- patches and labels -------------------------------------------------------

def prompt_ball(size, radius: int) -> np.ndarray:
    """Voxels within ``radius`` (voxel units) of the patch centre ``size // 2``."""
    c = [s // 2 for s in size]
    grids = np.meshgrid(*[np.arange(s) - ci for s, ci in zip(size, c)], indexing="ij")
    return (grids[0] ** 2 + grids[1] ** 2 + grids[2] ** 2) <= radius * radius


def build_prompt_patch(image: VoxelVolume, centroid, cfg: PipelineConfig = PipelineConfig()) -> PromptPatch:
    if not image.contains_point(centroid):
        raise CentroidOutOfBounds(f"centroid {tuple(centroid)} lies outside the image")
    center = image.phys_to_index(centroid)
    raw = extract_patch(image, center, cfg.patch_size, pad_value=0)
    lo, _ = patch_bounds(center, cfg.patch_size)
    inside = np.zeros(cfg.patch_size, dtype=bool)
    a = np.maximum(-lo, 0)
    b = np.minimum(np.asarray(image.dims) - lo, cfg.patch_size)
    inside[tuple(slice(x, y) for x, y in zip(a, b))] = True
    intensity = normalize_intensity(raw, mask=inside)
    prompt = np.zeros(cfg.patch_size, dtype=np.uint8)
    if cfg.centroid_prompt:
        prompt[prompt_ball(cfg.patch_size, int(cfg.prompt_radius))] = 1
    return PromptPatch(
        intensity=intensity,
        prompt=raw.with_data(prompt, kind="label"),
        lo=tuple(int(v) for v in lo),
    )


def remap_multilabel(labels_patch, target_id: int) -> VoxelVolume:
    """Target id to 1, any other tooth to 2, background stays 0."""
    vol = labels_patch if isinstance(labels_patch, VoxelVolume) else VoxelVolume(np.asarray(labels_patch), kind="label")
    data = np.asarray(vol.data)
    target = data == target_id
    if target_id == 0 or not target.any():
        raise TargetMissing(f"target id {target_id} is not in the patch")
    out = np.where(target, TARGET, np.where(data > 0, ADJACENT, BACKGROUND)).astype(np.uint8)
    return vol.with_data(out, kind="label")


# -- fusion and stitching ------------------------------------------------------

def fuse_single_tooth(pred: PredictorOutput, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Binary target mask from one patch prediction.

    Multi-label: argmax is the target class (ties to the lower class).  Else the
    target probability must reach 0.5.  With the shape toggle the predicted
    level set must also be ``<= sdm_threshold``.
    """
    p = pred.probabilities
    if cfg.multilabel:
        mask = np.argmax(p, axis=0) == TARGET
    else:
        mask = p[TARGET] >= 0.5
    if cfg.shape:
        if pred.sdm is None:
            raise MissingSDM("shape toggle is on but the predictor returned no level set")
        mask &= np.asarray(pred.sdm) <= cfg.sdm_threshold
    return mask


class Stitcher:
    """Accumulates per-tooth claims into one label volume.

    A voxel claimed by several teeth goes to the strongest claim; equal claims
    go to the lower id.  Claims must be added in ascending id order.
    """

    def __init__(self, dims):
        self.dims = tuple(int(n) for n in dims)
        self.labels = np.zeros(self.dims, dtype=np.uint16)
        self.best = np.full(self.dims, -np.inf)
        self.claims = np.zeros(self.dims, dtype=np.uint16)
        self._last_id = 0

    def add(self, tooth_id: int, mask, strength, lo=(0, 0, 0)) -> None:
        if tooth_id <= self._last_id:
            raise ValueError("claims must arrive in ascending tooth id order")
        self._last_id = tooth_id
        mask = as_binary(mask)
        strength = np.broadcast_to(np.asarray(strength, dtype=np.float64), mask.shape)
        lo = np.asarray(lo, dtype=np.int64)
        hi = lo + np.asarray(mask.shape)
        g_lo = np.maximum(lo, 0)
        g_hi = np.minimum(hi, self.dims)
        if np.any(g_hi <= g_lo):
            return
        g = tuple(slice(a, b) for a, b in zip(g_lo, g_hi))
        l = tuple(slice(a, b) for a, b in zip(g_lo - lo, g_hi - lo))
        m = mask[l]
        s = strength[l]
        best = self.best[g]
        win = m & (s > best)
        self.labels[g][win] = tooth_id
        best[win] = s[win]
        self.claims[g] += m.astype(np.uint16)

    @property
    def conflicts(self) -> int:
        return int(np.count_nonzero(self.claims >= 2))


def stitch_instances(per_tooth_masks) -> tuple:
    """Merge ``(tooth_id, mask, claim_strength)`` triples into one label array.

    Returns ``(labels, conflicts)`` where ``conflicts`` counts voxels claimed by
    more than one tooth.
    """
    items = sorted(per_tooth_masks, key=lambda t: t[0])
    if not items:
        raise ValueError("nothing to stitch")
    ref = items[0][1]
    dims = ref.dims if isinstance(ref, VoxelVolume) else np.shape(ref)
    st = Stitcher(dims)
    for tid, mask, strength in items:
        m = mask.data if isinstance(mask, VoxelVolume) else mask
        s = strength.data if isinstance(strength, VoxelVolume) else strength
        if np.shape(m) != tuple(dims) or np.shape(s) not in ((), tuple(dims)):
            raise ShapeMismatch("all masks and strengths must share dims")
        st.add(int(tid), m, s)
    if isinstance(ref, VoxelVolume):
        return ref.with_data(st.labels, kind="label"), st.conflicts
    return st.labels, st.conflicts


# -- oracle predictors ---------------------------------------------------------

@dataclass(frozen=True)
class OracleMode:
    """How an oracle degrades the ground truth.

    ``perfect``: one-hot truth.  ``noisy``: Gaussian noise of std ``sigma`` in
    logit space, optional Gaussian blur (``blur`` voxels), renormalised.
    ``adhesion``: teeth dilated by ``grow_mm`` so neighbours merge; voxels
    claimed by the target and a neighbour get near-equal probabilities.
    """

    kind: str = "perfect"
    sigma: float = 0.0
    blur: float = 0.0
    grow_mm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("perfect", "noisy", "adhesion"):
            raise ValueError(f"unknown oracle mode {self.kind!r}")
        if self.sigma < 0 or self.blur < 0 or self.grow_mm < 0:
            raise ValueError("sigma, blur and grow_mm must be non-negative")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "OracleMode":
        """``perfect``, ``noisy(0.5)``, ``noisy(0.5, 1.0)`` or ``adhesion(0.8)``."""
        text = text.strip()
        if "(" not in text:
            return cls(text, seed=seed)
        kind, args = text.rstrip(")").split("(", 1)
        vals = [float(v) for v in args.split(",") if v.strip()]
        if kind == "noisy":
            return cls("noisy", sigma=vals[0] if vals else 0.0, blur=vals[1] if len(vals) > 1 else 0.0, seed=seed)
        if kind == "adhesion":
            return cls("adhesion", grow_mm=vals[0] if vals else 0.0, seed=seed)
        return cls(kind, seed=seed)


_AMBIGUITY_TILT = 0.08
_CONFIDENT = 0.9


def _noisy(prob: np.ndarray, mode: OracleMode, key) -> np.ndarray:
    if mode.kind != "noisy" or (mode.sigma == 0 and mode.blur == 0):
        return prob
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(mode.seed), *[int(k) & 0xFFFFFFFF for k in key]])))
    logits = np.log(np.clip(prob, 1e-3, 1.0))
    if mode.sigma > 0:
        logits = logits + mode.sigma * rng.standard_normal(logits.shape)
    logits -= logits.max(axis=0, keepdims=True)
    out = np.exp(logits)
    out /= out.sum(axis=0, keepdims=True)
    if mode.blur > 0:
        out = np.stack([ndimage.gaussian_filter(c, mode.blur, mode="nearest") for c in out])
        out /= out.sum(axis=0, keepdims=True)
    return out


def _target_from_prompt(gt: np.ndarray, prompt: np.ndarray) -> int:
    """Ground-truth id the prompt points at, or 0 when there is no prompt."""
    if not prompt.any():
        return 0
    under = gt[prompt.astype(bool)]
    under = under[under > 0]
    if under.size:
        ids, counts = np.unique(under, return_counts=True)
        return int(ids[np.argmax(counts)])
    idx = np.argwhere(gt > 0)
    if not len(idx):
        return 0
    c = np.argwhere(prompt).mean(axis=0)
    d = np.sum((idx - c) ** 2, axis=1)
    i = idx[np.argmin(d)]
    return int(gt[tuple(i)])


class OracleToothPredictor:
    """Stage-3 stand-in that reads the phantom's labels under the patch.

    The target is whichever tooth the prompt ball covers; an empty prompt
    leaves the oracle unable to tell teeth apart, so it returns a two-class
    tooth-vs-background field.  ``multilabel`` picks the three-class
    (background, target, adjacent) output; ``shape`` adds the target's level
    set.
    """

    def __init__(self, case: PhantomCase, mode: OracleMode = OracleMode(), multilabel: bool = True,
                 shape: bool = True):
        self.case = case
        self.mode = mode
        self.multilabel = multilabel
        self.shape = shape

    def _gt_patch(self, patch: PromptPatch) -> np.ndarray:
        labels = self.case.labels
        lo = np.asarray(patch.lo)
        center = lo + np.asarray(patch.shape) // 2
        return np.asarray(extract_patch(labels, center, patch.shape, 0).data)

    def predict(self, patch: PromptPatch) -> PredictorOutput:
        gt = self._gt_patch(patch)
        sp = tuple(patch.intensity.spacing)
        target_id = _target_from_prompt(gt, np.asarray(patch.prompt.data))
        teeth = gt > 0
        target = gt == target_id if target_id else np.zeros_like(teeth)
        others = teeth & ~target

        if self.mode.kind == "adhesion" and self.mode.grow_mm > 0:
            prob = self._adhesion(target, others, teeth, target_id, sp)
        else:
            prob = self._exact(target, others, teeth, target_id)
        prob = _noisy(prob, self.mode, patch.lo)

        sdm = None
        if self.shape:
            if target.any():
                sdm = signed_distance_map(target, sp).data
            else:
                sdm = np.full(gt.shape, float(np.linalg.norm(np.asarray(gt.shape) * np.asarray(sp))))
        bdr = ndimage.binary_dilation(boundary_mask(target)).astype(np.float64) if target.any() \
            else np.zeros(gt.shape)
        return PredictorOutput(prob, sdm, bdr)

    def _exact(self, target, others, teeth, target_id) -> np.ndarray:
        if not target_id:
            fg = teeth.astype(np.float64)
            return np.stack([1.0 - fg, fg])
        if self.multilabel:
            t = target.astype(np.float64)
            a = others.astype(np.float64)
            return np.stack([1.0 - t - a, t, a])
        t = target.astype(np.float64)
        return np.stack([1.0 - t, t])

    def _adhesion(self, target, others, teeth, target_id, sp) -> np.ndarray:
        # Each tooth is grown by grow_mm.  The target's claim also reaches into
        # grown neighbours up to 2 * grow_mm from it: the adhered band.
        grow = self.mode.grow_mm + 1e-9
        lo_p = (1.0 - _CONFIDENT) / 2.0
        if not target_id:
            fg = np.where(distance_to(teeth, sp) <= grow, _CONFIDENT, 2 * lo_p)
            return np.stack([1.0 - fg, fg])
        d_t = distance_to(target, sp)
        d_n = distance_to(others, sp) if others.any() else np.full(target.shape, np.inf)
        in_n = d_n <= grow
        claim_t = (d_t <= grow) | (in_n & (d_t <= 2 * grow))
        if not self.multilabel:
            # no neighbour class, so the adhered band reads as target
            t = np.where(claim_t, _CONFIDENT, 2 * lo_p)
            return np.stack([1.0 - t, t])
        both = claim_t & in_n
        share = 0.5 + _AMBIGUITY_TILT * np.tanh(np.where(both, d_n - d_t, 0.0) / min(sp))
        t = np.where(both, _CONFIDENT * share, np.where(claim_t, _CONFIDENT, lo_p))
        a = np.where(both, _CONFIDENT * (1.0 - share), np.where(in_n, _CONFIDENT, lo_p))
        bg = np.where(claim_t | in_n, 1.0 - _CONFIDENT - np.where(both, 0.0, lo_p), _CONFIDENT)
        return np.stack([bg, t, a])


def make_oracle_predictor(case: PhantomCase, mode="perfect", multilabel: bool = True,
                          shape: bool = True) -> OracleToothPredictor:
    if isinstance(mode, str):
        mode = OracleMode.parse(mode)
    return OracleToothPredictor(case, mode, multilabel=multilabel, shape=shape)


class OracleDentitionPredictor:
    """Stage-1 stand-in: tooth-vs-background from the labels, plus its level set."""

    def __init__(self, case: PhantomCase, mode: OracleMode = OracleMode(), shape: bool = True):
        self.case = case
        self.mode = mode
        self.shape = shape

    def predict(self, image: VoxelVolume) -> PredictorOutput:
        if image.dims != self.case.labels.dims:
            raise ShapeMismatch("image and case labels differ in size")
        fg = np.asarray(self.case.labels.data) > 0
        f = fg.astype(np.float64)
        prob = _noisy(np.stack([1.0 - f, f]), self.mode, (0, 0, 0))
        sdm = signed_distance_map(fg, image.spacing).data if self.shape and fg.any() else None
        return PredictorOutput(prob, sdm)


class OracleOffsetPredictor:
    """Stage-2 stand-in: offsets to the true centroids and the tooth mask inside the ROI."""

    def __init__(self, case: PhantomCase, sigma_mm: float = 0.0, seed: int = 0):
        self.case = case
        self.sigma_mm = sigma_mm
        self.seed = seed

    def predict(self, roi: VoxelVolume):
        labels = self.case.labels
        lo = labels.phys_to_index(roi.origin)
        center = lo + np.asarray(roi.dims) // 2
        gt = np.asarray(extract_patch(labels, center, roi.dims, 0).data).astype(np.int64)
        pos = np.asarray(self.case.centroids, dtype=np.float64)
        offsets = np.zeros(roi.dims + (3,))
        idx = np.argwhere(gt > 0)
        if len(idx):
            k = gt[idx[:, 0], idx[:, 1], idx[:, 2]] - 1
            phys = roi.index_to_phys(idx)
            off = pos[k] - phys
            if self.sigma_mm > 0:
                rng = np.random.Generator(np.random.Philox(int(self.seed)))
                off = off + self.sigma_mm * rng.standard_normal(off.shape)
            offsets[idx[:, 0], idx[:, 1], idx[:, 2]] = off
        seg = roi.with_data((gt > 0).astype(np.uint8), kind="label")
        return roi.with_data(offsets, kind="offset"), seg


# -- orchestration -------------------------------------------------------------

@dataclass
class PipelineResult:
    labels: VoxelVolume
    centroids: CentroidSet
    dentition: np.ndarray
    instances: VoxelVolume
    roi: BoundingBox
    conflicts: int
    fused_sizes: list = field(default_factory=list)

    def evaluate(self, gt_labels: VoxelVolume, hd95: bool = False) -> CaseReport:
        report = evaluate_case(self.labels, gt_labels, gt_labels.spacing, hd95=hd95)
        report.conflicts = self.conflicts
        return report


def _set_threads(n: int) -> None:
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _segment_dentition(image, dentition_pred, cfg) -> np.ndarray:
    out = dentition_pred.predict(image)
    fg = out.probabilities[1] >= 0.5
    if cfg.shape and out.sdm is not None:
        fg &= np.asarray(out.sdm) <= cfg.sdm_threshold
    return fg


def run_pipeline(image: VoxelVolume, dentition_pred, offset_pred, tooth_pred,
                 cfg: PipelineConfig = PipelineConfig()) -> PipelineResult:
    _set_threads(cfg.threads)

    fg = _segment_dentition(image, dentition_pred, cfg)
    if not fg.any():
        raise NoCentroidsFound("dentition stage found no foreground")

    margin = int(math.ceil(cfg.roi_margin_mm / min(image.spacing)))
    roi = BoundingBox.of_mask(fg, margin)
    roi_center = np.asarray(roi.lo) + np.asarray(roi.size) // 2
    roi_image = extract_patch(image, roi_center, roi.size)
    offsets, seg = offset_pred.predict(roi_image)
    try:
        density = vote_density(offsets, seg)
        centroids = density_peaks(density, cfg.rho_min, cfg.delta_min)
    except AllZeroDensity as exc:
        raise NoCentroidsFound(str(exc)) from exc
    if not len(centroids):
        raise NoCentroidsFound("no density peak passed the thresholds")
    instances = assign_instances(seg, centroids)

    def work(c):
        patch = build_prompt_patch(image, c.position, cfg)
        out = tooth_pred.predict(patch)
        return patch.lo, fuse_single_tooth(out, cfg), out.probabilities[TARGET]

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.threads)) as pool:
            results = list(pool.map(work, centroids))
    else:
        results = [work(c) for c in centroids]

    st = Stitcher(image.dims)
    sizes = []
    for tid, (lo, mask, strength) in enumerate(results, start=1):
        st.add(tid, mask, strength, lo)
        sizes.append(int(mask.sum()))
    labels = VoxelVolume(st.labels, image.spacing, image.origin, kind="label")
    return PipelineResult(labels, centroids, fg, instances, roi, st.conflicts, sizes)


def oracle_predictors(case: PhantomCase, cfg: PipelineConfig, mode: OracleMode = OracleMode()):
    """Dentition, offset and tooth oracles matching the toggles in ``cfg``."""
    return (
        OracleDentitionPredictor(case),
        OracleOffsetPredictor(case),
        OracleToothPredictor(case, mode, multilabel=cfg.multilabel, shape=cfg.shape),
    )


def run_oracle_case(case: PhantomCase, cfg: PipelineConfig, mode: OracleMode = OracleMode()):
    dent, off, tooth = oracle_predictors(case, cfg, mode)
    result = run_pipeline(case.image, dent, off, tooth, cfg)
    return result, result.evaluate(case.labels)


# -- ablation harness ----------------------------------------------------------

@dataclass
class AblationRow:
    variant: str
    dice: float
    jaccard: float
    hd: float
    asd: float
    conflicts: int
    misses: int
    spurious: int
    cases: int

    def line(self) -> str:
        return f"{self.variant:<8}{format_scores(self.dice, self.jaccard, self.hd, self.asd)}   " \
               f"conflicts={self.conflicts} misses={self.misses} spurious={self.spurious}"


def run_ablation(seeds, phantom_cfg: PhantomConfig = PhantomConfig(), grow_mm: float = 0.8,
                 variants=("B", "C", "CM", "CMS"), base_cfg: PipelineConfig = PipelineConfig()) -> list:
    """Run each variant on the same adhesion phantoms; macro-average per variant."""
    per = {v: [] for v in variants}
    for seed in seeds:
        case = generate_phantom(replace(phantom_cfg, seed=int(seed)))
        mode = OracleMode("adhesion", grow_mm=grow_mm, seed=int(seed))
        for v in variants:
            cfg = replace(base_cfg, **VARIANTS[v])
            _, report = run_oracle_case(case, cfg, mode)
            per[v].append(report)
    rows = []
    for v in variants:
        reps = per[v]
        rows.append(AblationRow(
            variant=v,
            dice=float(np.mean([r.mean_dice for r in reps])),
            jaccard=float(np.mean([r.mean_jaccard for r in reps])),
            hd=float(np.mean([r.mean_hd for r in reps])),
            asd=float(np.mean([r.mean_asd for r in reps])),
            conflicts=int(sum(r.conflicts for r in reps)),
            misses=int(sum(len(r.misses) for r in reps)),
            spurious=int(sum(len(r.spurious) for r in reps)),
            cases=len(reps),
        ))
    return rows


def ablation_table(rows) -> str:
    head = f"{'Model':<8}Dice / Jaccard / HD (mm) / ASD (mm)"
    return "\n".join([head] + [r.line() for r in rows])
