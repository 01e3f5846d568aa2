"""Overlap and surface-distance metrics, instance matching, case reports."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from ._edt import squared_edt
from ._errors import EmptyGroundTruth, EmptyMask, ShapeMismatch
from .sdt import as_binary, boundary_mask
from .volume import Spacing, VoxelVolume


@dataclass(frozen=True)
class OverlapScores:
    dice: float
    jaccard: float


@dataclass(frozen=True)
class SurfaceScores:
    hd: float
    asd: float
    hd95: float | None = None


def _data(x):
    return x.data if isinstance(x, VoxelVolume) else np.asarray(x)


def overlap_metrics(pred, gt) -> OverlapScores:
    a = as_binary(pred)
    b = as_binary(gt)
    if a.shape != b.shape:
        raise ShapeMismatch(f"pred {a.shape} vs gt {b.shape}")
    nb = int(b.sum())
    if nb == 0:
        raise EmptyGroundTruth("ground-truth mask is empty")
    na = int(a.sum())
    inter = int(np.count_nonzero(a & b))
    dice = 2.0 * inter / (na + nb)
    jaccard = inter / (na + nb - inter)
    return OverlapScores(dice, jaccard)


def directed_surface_distances(pred, gt, spacing=1.0):
    """Distances (mm) from each boundary voxel of one mask to the other's boundary.

    Returns ``(d_pred_to_gt, d_gt_to_pred)``.
    """
    a = as_binary(pred)
    b = as_binary(gt)
    if a.shape != b.shape:
        raise ShapeMismatch(f"pred {a.shape} vs gt {b.shape}")
    if not a.any() or not b.any():
        raise EmptyMask("surface distances need two non-empty masks")
    sp = tuple(Spacing.of(spacing))
    pa = boundary_mask(a)
    pb = boundary_mask(b)
    # only the bounding box of both boundaries matters
    both = pa | pb
    idx = np.argwhere(both)
    sl = tuple(slice(lo, hi + 1) for lo, hi in zip(idx.min(axis=0), idx.max(axis=0)))
    pa, pb = pa[sl], pb[sl]
    d_ab = np.sqrt(squared_edt(pb, sp)[pa])
    d_ba = np.sqrt(squared_edt(pa, sp)[pb])
    return d_ab, d_ba


def surface_distance_metrics(pred, gt, spacing=None, hd95: bool = False) -> SurfaceScores:
    """Hausdorff distance and symmetric pooled average surface distance (mm)."""
    if spacing is None:
        spacing = pred.spacing if isinstance(pred, VoxelVolume) else 1.0
    d_ab, d_ba = directed_surface_distances(pred, gt, spacing)
    hd = float(max(d_ab.max(), d_ba.max()))
    pooled = np.concatenate([d_ab, d_ba])
    asd = float(pooled.sum() / pooled.size)
    p95 = float(max(np.percentile(d_ab, 95), np.percentile(d_ba, 95))) if hd95 else None
    return SurfaceScores(hd, min(asd, hd), p95)


def _instance_table(pred, gt):
    p = _data(pred).astype(np.int64)
    g = _data(gt).astype(np.int64)
    if p.shape != g.shape:
        raise ShapeMismatch(f"pred {p.shape} vs gt {g.shape}")
    gt_ids = np.unique(g[g > 0])
    pred_ids = np.unique(p[p > 0])
    gt_sizes = {int(i): int(n) for i, n in zip(*np.unique(g[g > 0], return_counts=True))}
    pred_sizes = {int(i): int(n) for i, n in zip(*np.unique(p[p > 0], return_counts=True))}
    both = (g > 0) & (p > 0)
    pairs, counts = np.unique(np.stack([g[both], p[both]]), axis=1, return_counts=True)
    inter = {(int(a), int(b)): int(n) for (a, b), n in zip(pairs.T, counts)}
    return [int(i) for i in gt_ids], [int(i) for i in pred_ids], gt_sizes, pred_sizes, inter


def match_instances(pred_labels, gt_labels) -> list:
    """Greedy one-to-one matching by descending pairwise Dice.

    Only pairs that overlap are considered.  Ties go to the lower gt id, then
    the lower pred id.
    """
    _, _, gt_sizes, pred_sizes, inter = _instance_table(pred_labels, gt_labels)
    cands = []
    for (g, p), n in inter.items():
        dice = 2.0 * n / (gt_sizes[g] + pred_sizes[p])
        cands.append((-dice, g, p))
    cands.sort()
    used_g, used_p, out = set(), set(), []
    for _, g, p in cands:
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
        out.append((g, p))
    out.sort()
    return out


@dataclass
class InstanceScore:
    gt_id: int
    pred_id: int
    overlap: OverlapScores
    surface: SurfaceScores


@dataclass
class CaseReport:
    matches: list = field(default_factory=list)
    misses: list = field(default_factory=list)
    spurious: list = field(default_factory=list)
    conflicts: int | None = None

    def _mean(self, get):
        if not self.matches:
            return float("nan")
        return float(np.mean([get(m) for m in self.matches]))

    @property
    def mean_dice(self) -> float:
        return self._mean(lambda m: m.overlap.dice)

    @property
    def mean_jaccard(self) -> float:
        return self._mean(lambda m: m.overlap.jaccard)

    @property
    def mean_hd(self) -> float:
        return self._mean(lambda m: m.surface.hd)

    @property
    def mean_asd(self) -> float:
        return self._mean(lambda m: m.surface.asd)

    def means(self) -> dict:
        return {"dice": self.mean_dice, "jaccard": self.mean_jaccard, "hd_mm": self.mean_hd, "asd_mm": self.mean_asd}

    def summary_line(self) -> str:
        return format_scores(self.mean_dice, self.mean_jaccard, self.mean_hd, self.mean_asd)

    def to_json(self) -> dict:
        out = {
            "instances": [
                {"gt_id": m.gt_id, "pred_id": m.pred_id, **asdict(m.overlap),
                 "hd_mm": m.surface.hd, "asd_mm": m.surface.asd,
                 **({"hd95_mm": m.surface.hd95} if m.surface.hd95 is not None else {})}
                for m in self.matches
            ],
            "misses": list(self.misses),
            "spurious": list(self.spurious),
            "mean": self.means(),
        }
        if self.conflicts is not None:
            out["conflicts"] = int(self.conflicts)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gt_id", "pred_id", "dice", "jaccard", "hd_mm", "asd_mm"])
        for m in self.matches:
            w.writerow([m.gt_id, m.pred_id, f"{m.overlap.dice:.6f}", f"{m.overlap.jaccard:.6f}",
                        f"{m.surface.hd:.6f}", f"{m.surface.asd:.6f}"])
        for g in self.misses:
            w.writerow([g, "", "", "", "", ""])
        return buf.getvalue()


def format_scores(dice, jaccard, hd, asd) -> str:
    return f"{dice:.4f} / {jaccard:.4f} / {hd:.4f} / {asd:.4f}"


def evaluate_case(pred_labels, gt_labels, spacing=None, hd95: bool = False) -> CaseReport:
    """Per-instance Dice/Jaccard/HD/ASD for matched pairs, plus misses and spurious ids."""
    if spacing is None:
        spacing = gt_labels.spacing if isinstance(gt_labels, VoxelVolume) else 1.0
    p = _data(pred_labels)
    g = _data(gt_labels)
    gt_ids, pred_ids, _, _, _ = _instance_table(p, g)
    if not gt_ids:
        raise EmptyGroundTruth("ground truth has no instances")
    pairs = match_instances(p, g)
    matches = []
    for gid, pid in pairs:
        a = p == pid
        b = g == gid
        matches.append(InstanceScore(gid, pid, overlap_metrics(a, b), surface_distance_metrics(a, b, spacing, hd95)))
    matched_g = {m.gt_id for m in matches}
    matched_p = {m.pred_id for m in matches}
    return CaseReport(
        matches=matches,
        misses=[i for i in gt_ids if i not in matched_g],
        spurious=[i for i in pred_ids if i not in matched_p],
    )
