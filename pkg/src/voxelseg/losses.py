"""Segmentation and shape losses with analytic gradients.

Every loss returns a :class:`LossResult` holding the scalar value and the
derivative with respect to the prediction.  Composite objectives whose terms
act on different prediction heads carry gradients keyed by head name.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np
from scipy import ndimage

from ._errors import GradShapeMismatch, LengthMismatch, NoClasses, ShapeMismatch
from .sdt import boundary_mask

DICE_EPS = 1e-6
CE_CLAMP = 1e-7

Gradient = Union[np.ndarray, Mapping[str, np.ndarray]]


@dataclass(frozen=True)
class LossResult:
    value: float
    gradient: Gradient

    def named(self, head: str) -> "LossResult":
        if isinstance(self.gradient, Mapping):
            return self
        return LossResult(self.value, {head: self.gradient})


@dataclass(frozen=True)
class LossWeights:
    """Loss weights.  ``mu1 + mu2`` must equal 1."""

    mu1: float = 0.5
    mu2: float = 0.5
    lambda0: float = 0.1
    lambda1: float = 0.4
    lambda2: float = 0.4
    class_weights: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        vals = (self.mu1, self.mu2, self.lambda0, self.lambda1, self.lambda2) + tuple(self.class_weights)
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise ValueError("loss weights must be non-negative and finite")
        if abs(self.mu1 + self.mu2 - 1.0) > 1e-12:
            raise ValueError(f"mu1 + mu2 must be 1, got {self.mu1 + self.mu2}")


def _pair(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeMismatch(f"prediction {p.shape} vs target {q.shape}")
    return p, q


def _classes(P, Q, weights):
    P, Q = _pair(P, Q)
    if P.ndim == 0 or P.shape[0] == 0:
        raise NoClasses("need at least one class")
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.shape[0] != P.shape[0]:
        raise LengthMismatch(f"{w.shape[0]} class weights for {P.shape[0]} classes")
    return P, Q, w


def dice_loss(p, q) -> LossResult:
    """Soft Dice, ``1 - 2 sum(p q) / (sum p + sum q + eps)``."""
    p, q = _pair(p, q)
    inter = np.sum(p * q)
    denom = np.sum(p) + np.sum(q) + DICE_EPS
    value = 1.0 - 2.0 * inter / denom
    grad = -2.0 * (q * denom - inter) / (denom * denom)
    return LossResult(float(value), grad)


def cross_entropy_loss(p, q) -> LossResult:
    """Mean binary cross-entropy with probabilities clamped to ``[1e-7, 1 - 1e-7]``."""
    p, q = _pair(p, q)
    m = p.size
    if m == 0:
        raise ShapeMismatch("cross-entropy needs at least one voxel")
    ph = np.clip(p, CE_CLAMP, 1.0 - CE_CLAMP)
    term = q * np.log(ph) + (1.0 - q) * np.log(1.0 - ph)
    value = -np.sum(term) / m
    active = (p > CE_CLAMP) & (p < 1.0 - CE_CLAMP)
    grad = np.where(active, -(q / ph - (1.0 - q) / (1.0 - ph)) / m, 0.0)
    return LossResult(float(value), grad)


def shape_loss(r, sdm_gt, batch_axis: int | None = None) -> LossResult:
    """Mean squared error between predicted and target level sets.

    With ``batch_axis`` set, the per-volume MSE is averaged over that axis.
    """
    r, g = _pair(getattr(r, "data", r), getattr(sdm_gt, "data", sdm_gt))
    n = 1 if batch_axis is None else r.shape[batch_axis]
    m = r.size // n
    diff = r - g
    value = np.sum(diff * diff) / (m * n)
    return LossResult(float(value), 2.0 * diff / (m * n))


def multilabel_dice_loss(P, Q, weights) -> LossResult:
    """Class-weighted soft Dice over a leading class axis."""
    P, Q, w = _classes(P, Q, weights)
    inter = 0.0
    denom = 0.0
    for c in range(P.shape[0]):
        inter = inter + w[c] * np.sum(P[c] * Q[c])
        denom = denom + w[c] * (np.sum(P[c]) + np.sum(Q[c]))
    denom = denom + DICE_EPS
    value = 1.0 - 2.0 * inter / denom
    grad = np.empty_like(P)
    for c in range(P.shape[0]):
        grad[c] = -2.0 * w[c] * (Q[c] * denom - inter) / (denom * denom)
    return LossResult(float(value), grad)


def multilabel_cross_entropy_loss(P, Q, weights) -> LossResult:
    """Class-weighted binary cross-entropy summed over classes, averaged over voxels."""
    P, Q, w = _classes(P, Q, weights)
    m = P[0].size
    if m == 0:
        raise ShapeMismatch("cross-entropy needs at least one voxel")
    total = 0.0
    grad = np.empty_like(P)
    for c in range(P.shape[0]):
        p, q = P[c], Q[c]
        ph = np.clip(p, CE_CLAMP, 1.0 - CE_CLAMP)
        term = q * np.log(ph) + (1.0 - q) * np.log(1.0 - ph)
        total = total + w[c] * np.sum(term)
        active = (p > CE_CLAMP) & (p < 1.0 - CE_CLAMP)
        grad[c] = np.where(active, -(w[c] * (q / ph - (1.0 - q) / (1.0 - ph))) / m, 0.0)
    return LossResult(float(-total / m), grad)


def weighted_sum_loss(terms: Sequence[LossResult], weights: Sequence[float]) -> LossResult:
    """``sum w_i L_i`` with gradients summed per head.

    Plain-array gradients must all share one shape.  If any term carries a
    head-keyed gradient, all must, and gradients are summed key by key.
    """
    terms = list(terms)
    weights = [float(w) for w in weights]
    if len(terms) != len(weights) or not terms:
        raise LengthMismatch(f"{len(terms)} terms vs {len(weights)} weights")
    value = 0.0
    for t, w in zip(terms, weights):
        value += w * t.value
    keyed = [isinstance(t.gradient, Mapping) for t in terms]
    if not any(keyed):
        shape = np.shape(terms[0].gradient)
        grad = np.zeros(shape)
        for t, w in zip(terms, weights):
            if np.shape(t.gradient) != shape:
                raise GradShapeMismatch(f"gradient shapes {shape} and {np.shape(t.gradient)}")
            grad = grad + w * t.gradient
        return LossResult(value, grad)
    if not all(keyed):
        raise GradShapeMismatch("mix of plain and head-keyed gradients; name the plain terms first")
    out: dict = {}
    for t, w in zip(terms, weights):
        for head, g in t.gradient.items():
            if head in out:
                if out[head].shape != np.shape(g):
                    raise GradShapeMismatch(f"head {head!r}: {out[head].shape} vs {np.shape(g)}")
                out[head] = out[head] + w * g
            else:
                out[head] = w * np.asarray(g, dtype=np.float64)
    return LossResult(value, out)


# -- composite objectives ------------------------------------------------------

def segmentation_loss(p, q, weights: LossWeights = LossWeights()) -> LossResult:
    """Dice plus cross-entropy, weighted by ``mu1`` and ``mu2``."""
    return weighted_sum_loss([dice_loss(p, q), cross_entropy_loss(p, q)], [weights.mu1, weights.mu2])


def dentition_loss(p, q, r, sdm_gt, weights: LossWeights = LossWeights()) -> LossResult:
    """Segmentation loss plus ``lambda0`` times the shape loss; gradients keyed ``seg``/``shape``."""
    return weighted_sum_loss(
        [segmentation_loss(p, q, weights).named("seg"), shape_loss(r, sdm_gt).named("shape")],
        [1.0, weights.lambda0],
    )


def multilabel_segmentation_loss(P, Q, weights: LossWeights = LossWeights()) -> LossResult:
    w = weights.class_weights
    return weighted_sum_loss([multilabel_dice_loss(P, Q, w), multilabel_cross_entropy_loss(P, Q, w)],
                             [weights.mu1, weights.mu2])


def tooth_loss(P, Q, P_bdr, Q_bdr, r, sdm_gt, weights: LossWeights = LossWeights()) -> LossResult:
    """Mask + ``lambda1`` boundary + ``lambda2`` shape; gradients keyed ``seg``/``bdr``/``shape``."""
    return weighted_sum_loss(
        [
            multilabel_segmentation_loss(P, Q, weights).named("seg"),
            multilabel_segmentation_loss(P_bdr, Q_bdr, weights).named("bdr"),
            shape_loss(r, sdm_gt).named("shape"),
        ],
        [1.0, weights.lambda1, weights.lambda2],
    )


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[None] == np.arange(n_classes).reshape((-1,) + (1,) * labels.ndim)).astype(np.float64)


def boundary_targets(labels, n_classes: int = 3) -> np.ndarray:
    """Per-class boundary indicators, each widened by one voxel.

    Class 0 is the complement of the foreground boundaries.
    """
    labels = np.asarray(labels)
    out = np.zeros((n_classes,) + labels.shape)
    for c in range(1, n_classes):
        edge = boundary_mask(labels == c)
        if edge.any():
            out[c] = ndimage.binary_dilation(edge)
    out[0] = 1.0 - np.clip(out[1:].sum(axis=0), 0, 1)
    return out


# -- numerical verification ----------------------------------------------------

def gradient_check(loss_op: Callable[..., LossResult], inputs: Sequence, step: float = 1e-3,
                   trials: int = 20, rng=None, wrt: int = 0, head: str | None = None,
                   order: int = 4, margin: float | None = None) -> float:
    """Max relative error between analytic and finite-difference gradients.

    Perturbs randomly chosen elements of ``inputs[wrt]`` with a central
    difference stencil (``order`` 2 or 4).  Elements whose stencil would cross
    the cross-entropy clamp are skipped.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    rng = np.random.default_rng(rng)
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    base = loss_op(*inputs)
    grad = base.gradient[head] if head is not None else base.gradient
    x = inputs[wrt]
    reach = step * (2 if order == 4 else 1)
    margin = CE_CLAMP + reach if margin is None else margin
    worst = 0.0
    flat_candidates = np.arange(x.size)
    for _ in range(trials):
        for _attempt in range(100):
            j = int(rng.choice(flat_candidates))
            v = x.flat[j]
            if margin == 0 or margin <= v <= 1.0 - margin:
                break
        else:
            continue

        def f(delta):
            xs = list(inputs)
            xp = x.copy()
            xp.flat[j] = v + delta
            xs[wrt] = xp
            return loss_op(*xs).value

        if order == 2:
            num = (f(step) - f(-step)) / (2 * step)
        else:
            num = (8 * (f(step) - f(-step)) - (f(2 * step) - f(-2 * step))) / (12 * step)
        ana = float(np.asarray(grad).flat[j])
        scale = max(abs(num), abs(ana), 1e-12)
        worst = max(worst, abs(num - ana) / scale)
    return worst


def _random_instance(rng, shape, n_classes=3):
    p = rng.uniform(0.05, 0.95, shape)
    q = (rng.random(shape) < 0.5).astype(np.float64)
    r = rng.normal(0.0, 2.0, shape)
    g = rng.normal(0.0, 2.0, shape)
    P = rng.uniform(0.05, 0.95, (n_classes,) + shape)
    Q = one_hot(rng.integers(0, n_classes, shape), n_classes)
    Pb = rng.uniform(0.05, 0.95, (n_classes,) + shape)
    Qb = boundary_targets(rng.integers(0, n_classes, shape), n_classes)
    return p, q, r, g, P, Q, Pb, Qb


def gradient_report(instances: int = 50, seed: int = 0, shape=(4, 4, 4), step: float = 1e-3,
                    trials: int = 16, weights: LossWeights = LossWeights()) -> dict:
    """Worst finite-difference relative error per loss over random instances.

    Predictions are drawn from ``[0.05, 0.95]``; composite losses are checked
    once per gradient head.
    """
    rng = np.random.default_rng(seed)
    cw = weights.class_weights
    worst: dict = {}

    def note(name, err):
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(int(instances)):
        p, q, r, g, P, Q, Pb, Qb = _random_instance(rng, tuple(shape), len(cw))
        kw = dict(step=step, trials=trials, rng=rng)
        note("dice", gradient_check(dice_loss, [p, q], **kw))
        note("cross_entropy", gradient_check(cross_entropy_loss, [p, q], **kw))
        note("shape", gradient_check(shape_loss, [r, g], margin=0, **kw))
        note("multilabel_dice", gradient_check(lambda a, b: multilabel_dice_loss(a, b, cw), [P, Q], **kw))
        note("multilabel_cross_entropy",
             gradient_check(lambda a, b: multilabel_cross_entropy_loss(a, b, cw), [P, Q], **kw))
        note("segmentation", gradient_check(lambda a, b: segmentation_loss(a, b, weights), [p, q], **kw))
        note("multilabel_segmentation",
             gradient_check(lambda a, b: multilabel_segmentation_loss(a, b, weights), [P, Q], **kw))
        dent = lambda a, b, c, d: dentition_loss(a, b, c, d, weights)  # noqa: E731
        note("dentition", max(gradient_check(dent, [p, q, r, g], wrt=0, head="seg", **kw),
                              gradient_check(dent, [p, q, r, g], wrt=2, head="shape", margin=0, **kw)))
        tooth = lambda *a: tooth_loss(*a, weights)  # noqa: E731
        args = [P, Q, Pb, Qb, r, g]
        note("tooth", max(gradient_check(tooth, args, wrt=0, head="seg", **kw),
                          gradient_check(tooth, args, wrt=2, head="bdr", **kw),
                          gradient_check(tooth, args, wrt=4, head="shape", margin=0, **kw)))
    return worst
