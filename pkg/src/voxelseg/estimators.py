"""scikit-learn style wrappers.

Each estimator keeps its constructor arguments as plain attributes so
``get_params``/``set_params``/``clone`` work, learns nothing in ``__init__``,
and stores fitted state in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_same_grid, check_volume
from .clustering import (
    DEFAULT_DELTA_MIN,
    assign_instances,
    compute_rho_delta,
    default_rho_min,
    density_peaks,
    vote_density,
)
from .metrics import evaluate_case
from .pipeline import PipelineConfig, run_pipeline
from .sdt import signed_distance_map
from .volume import Spacing, resample


class IntensityNormalizer(TransformerMixin, BaseEstimator):
    """Percentile clipping + min-max scaling, with bounds learned in ``fit``."""

    def __init__(self, p_lo=0.5, p_hi=99.5):
        self.p_lo = p_lo
        self.p_hi = p_hi

    def fit(self, X, y=None):
        from ._errors import BadPercentiles

        if not (0 <= self.p_lo < self.p_hi <= 100):
            raise BadPercentiles(f"need 0 <= p_lo < p_hi <= 100, got {self.p_lo}, {self.p_hi}")
        vol = check_volume(X)
        self.lo_, self.hi_ = (float(v) for v in np.percentile(vol.data.astype(np.float64), [self.p_lo, self.p_hi]))
        return self

    def transform(self, X):
        check_is_fitted(self, ("lo_", "hi_"))
        vol = check_volume(X)
        data = vol.data.astype(np.float64)
        if self.hi_ <= self.lo_:
            out = np.zeros(data.shape, dtype=np.float32)
        else:
            out = ((np.clip(data, self.lo_, self.hi_) - self.lo_) / (self.hi_ - self.lo_)).astype(np.float32)
        return vol.with_data(out, kind="probability")


class VolumeResampler(TransformerMixin, BaseEstimator):
    def __init__(self, target_spacing=0.4, interp="trilinear"):
        self.target_spacing = target_spacing
        self.interp = interp

    def fit(self, X=None, y=None):
        self.target_ = Spacing.of(self.target_spacing)
        return self

    def transform(self, X):
        check_is_fitted(self, "target_")
        vol = check_volume(X)
        interp = "nearest" if vol.kind == "label" and self.interp == "auto" else self.interp
        if interp == "auto":
            interp = "trilinear"
        return resample(vol, self.target_, interp)


class SignedDistanceTransformer(TransformerMixin, BaseEstimator):
    """Binary mask in, signed distance map out (negative inside)."""

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def transform(self, X):
        vol = check_volume(X, kind="label")
        return signed_distance_map(vol)


class DensityPeakCentroids(ClusterMixin, BaseEstimator):
    """Centroids from offset votes; ``predict`` labels a mask by nearest centroid.

    ``fit`` takes the offset volume as ``X`` and the foreground mask as ``y``.
    """

    def __init__(self, rho_min=None, delta_min=DEFAULT_DELTA_MIN):
        self.rho_min = rho_min
        self.delta_min = delta_min

    def fit(self, X, y):
        offsets = check_volume(X, kind="offset")
        mask = check_volume(y, kind="label", spacing=offsets.spacing)
        check_same_grid(offsets, mask)
        self.density_ = vote_density(offsets, mask)
        _, rho, _ = compute_rho_delta(self.density_)
        self.rho_min_ = default_rho_min(int(rho[0])) if self.rho_min is None else float(self.rho_min)
        self.centroids_ = density_peaks(self.density_, self.rho_min_, self.delta_min)
        self.cluster_centers_ = self.centroids_.positions
        self.labels_ = assign_instances(mask, self.centroids_).data if len(self.centroids_) else None
        return self

    def predict(self, X):
        check_is_fitted(self, "centroids_")
        mask = check_volume(X, kind="label")
        return assign_instances(mask, self.centroids_)

    def fit_predict(self, X, y=None, **kw):
        return self.fit(X, y).labels_


class ToothInstanceSegmenter(BaseEstimator):
    """Full three-stage pipeline behind ``fit``/``predict``.

    The predictors are already trained, so ``fit`` only validates parameters.
    ``score`` returns the mean per-tooth Dice against a ground-truth label
    volume.
    """

    def __init__(self, dentition_predictor=None, offset_predictor=None, tooth_predictor=None,
                 patch_size=64, prompt_radius=2, sdm_threshold=0.0, rho_min=None,
                 delta_min=DEFAULT_DELTA_MIN, roi_margin_mm=2.0, centroid_prompt=True,
                 multilabel=True, shape=True, threads=1):
        self.dentition_predictor = dentition_predictor
        self.offset_predictor = offset_predictor
        self.tooth_predictor = tooth_predictor
        self.patch_size = patch_size
        self.prompt_radius = prompt_radius
        self.sdm_threshold = sdm_threshold
        self.rho_min = rho_min
        self.delta_min = delta_min
        self.roi_margin_mm = roi_margin_mm
        self.centroid_prompt = centroid_prompt
        self.multilabel = multilabel
        self.shape = shape
        self.threads = threads

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            patch_size=self.patch_size, prompt_radius=self.prompt_radius, sdm_threshold=self.sdm_threshold,
            rho_min=self.rho_min, delta_min=self.delta_min, roi_margin_mm=self.roi_margin_mm,
            centroid_prompt=self.centroid_prompt, multilabel=self.multilabel, shape=self.shape,
            threads=self.threads,
        )

    def fit(self, X=None, y=None):
        for name in ("dentition_predictor", "offset_predictor", "tooth_predictor"):
            if not hasattr(getattr(self, name), "predict"):
                raise TypeError(f"{name} must have a predict method")
        self.config_ = self._config()
        return self

    def predict(self, X):
        check_is_fitted(self, "config_")
        image = check_volume(X)
        self.result_ = run_pipeline(image, self.dentition_predictor, self.offset_predictor,
                                    self.tooth_predictor, self.config_)
        return self.result_.labels

    def score(self, X, y):
        labels = self.predict(X)
        gt = check_volume(y, kind="label", spacing=labels.spacing)
        return evaluate_case(labels, gt, gt.spacing).mean_dice
