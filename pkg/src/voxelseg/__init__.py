"""Shape-preserving tooth instance segmentation on voxel grids."""

from ._errors import DomainError
from .clustering import Centroid, CentroidSet, assign_instances, density_peaks, oracle_offsets, vote_density
from .losses import (
    LossResult,
    LossWeights,
    cross_entropy_loss,
    dentition_loss,
    dice_loss,
    gradient_check,
    multilabel_cross_entropy_loss,
    multilabel_dice_loss,
    shape_loss,
    tooth_loss,
    weighted_sum_loss,
)
from .estimators import (
    DensityPeakCentroids,
    IntensityNormalizer,
    SignedDistanceTransformer,
    ToothInstanceSegmenter,
    VolumeResampler,
)
from .metrics import CaseReport, evaluate_case, match_instances, overlap_metrics, surface_distance_metrics
from .phantom import PhantomCase, PhantomConfig, corrupt_adhesion, generate_phantom
from .pipeline import OracleMode, PipelineConfig, oracle_predictors, run_ablation, run_oracle_case, run_pipeline
from .sdt import boundary_mask, edt, signed_distance_map
from .volume import Spacing, VoxelVolume, load_volume, normalize_intensity, resample, save_volume

__version__ = "0.1.0"

__all__ = [
    "Centroid", "CentroidSet", "CaseReport", "DensityPeakCentroids", "DomainError", "IntensityNormalizer", "LossResult", "LossWeights", "OracleMode",
    "PhantomCase", "PhantomConfig", "PipelineConfig", "SignedDistanceTransformer", "Spacing",
    "ToothInstanceSegmenter", "VolumeResampler", "VoxelVolume",
    "assign_instances", "boundary_mask", "corrupt_adhesion", "cross_entropy_loss", "density_peaks",
    "dentition_loss", "dice_loss", "edt", "evaluate_case", "generate_phantom", "gradient_check",
    "load_volume", "match_instances", "multilabel_cross_entropy_loss", "multilabel_dice_loss",
    "normalize_intensity", "oracle_offsets", "oracle_predictors", "overlap_metrics", "resample", "run_ablation",
    "run_oracle_case", "run_pipeline", "save_volume", "shape_loss", "signed_distance_map",
    "surface_distance_metrics", "tooth_loss", "vote_density", "weighted_sum_loss",
]
