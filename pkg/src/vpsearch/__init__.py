"""Explain black-box object detectors by ranking sparse image sub-regions
with a greedy submodular search, and evaluate the resulting saliency maps."""

from .core import BBox, Detection, DetectionSet, ExplanationTarget, Image, iou
from .detectors import (BlobObject, BlobWorld, CountingDetector, StdioWireDetector,
                        SyntheticBlobDetector, WireDetector, build_detector,
                        detect_synthetic_blob)
from .errors import (AttributionAborted, BackendError, ConfigError, CostGuardError,
                     InvalidInputError, UndefinedMetricError, VPSearchError,
                     WireSchemaError)
from .evaluation import (MetricReport, StepCurve, StepPoint, auc,
                         average_highest_score, curve, energy_point_game, esr,
                         metric_report, point_game, sweep)
from .scoring import (ScoreBreakdown, SubmodularObjective, clue_score,
                      collaboration_score, submodular_value)
from .search import (AttributionResult, brute_force_best, greedy_search,
                     normalize_attribution, rasterize)
from .segmentation import (RegionPartition, choose_grid, grid_partition,
                           load_partition, reveal, save_partition, segment_slico)

__version__ = "0.1.0"

__all__ = [
    "AttributionAborted", "AttributionResult", "BBox", "BackendError",
    "BlobObject", "BlobWorld", "ConfigError", "CostGuardError",
    "CountingDetector", "Detection", "DetectionSet", "ExplanationTarget",
    "Image", "InvalidInputError", "MetricReport", "RegionPartition",
    "ScoreBreakdown", "StdioWireDetector", "StepCurve", "StepPoint",
    "SubmodularObjective", "SyntheticBlobDetector", "UndefinedMetricError",
    "VPSearchError", "WireDetector", "WireSchemaError", "auc",
    "average_highest_score", "brute_force_best", "build_detector",
    "choose_grid", "clue_score", "collaboration_score", "curve",
    "detect_synthetic_blob", "energy_point_game", "esr", "greedy_search",
    "grid_partition", "iou", "load_partition", "metric_report",
    "normalize_attribution", "point_game", "rasterize", "reveal",
    "save_partition", "segment_slico", "submodular_value", "sweep",
]
