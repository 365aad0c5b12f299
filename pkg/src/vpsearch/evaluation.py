"""Faithfulness and location metrics over saliency orderings.

Insertion curves reveal the top-T ranked regions; deletion curves reveal
everything but the top-T. One detector sweep per direction serves all curve
variants (clue, class, IoU), the average highest score, and the explaining
success check, since each step records the winning box's class score and IoU
plus the best confidence among boxes overlapping the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BBox, iou
from .errors import InvalidInputError, UndefinedMetricError
from .scoring import SubmodularObjective, effective_score

VARIANTS = ("clue", "class", "iou")
DIRECTIONS = ("insertion", "deletion")


@dataclass(frozen=True)
class StepPoint:
    """Detector summary at one curve step (T revealed or deleted regions)."""

    step: int
    product: float   # best IoU * confidence over all boxes
    cls: float       # confidence of the box winning the product
    iou: float       # IoU of the box winning the product
    esr_conf: float  # best confidence among boxes with IoU > 0.5


@dataclass(frozen=True)
class StepCurve:
    steps: tuple[tuple[int, float], ...]
    direction: str
    variant: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise InvalidInputError(f"direction must be one of {DIRECTIONS}")
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"variant must be one of {VARIANTS}")
        if not self.steps or self.steps[0][0] != 0:
            raise InvalidInputError("curve must start at T = 0")
        ts = [t for t, _ in self.steps]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError("curve steps must strictly increase")
        if any(not (0.0 <= v <= 1.0) for _, v in self.steps):
            raise InvalidInputError("curve values must lie in [0, 1]")


def sweep(objective: SubmodularObjective, order, direction: str) -> list[StepPoint]:
    """Evaluate the detector at every prefix size T = 0..m of the ordering."""
    if direction not in DIRECTIONS:
        raise InvalidInputError(f"direction must be one of {DIRECTIONS}")
    order = list(order)
    if sorted(order) != list(range(objective.region_count)):
        raise InvalidInputError("order must be a full permutation of region ids")
    points = []
    for t in range(len(order) + 1):
        revealed = order[:t] if direction == "insertion" else order[t:]
        detections = objective.detections_for(revealed)
        scores_available = objective.scores_available
        best_product, best_cls, best_iou, esr_conf = 0.0, 0.0, 0.0, 0.0
        for det in detections:
            overlap = iou(objective.target.target_box, det.box)
            conf = effective_score(det, objective.target.category, scores_available)
            product = overlap * conf
            if product > best_product:
                best_product, best_cls, best_iou = product, conf, overlap
            if overlap > 0.5 and conf > esr_conf:
                esr_conf = conf
        points.append(StepPoint(step=t, product=best_product, cls=best_cls,
                                iou=best_iou, esr_conf=esr_conf))
    return points


def curve_from_sweep(points, direction: str, variant: str) -> StepCurve:
    if variant not in VARIANTS:
        raise InvalidInputError(f"variant must be one of {VARIANTS}")
    attr = {"clue": "product", "class": "cls", "iou": "iou"}[variant]
    steps = tuple((p.step, getattr(p, attr)) for p in points)
    return StepCurve(steps=steps, direction=direction, variant=variant)


def curve(detector, image, partition, order, target, direction: str, variant: str,
          baseline: int = 0, objective: SubmodularObjective | None = None) -> StepCurve:
    """Insertion or deletion response curve for one metric variant."""
    if objective is None:
        objective = SubmodularObjective(detector, image, partition, target, baseline=baseline)
    return curve_from_sweep(sweep(objective, order, direction), direction, variant)


def auc(step_curve: StepCurve) -> float:
    """Trapezoidal area under the curve, normalized by the final step count."""
    steps = step_curve.steps
    t_n = steps[-1][0]
    if t_n == 0:
        raise InvalidInputError("curve must extend beyond T = 0")
    total = 0.0
    for (t_prev, v_prev), (t_cur, v_cur) in zip(steps, steps[1:]):
        total += (v_cur + v_prev) * (t_cur - t_prev)
    return total / (2.0 * t_n)


def average_highest_score(insertion_points) -> float:
    """Best class confidence over steps whose winning box has IoU > 0.5."""
    qualifying = [p.cls for p in insertion_points if p.iou > 0.5]
    return max(qualifying) if qualifying else 0.0


def point_game(saliency: np.ndarray, gt_box: BBox) -> int:
    """1 iff the first maximum-saliency pixel (row-major) lies in the box,
    edges inclusive."""
    sal = np.asarray(saliency, dtype=np.float64)
    if sal.ndim != 2:
        raise InvalidInputError("saliency map must be 2-D")
    if np.any(sal < 0) or np.any(sal > 1):
        raise InvalidInputError("saliency values must lie in [0, 1]")
    flat_idx = int(np.argmax(sal))
    row, col = divmod(flat_idx, sal.shape[1])
    inside = gt_box.x1 <= col <= gt_box.x2 and gt_box.y1 <= row <= gt_box.y2
    return int(inside)


def energy_point_game(saliency: np.ndarray, gt_box: BBox) -> float:
    """Fraction of total saliency mass falling inside the box."""
    sal = np.asarray(saliency, dtype=np.float64)
    if sal.ndim != 2:
        raise InvalidInputError("saliency map must be 2-D")
    if np.any(sal < 0):
        raise InvalidInputError("saliency must be non-negative")
    total = float(sal.sum())
    if total == 0.0:
        raise UndefinedMetricError("energy point game is undefined for all-zero saliency")
    mask = gt_box.pixel_mask(sal.shape[0], sal.shape[1])
    return float(sal[mask].sum()) / total


def esr(insertion_points, confidence_threshold: float, budget: int | None = None
        ) -> tuple[bool, int | None]:
    """Explaining-success check: smallest T <= budget whose reveal yields a
    detection with IoU > 0.5 and confidence >= the threshold."""
    if not (0.0 < confidence_threshold <= 1.0):
        raise InvalidInputError("confidence_threshold must lie in (0, 1]")
    max_t = insertion_points[-1].step
    if budget is None:
        budget = max_t
    if budget > max_t:
        raise InvalidInputError(f"budget {budget} exceeds the region count {max_t}")
    for p in insertion_points:
        if 0 < p.step <= budget and p.esr_conf >= confidence_threshold:
            return True, p.step
    return False, None


@dataclass(frozen=True)
class MetricReport:
    """Full metric battery for one sample."""

    insertion_auc: float
    deletion_auc: float
    insertion_class_auc: float
    deletion_class_auc: float
    insertion_iou_auc: float
    deletion_iou_auc: float
    avg_highest_score: float
    point_game: int | None = None
    energy_point_game: float | None = None
    esr_success: bool | None = None
    esr_minimal_t: int | None = None

    def to_payload(self) -> dict:
        return {
            "insertion_auc": self.insertion_auc,
            "deletion_auc": self.deletion_auc,
            "insertion_class_auc": self.insertion_class_auc,
            "deletion_class_auc": self.deletion_class_auc,
            "insertion_iou_auc": self.insertion_iou_auc,
            "deletion_iou_auc": self.deletion_iou_auc,
            "avg_highest_score": self.avg_highest_score,
            "point_game": self.point_game,
            "energy_point_game": self.energy_point_game,
            "esr_success": self.esr_success,
            "esr_minimal_t": self.esr_minimal_t,
        }


def metric_report(insertion_points, deletion_points, saliency=None, gt_box=None,
                  esr_threshold: float | None = None, esr_budget: int | None = None,
                  include_location: bool = True, include_esr: bool = True) -> MetricReport:
    """Assemble the metric battery from precomputed sweeps."""
    def _auc(points, direction, variant):
        return auc(curve_from_sweep(points, direction, variant))

    pg = epg = None
    if include_location and saliency is not None and gt_box is not None:
        pg = point_game(saliency, gt_box)
        try:
            epg = energy_point_game(saliency, gt_box)
        except UndefinedMetricError:
            epg = None
    esr_success = esr_minimal = None
    if include_esr and esr_threshold is not None:
        esr_success, esr_minimal = esr(insertion_points, esr_threshold, esr_budget)
    return MetricReport(
        insertion_auc=_auc(insertion_points, "insertion", "clue"),
        deletion_auc=_auc(deletion_points, "deletion", "clue"),
        insertion_class_auc=_auc(insertion_points, "insertion", "class"),
        deletion_class_auc=_auc(deletion_points, "deletion", "class"),
        insertion_iou_auc=_auc(insertion_points, "insertion", "iou"),
        deletion_iou_auc=_auc(deletion_points, "deletion", "iou"),
        avg_highest_score=average_highest_score(insertion_points),
        point_game=pg,
        energy_point_game=epg,
        esr_success=esr_success,
        esr_minimal_t=esr_minimal,
    )


def sweep_payload(points) -> list[dict]:
    return [{"step": p.step, "product": p.product, "cls": p.cls,
             "iou": p.iou, "esr_conf": p.esr_conf} for p in points]


def sweep_from_payload(entries) -> list[StepPoint]:
    points = [StepPoint(step=int(e["step"]), product=float(e["product"]),
                        cls=float(e["cls"]), iou=float(e["iou"]),
                        esr_conf=float(e["esr_conf"])) for e in entries]
    if not points or points[0].step != 0:
        raise InvalidInputError("sweep payload must start at step 0")
    for p in points:
        if not all(math.isfinite(v) for v in (p.product, p.cls, p.iou, p.esr_conf)):
            raise InvalidInputError("sweep payload contains non-finite values")
    return points
