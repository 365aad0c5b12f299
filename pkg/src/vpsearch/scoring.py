"""The submodular objective: clue score, collaboration score, and their sum.

Each evaluation reveals a subset of regions (and separately its complement),
queries the detector on the masked images, and reduces the detections to the
best IoU-times-confidence response for the explanation target. Detector
outputs are memoized by subset bitmask so repeated subsets (the attribution
recurrence, curve prefixes, brute-force enumeration) cost no extra forward
passes.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .core import DetectionSet, ExplanationTarget, Image, iou
from .errors import InvalidInputError
from .segmentation import RegionPartition, reveal


def effective_score(detection, category: str, scores_available: bool = True) -> float:
    """Per-category confidence; 1.0 for boxes carrying the category when the
    backend provides no usable confidences (IoU-only mode)."""
    if scores_available:
        return detection.score(category)
    return 1.0 if category in detection.scores else 0.0


def best_response(detections: DetectionSet, target: ExplanationTarget,
                  scores_available: bool = True) -> float:
    """Max over all candidate boxes of IoU with the target times confidence."""
    best = 0.0
    for det in detections:
        r = iou(target.target_box, det.box) * effective_score(det, target.category, scores_available)
        if r > best:
            best = r
    return best


def clue_score(detections: DetectionSet, target: ExplanationTarget,
               scores_available: bool = True) -> float:
    """Response when only the subset is visible; 0 for an empty detection set."""
    return best_response(detections, target, scores_available)


def collaboration_score(detections_on_complement: DetectionSet, target: ExplanationTarget,
                        scores_available: bool = True) -> float:
    """One minus the response on the complement; 1 for an empty detection set."""
    return 1.0 - best_response(detections_on_complement, target, scores_available)


@dataclass(frozen=True)
class ScoreBreakdown:
    clue: float
    collaboration: float

    def __post_init__(self):
        if not (0.0 <= self.clue <= 1.0 and 0.0 <= self.collaboration <= 1.0):
            raise InvalidInputError("score components must lie in [0, 1]")

    @property
    def total(self) -> float:
        return self.clue + self.collaboration


class SubmodularObjective:
    """Submodular set function over region subsets for one explanation task.

    Safe for concurrent evaluation of distinct subsets; memo insertions are
    locked and in-flight detector calls are deduplicated per subset.
    """

    def __init__(self, detector, image: Image, partition: RegionPartition,
                 target: ExplanationTarget, baseline: int = 0,
                 clue_weight: float = 1.0, collaboration_weight: float = 1.0):
        self.detector = detector
        self.image = image
        self.partition = partition
        self.target = target
        self.baseline = baseline
        self.clue_weight = clue_weight
        self.collaboration_weight = collaboration_weight
        self.region_count = partition.region_count
        self.full_mask = (1 << self.region_count) - 1
        self.f_evaluations = 0
        self.detector_calls = 0
        self._memo: dict[int, DetectionSet] = {}
        self._inflight: dict[int, threading.Event] = {}
        self._lock = threading.Lock()

    def subset_mask(self, subset) -> int:
        if isinstance(subset, int):
            if subset < 0 or subset > self.full_mask:
                raise InvalidInputError(f"subset mask {subset:#x} out of range")
            return subset
        mask = 0
        for r in subset:
            r = int(r)
            if r < 0 or r >= self.region_count:
                raise InvalidInputError(f"region id {r} out of range [0, {self.region_count})")
            mask |= 1 << r
        return mask

    @staticmethod
    def mask_to_regions(mask: int) -> list[int]:
        out = []
        r = 0
        while mask:
            if mask & 1:
                out.append(r)
            mask >>= 1
            r += 1
        return out

    @property
    def scores_available(self) -> bool:
        return getattr(self.detector, "scores_available", True)

    def detections_for(self, subset) -> DetectionSet:
        """Detector output on the image with only ``subset`` revealed (memoized)."""
        mask = self.subset_mask(subset)
        while True:
            with self._lock:
                if mask in self._memo:
                    return self._memo[mask]
                event = self._inflight.get(mask)
                if event is None:
                    event = threading.Event()
                    self._inflight[mask] = event
                    break
            event.wait()
        try:
            masked = reveal(self.image, self.partition, self.mask_to_regions(mask), self.baseline)
            detections = self.detector.detect(masked)
            with self._lock:
                self._memo[mask] = detections
                self.detector_calls += 1
        finally:
            with self._lock:
                self._inflight.pop(mask, None)
            event.set()
        return detections

    def response(self, subset) -> float:
        return best_response(self.detections_for(subset), self.target, self.scores_available)

    def value(self, subset) -> ScoreBreakdown:
        """F(S): clue on the revealed subset plus collaboration via the complement."""
        mask = self.subset_mask(subset)
        clue = self.response(mask)
        collaboration = 1.0 - self.response(self.full_mask & ~mask)
        with self._lock:
            self.f_evaluations += 1
        return ScoreBreakdown(clue=clue, collaboration=collaboration)

    def objective_value(self, breakdown: ScoreBreakdown) -> float:
        return self.clue_weight * breakdown.clue + self.collaboration_weight * breakdown.collaboration


def submodular_value(detector, image: Image, partition: RegionPartition, subset,
                     target: ExplanationTarget, baseline: int = 0) -> ScoreBreakdown:
    """One-shot F(S) evaluation (two detector calls; see SubmodularObjective
    for the memoized variant)."""
    objective = SubmodularObjective(detector, image, partition, target, baseline=baseline)
    return objective.value(subset)
