"""Greedy submodular ordering of sub-regions and attribution scoring.

The greedy loop expands the selected set one region per rank, evaluating
F(S + alpha) for every remaining candidate and keeping the argmax (ties go
to the lowest region id, making parallel candidate evaluation order-free).
Per-rank attribution follows the marginal-effect recurrence: the first rank
gets the baseline attribution score, later ranks subtract the absolute
marginal change of F. A brute-force optimum oracle backs the approximation
bound checks.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BBox, ExplanationTarget, Image
from .errors import AttributionAborted, BackendError, CostGuardError, InvalidInputError
from .io_utils import atomic_write_bytes, save_grayscale_png, write_json
from .scoring import SubmodularObjective
from .segmentation import RegionPartition

ATTRIBUTION_BASE = 0.0  # baseline attribution score for the first rank
BRUTE_FORCE_MAX_REGIONS = 16


@dataclass(frozen=True)
class AttributionResult:
    """Ordered regions with per-rank scores and the rasterized saliency map."""

    order: tuple[int, ...]
    raw_scores: tuple[float, ...]
    f_trace: tuple[float, ...]
    normalized: tuple[float, ...]
    saliency: np.ndarray
    region_count: int
    target: ExplanationTarget
    detector_fingerprint: str = ""

    def __post_init__(self):
        m = self.region_count
        if sorted(self.order) != list(range(m)):
            raise InvalidInputError("order must be a permutation of region ids")
        if not (len(self.raw_scores) == len(self.f_trace) == len(self.normalized) == m):
            raise InvalidInputError("per-rank traces must have one entry per region")
        if m and self.raw_scores[0] != ATTRIBUTION_BASE:
            raise InvalidInputError("first raw score must equal the attribution base")
        if any(later > earlier + 1e-12 for earlier, later in zip(self.raw_scores, self.raw_scores[1:])):
            raise InvalidInputError("raw scores must be non-increasing")
        sal = np.asarray(self.saliency, dtype=np.float64)
        if sal.ndim != 2:
            raise InvalidInputError("saliency map must be 2-D")
        if np.any(sal < 0) or np.any(sal > 1):
            raise InvalidInputError("saliency values must lie in [0, 1]")
        sal = sal.copy()
        sal.flags.writeable = False
        object.__setattr__(self, "saliency", sal)
        object.__setattr__(self, "order", tuple(int(r) for r in self.order))
        object.__setattr__(self, "raw_scores", tuple(float(v) for v in self.raw_scores))
        object.__setattr__(self, "f_trace", tuple(float(v) for v in self.f_trace))
        object.__setattr__(self, "normalized", tuple(float(v) for v in self.normalized))


def normalize_attribution(raw_scores) -> np.ndarray:
    """Min-max normalize non-increasing per-rank scores; constant input maps to ones."""
    arr = np.asarray(raw_scores, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError("raw_scores must be a non-empty 1-D sequence")
    if np.any(np.diff(arr) > 1e-12):
        raise InvalidInputError("raw_scores must be non-increasing")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return np.ones_like(arr)
    return (arr - lo) / (hi - lo)


def rasterize(partition: RegionPartition, order, normalized) -> np.ndarray:
    """Paint each pixel with the normalized score of its region's rank."""
    order = list(order)
    normalized = np.asarray(normalized, dtype=np.float64)
    if len(order) != partition.region_count or len(normalized) != partition.region_count:
        raise InvalidInputError("order and normalized must cover every region")
    flat = np.empty(partition.height * partition.width, dtype=np.float64)
    for rank, region in enumerate(order):
        flat[partition.region_pixel_lists[region]] = normalized[rank]
    return flat.reshape(partition.height, partition.width)


def greedy_search(detector=None, image: Image | None = None,
                  partition: RegionPartition | None = None,
                  target: ExplanationTarget | None = None, *,
                  baseline: int = 0, workers: int = 1,
                  clue_weight: float = 1.0, collaboration_weight: float = 1.0,
                  objective: SubmodularObjective | None = None) -> AttributionResult:
    """Rank every sub-region by greedy submodular search.

    Performs exactly m(m+1)/2 objective evaluations for m regions. Candidate
    evaluations within one rank run concurrently up to ``workers``; results
    are reduced in region-id order so the output is scheduling-independent.
    Backend failures abort with the partial trace attached.
    """
    if objective is None:
        if None in (detector, image, partition, target):
            raise InvalidInputError("greedy_search needs an objective or detector+image+partition+target")
        objective = SubmodularObjective(detector, image, partition, target, baseline=baseline,
                                        clue_weight=clue_weight, collaboration_weight=collaboration_weight)
    if workers < 1:
        raise InvalidInputError("workers must be >= 1")

    m = objective.region_count
    remaining = list(range(m))
    chosen: list[int] = []
    chosen_mask = 0
    f_trace: list[float] = []
    raw_scores: list[float] = []

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for rank in range(m):
            def candidate_value(alpha, base_mask=chosen_mask):
                return objective.objective_value(objective.value(base_mask | (1 << alpha)))

            if executor is not None:
                values = list(executor.map(candidate_value, remaining))
            else:
                values = [candidate_value(alpha) for alpha in remaining]

            best_idx = 0
            for idx in range(1, len(values)):
                if values[idx] > values[best_idx]:  # ties keep the lowest region id
                    best_idx = idx
            alpha = remaining.pop(best_idx)
            f_value = values[best_idx]
            chosen.append(alpha)
            chosen_mask |= 1 << alpha
            if rank == 0:
                raw_scores.append(ATTRIBUTION_BASE)
            else:
                raw_scores.append(raw_scores[-1] - abs(f_value - f_trace[-1]))
            f_trace.append(f_value)
    except BackendError as exc:
        raise AttributionAborted(f"greedy search aborted: {exc}", order=chosen,
                                 f_trace=f_trace) from exc
    finally:
        if executor is not None:
            executor.shutdown(wait=False, cancel_futures=True)

    normalized = normalize_attribution(raw_scores)
    saliency = rasterize(objective.partition, chosen, normalized)
    return AttributionResult(
        order=tuple(chosen),
        raw_scores=tuple(raw_scores),
        f_trace=tuple(f_trace),
        normalized=tuple(float(v) for v in normalized),
        saliency=saliency,
        region_count=m,
        target=objective.target,
        detector_fingerprint=getattr(objective.detector, "fingerprint", ""),
    )


def brute_force_best(detector=None, image: Image | None = None,
                     partition: RegionPartition | None = None,
                     target: ExplanationTarget | None = None, k: int = 0, *,
                     baseline: int = 0,
                     objective: SubmodularObjective | None = None) -> tuple[tuple[int, ...], float]:
    """Exhaustive maximum of F over all size-k subsets (lexicographically
    smallest winner on ties). Refused for more than 16 regions."""
    if objective is None:
        objective = SubmodularObjective(detector, image, partition, target, baseline=baseline)
    m = objective.region_count
    if m > BRUTE_FORCE_MAX_REGIONS:
        raise CostGuardError(
            f"brute force over {m} regions needs {2 ** m} subsets; "
            f"the guard allows at most {BRUTE_FORCE_MAX_REGIONS} regions")
    if not (0 <= k <= m):
        raise InvalidInputError(f"k must lie in [0, {m}], got {k}")
    best_subset = None
    best_value = -float("inf")
    for subset in itertools.combinations(range(m), k):
        value = objective.objective_value(objective.value(subset))
        if value > best_value:  # lexicographic order of enumeration breaks ties
            best_value = value
            best_subset = subset
    return best_subset, best_value


def attribution_payload(result: AttributionResult) -> dict:
    return {
        "order": list(result.order),
        "raw_scores": list(result.raw_scores),
        "f_trace": list(result.f_trace),
        "normalized": list(result.normalized),
        "m": result.region_count,
        "target": {
            "box": list(result.target.target_box.as_tuple()),
            "category": result.target.category,
        },
        "detector_fingerprint": result.detector_fingerprint,
    }


def save_attribution(result: AttributionResult, stem, save_raw: bool = False) -> dict:
    """Write the attribution record (JSON), the 8-bit saliency PNG, and
    optionally a float32 little-endian raw dump. Returns artifact paths."""
    stem = Path(stem)
    payload = attribution_payload(result)
    png_path = stem.with_suffix(".saliency.png")
    save_grayscale_png(result.saliency, png_path)
    payload["saliency_png"] = png_path.name
    if save_raw:
        raw_path = stem.with_suffix(".saliency.raw")
        atomic_write_bytes(raw_path, result.saliency.astype("<f4").tobytes())
        payload["saliency_raw"] = {
            "file": raw_path.name,
            "dtype": "float32",
            "byte_order": "little-endian",
            "layout": "row-major",
            "height": int(result.saliency.shape[0]),
            "width": int(result.saliency.shape[1]),
        }
    json_path = stem.with_suffix(".attribution.json")
    write_json(json_path, payload)
    artifacts = {"attribution": json_path, "saliency_png": png_path}
    if save_raw:
        artifacts["saliency_raw"] = stem.with_suffix(".saliency.raw")
    return artifacts


def load_attribution(json_path, partition: RegionPartition) -> AttributionResult:
    """Rebuild an AttributionResult from its JSON record and partition."""
    payload = json.loads(Path(json_path).read_text())
    saliency = rasterize(partition, payload["order"], payload["normalized"])
    target = ExplanationTarget(
        target_box=BBox(*payload["target"]["box"]),
        category=payload["target"]["category"],
    )
    return AttributionResult(
        order=tuple(payload["order"]),
        raw_scores=tuple(payload["raw_scores"]),
        f_trace=tuple(payload["f_trace"]),
        normalized=tuple(payload["normalized"]),
        saliency=saliency,
        region_count=payload["m"],
        target=target,
        detector_fingerprint=payload.get("detector_fingerprint", ""),
    )
