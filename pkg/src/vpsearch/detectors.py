"""Black-box detector backends behind one contract: image in, DetectionSet out.

Two families: synthetic analytic detectors (closed-form responses used as
test oracles) and wire-protocol clients talking to external model servers
over HTTP or stdio. Both see only pixel values, so masking semantics are
identical across backends.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .core import BBox, Detection, DetectionSet, Image
from .errors import BackendError, InvalidInputError, WireSchemaError
from .io_utils import encode_png

DEFAULT_N_MAX = 300


def _pixel_block(box: BBox, height: int, width: int):
    """Integer pixel block whose centers fall inside the half-open box."""
    r0 = math.ceil(box.y1 - 0.5)
    r1 = math.ceil(box.y2 - 0.5)
    c0 = math.ceil(box.x1 - 0.5)
    c1 = math.ceil(box.x2 - 0.5)
    if r0 < 0 or c0 < 0 or r1 > height or c1 > width:
        raise InvalidInputError(f"box {box.as_tuple()} exceeds the {height}x{width} image")
    return r0, r1, c0, c1


@dataclass(frozen=True)
class BlobObject:
    """One analytic object: response = visible_fraction**exponent, optionally
    damped by (1 - weight * inhibitor_visible_fraction)."""

    region: BBox
    category: str
    exponent: float = 1.0
    inhibitor_region: BBox | None = None
    inhibitor_weight: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.exponent) and self.exponent >= 0):
            raise InvalidInputError(f"exponent must be finite and >= 0, got {self.exponent}")
        if not (0.0 <= self.inhibitor_weight <= 1.0):
            raise InvalidInputError(f"inhibitor weight must be in [0, 1], got {self.inhibitor_weight}")
        if self.inhibitor_weight > 0 and self.inhibitor_region is None:
            raise InvalidInputError("inhibitor weight given without an inhibitor region")


@dataclass(frozen=True)
class BlobWorld:
    """Synthetic detector configuration: a list of analytic objects."""

    objects: tuple[BlobObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def categories(self) -> list[str]:
        return sorted({o.category for o in self.objects})

    def to_payload(self) -> dict:
        out = []
        for o in self.objects:
            entry = {
                "region": list(o.region.as_tuple()),
                "category": o.category,
                "exponent": o.exponent,
            }
            if o.inhibitor_region is not None:
                entry["inhibitor"] = {
                    "region": list(o.inhibitor_region.as_tuple()),
                    "weight": o.inhibitor_weight,
                }
            out.append(entry)
        return {"objects": out}

    @classmethod
    def from_payload(cls, payload: dict) -> "BlobWorld":
        objects = []
        for entry in payload.get("objects", []):
            inhibitor = entry.get("inhibitor")
            objects.append(BlobObject(
                region=BBox(*entry["region"]),
                category=str(entry["category"]),
                exponent=float(entry.get("exponent", 1.0)),
                inhibitor_region=BBox(*inhibitor["region"]) if inhibitor else None,
                inhibitor_weight=float(inhibitor["weight"]) if inhibitor else 0.0,
            ))
        return cls(objects=tuple(objects))


def _visible_fraction(image: Image, box: BBox, baseline: int):
    r0, r1, c0, c1 = _pixel_block(box, image.height, image.width)
    block = image.pixels[r0:r1, c0:c1]
    total = block.shape[0] * block.shape[1]
    if total == 0:
        return 0.0, None
    visible = np.any(block != baseline, axis=2)
    count = int(np.count_nonzero(visible))
    if count == 0:
        return 0.0, None
    ys, xs = np.nonzero(visible)
    tight = BBox(
        x1=float(c0 + xs.min()), y1=float(r0 + ys.min()),
        x2=float(c0 + xs.max() + 1), y2=float(r0 + ys.max() + 1),
    )
    return count / total, tight


def detect_synthetic_blob(world: BlobWorld, image: Image, baseline: int = 0,
                          categories=None) -> DetectionSet:
    """Analytic detection: per object, score = v**p * (1 - w*u) over visible pixels."""
    vocabulary = list(categories) if categories is not None else world.categories()
    detections = []
    for obj in world.objects:
        v, tight = _visible_fraction(image, obj.region, baseline)
        if v == 0.0:
            continue
        u = 0.0
        if obj.inhibitor_region is not None:
            u, _ = _visible_fraction(image, obj.inhibitor_region, baseline)
        score = (v ** obj.exponent) * (1.0 - obj.inhibitor_weight * u)
        scores = {cat: 0.0 for cat in vocabulary}
        scores[obj.category] = float(score)
        detections.append(Detection(box=tight, scores=scores))
    return DetectionSet(detections=tuple(detections))


def _apply_output_policy(detections, n_max, score_threshold):
    dets = list(detections)
    if score_threshold is not None:
        dets = [d for d in dets if d.best_score() >= score_threshold]
    dets.sort(key=lambda d: -d.best_score())  # stable: original order breaks ties
    return DetectionSet(detections=tuple(dets[:n_max]))


class SyntheticBlobDetector:
    """Detector wrapper over a BlobWorld; pure and safe for concurrent calls."""

    kind = "synthetic-blob"

    def __init__(self, world: BlobWorld, categories=None, n_max: int = DEFAULT_N_MAX,
                 score_threshold: float | None = None, baseline: int = 0,
                 scores_available: bool = True):
        if n_max < 1:
            raise InvalidInputError("n_max must be >= 1")
        if score_threshold is not None and not (0.0 <= score_threshold <= 1.0):
            raise InvalidInputError("score_threshold must be in [0, 1]")
        self.world = world
        self.categories = list(categories) if categories is not None else world.categories()
        self.n_max = n_max
        self.score_threshold = score_threshold
        self.baseline = baseline
        self.scores_available = scores_available

    def detect(self, image: Image) -> DetectionSet:
        raw = detect_synthetic_blob(self.world, image, baseline=self.baseline,
                                    categories=self.categories)
        return _apply_output_policy(raw, self.n_max, self.score_threshold)

    @property
    def fingerprint(self) -> str:
        payload = json.dumps({
            "kind": self.kind,
            "world": self.world.to_payload(),
            "n_max": self.n_max,
            "score_threshold": self.score_threshold,
            "baseline": self.baseline,
        }, sort_keys=True)
        return "blob:" + hashlib.sha256(payload.encode()).hexdigest()[:16]


def parse_wire_payload(payload, n_max: int) -> tuple[DetectionSet, bool]:
    """Validate a wire response strictly; schema violations are never coerced."""
    if not isinstance(payload, dict):
        raise WireSchemaError(f"wire response must be an object, got {type(payload).__name__}")
    if "detections" not in payload or "scores_available" not in payload:
        raise WireSchemaError("wire response requires 'detections' and 'scores_available'")
    scores_available = payload["scores_available"]
    if not isinstance(scores_available, bool):
        raise WireSchemaError("'scores_available' must be a boolean")
    raw = payload["detections"]
    if not isinstance(raw, list):
        raise WireSchemaError("'detections' must be a list")
    if len(raw) > n_max:
        raise WireSchemaError(f"server returned {len(raw)} detections, more than n_max={n_max}")
    detections = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise WireSchemaError(f"detection {i} must be an object")
        box = entry.get("box")
        if (not isinstance(box, list) or len(box) != 4
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in box)):
            raise WireSchemaError(f"detection {i} 'box' must be four numbers")
        scores = entry.get("scores")
        if not isinstance(scores, dict) or not scores:
            raise WireSchemaError(f"detection {i} 'scores' must be a non-empty object")
        for cat, s in scores.items():
            if not isinstance(cat, str):
                raise WireSchemaError(f"detection {i} score keys must be strings")
            if isinstance(s, bool) or not isinstance(s, (int, float)) or not (0.0 <= s <= 1.0):
                raise WireSchemaError(f"detection {i} score for {cat!r} must be in [0, 1]")
        try:
            detections.append(Detection(
                box=BBox(*(float(c) for c in box)),
                scores={cat: float(s) for cat, s in scores.items()},
            ))
        except InvalidInputError as exc:
            raise WireSchemaError(f"detection {i} invalid: {exc}") from exc
    return DetectionSet(detections=tuple(detections)), scores_available


def _build_request(image: Image, categories, n_max: int) -> dict:
    return {
        "image_png_base64": base64.b64encode(encode_png(image)).decode("ascii"),
        "categories": list(categories),
        "n_max": n_max,
    }


class WireDetector:
    """HTTP client for the detection wire protocol (POST /detect)."""

    kind = "wire"

    def __init__(self, url: str, categories, n_max: int = DEFAULT_N_MAX,
                 score_threshold: float | None = None, timeout: float = 60.0,
                 iou_only: bool = False, session=None):
        if n_max < 1:
            raise InvalidInputError("n_max must be >= 1")
        self.url = url.rstrip("/")
        if not self.url.endswith("/detect"):
            self.url += "/detect"
        self.categories = list(categories)
        self.n_max = n_max
        self.score_threshold = score_threshold
        self.timeout = timeout
        self._session = session or requests.Session()
        # Sticky: once any response declares no usable confidences, stay in
        # IoU-only mode so scoring is consistent across the whole run.
        self._scores_available = not iou_only

    @property
    def scores_available(self) -> bool:
        return self._scores_available

    def detect(self, image: Image) -> DetectionSet:
        request = _build_request(image, self.categories, self.n_max)
        try:
            resp = self._session.post(self.url, json=request, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"wire transport failure against {self.url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"wire server returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise WireSchemaError(f"wire response is not valid JSON: {exc}") from exc
        detections, scores_available = parse_wire_payload(payload, self.n_max)
        if not scores_available:
            self._scores_available = False
        return _apply_output_policy(detections, self.n_max, self.score_threshold)

    @property
    def fingerprint(self) -> str:
        return f"wire:{self.url}"


class StdioWireDetector:
    """Wire protocol over a child process: one JSON line per request/response.

    Calls are serialized with a lock; the child sees requests in order.
    """

    kind = "wire-stdio"

    def __init__(self, command: str, categories, n_max: int = DEFAULT_N_MAX,
                 score_threshold: float | None = None, iou_only: bool = False):
        self.command = command
        self.categories = list(categories)
        self.n_max = n_max
        self.score_threshold = score_threshold
        self._scores_available = not iou_only
        self._lock = threading.Lock()
        try:
            self._proc = subprocess.Popen(
                shlex.split(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1)
        except OSError as exc:
            raise BackendError(f"cannot start wire subprocess {command!r}: {exc}") from exc

    @property
    def scores_available(self) -> bool:
        return self._scores_available

    def detect(self, image: Image) -> DetectionSet:
        request = _build_request(image, self.categories, self.n_max)
        with self._lock:
            try:
                self._proc.stdin.write(json.dumps(request, separators=(",", ":")) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (OSError, ValueError) as exc:
                raise BackendError(f"stdio transport failure: {exc}") from exc
        if not line:
            raise BackendError("stdio wire subprocess closed its output")
        try:
            payload = json.loads(line)
        except ValueError as exc:
            raise WireSchemaError(f"stdio response is not valid JSON: {exc}") from exc
        detections, scores_available = parse_wire_payload(payload, self.n_max)
        if not scores_available:
            self._scores_available = False
        return _apply_output_policy(detections, self.n_max, self.score_threshold)

    def close(self):
        with self._lock:
            if self._proc.poll() is None:
                self._proc.terminate()
                self._proc.wait(timeout=5)

    @property
    def fingerprint(self) -> str:
        return f"wire-stdio:{self.command}"


class CountingDetector:
    """Wrapper that counts forward passes; used by instrumentation and tests."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def detect(self, image: Image) -> DetectionSet:
        with self._lock:
            self.calls += 1
        return self.inner.detect(image)

    def __getattr__(self, name):
        return getattr(self.inner, name)


def load_blob_world(path) -> BlobWorld:
    try:
        payload = json.loads(open(path).read())
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read blob world {path}: {exc}") from exc
    return BlobWorld.from_payload(payload)


def build_detector(expr: str, categories=None, n_max: int = DEFAULT_N_MAX,
                   score_threshold: float | None = None, iou_only: bool = False,
                   baseline: int = 0):
    """Construct a detector from a CLI expression: blob:PATH, wire:URL, stdio:CMD."""
    if expr.startswith("blob:"):
        world = load_blob_world(expr[len("blob:"):])
        detector = SyntheticBlobDetector(
            world, categories=categories, n_max=n_max,
            score_threshold=score_threshold, baseline=baseline,
            scores_available=not iou_only)
        return detector
    if expr.startswith("wire:"):
        return WireDetector(expr[len("wire:"):], categories=categories or [],
                            n_max=n_max, score_threshold=score_threshold,
                            iou_only=iou_only)
    if expr.startswith("stdio:"):
        return StdioWireDetector(expr[len("stdio:"):], categories=categories or [],
                                 n_max=n_max, score_threshold=score_threshold,
                                 iou_only=iou_only)
    raise InvalidInputError(f"unknown detector expression {expr!r} "
                            "(expected blob:PATH, wire:URL, or stdio:CMD)")
