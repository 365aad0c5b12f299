"""Newline-delimited JSON manifests: one sample per line, images by path."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import BBox
from .errors import ConfigError, InvalidInputError
from .io_utils import atomic_write_text

SAMPLE_KINDS = ("correct", "misclassified", "undetected", "grounding_failure")


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    image_path: str
    target_box: BBox
    category: str
    sample_kind: str = "correct"

    def __post_init__(self):
        if self.sample_kind not in SAMPLE_KINDS:
            raise InvalidInputError(
                f"sample_kind must be one of {SAMPLE_KINDS}, got {self.sample_kind!r}")

    def to_payload(self) -> dict:
        return {
            "name": self.name,
            "image_path": self.image_path,
            "target_box": list(self.target_box.as_tuple()),
            "category": self.category,
            "sample_kind": self.sample_kind,
        }


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
            entries.append(ManifestEntry(
                name=str(raw.get("name", f"sample-{lineno:04d}")),
                image_path=str(raw["image_path"]),
                target_box=BBox(*raw["target_box"]),
                category=str(raw["category"]),
                sample_kind=str(raw.get("sample_kind", "correct")),
            ))
        except (KeyError, TypeError, ValueError, InvalidInputError) as exc:
            raise ConfigError(f"manifest {path} line {lineno} is malformed: {exc}") from exc
    names = [e.name for e in entries]
    if len(set(names)) != len(names):
        raise ConfigError(f"manifest {path} has duplicate sample names")
    return entries


def write_manifest(entries, path) -> None:
    text = "".join(json.dumps(e.to_payload(), sort_keys=True) + "\n" for e in entries)
    atomic_write_text(path, text)
