"""Run configuration: defaults, TOML config file, and CLI flag overrides."""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

_SECTIONS = ("run", "detector", "evaluate", "benchmark")


@dataclass(frozen=True)
class RunConfig:
    regions: int = 100
    baseline: int = 0
    detector: str | None = None
    workers: int = 1
    seed: int = 0
    out: str = "runs"
    partition: str = "slico"            # slico | grid | file:PATH
    slico_iterations: int = 10
    threshold: float | None = None      # detector confidence threshold (ablation only)
    iou_only: bool = False
    n_max: int = 300
    categories: tuple[str, ...] = ()
    save_raw: bool = False
    # evaluate
    esr_threshold: float = 0.35
    esr_budget: int | None = None
    metrics_location: bool = True
    metrics_esr: bool = True
    plot_curves: bool = False
    # benchmark
    suite_samples: int = 20
    random_orderings: int = 5
    suite_spec: str | None = None

    def __post_init__(self):
        if self.regions < 2:
            raise ConfigError(f"regions must be >= 2, got {self.regions}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not (0 <= self.baseline <= 255):
            raise ConfigError(f"baseline must be in [0, 255], got {self.baseline}")
        if self.threshold is not None and not (0.0 <= self.threshold <= 1.0):
            raise ConfigError(f"threshold must be in [0, 1], got {self.threshold}")
        if not (0.0 < self.esr_threshold <= 1.0):
            raise ConfigError(f"esr_threshold must be in (0, 1], got {self.esr_threshold}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if self.suite_samples < 1:
            raise ConfigError(f"suite_samples must be >= 1, got {self.suite_samples}")
        if self.random_orderings < 0:
            raise ConfigError(f"random_orderings must be >= 0, got {self.random_orderings}")

    def out_dir(self) -> Path:
        return Path(self.out)

    def to_payload(self) -> dict:
        payload = {}
        for f in fields(self):
            value = getattr(self, f.name)
            payload[f.name] = list(value) if isinstance(value, tuple) else value
        return payload


def load_config_file(path) -> dict:
    """Flatten the TOML sections into RunConfig field names."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc

    known = {f.name for f in fields(RunConfig)}
    flat: dict = {}
    for key, value in raw.items():
        entries = value.items() if key in _SECTIONS and isinstance(value, dict) else [(key, value)]
        for name, v in entries:
            if name not in known:
                raise ConfigError(f"unknown config key {name!r} in {path}")
            flat[name] = tuple(v) if isinstance(v, list) else v
    return flat


def build_config(config_path=None, overrides: dict | None = None) -> RunConfig:
    """defaults < config file < CLI flags."""
    values: dict = {}
    if config_path:
        values.update(load_config_file(config_path))
    for name, v in (overrides or {}).items():
        if v is not None:
            values[name] = tuple(v) if isinstance(v, list) else v
    try:
        return replace(RunConfig(), **values)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc
