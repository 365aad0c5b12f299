"""Command-line orchestration: attribution runs, metric evaluation, synthetic
benchmarking, and brute-force bound verification.

Exit codes: 0 success, 1 per-sample failures occurred, 2 configuration or
protocol error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, build_config
from .core import BBox, ExplanationTarget
from .detectors import build_detector
from .errors import ConfigError, CostGuardError, VPSearchError
from .evaluation import (metric_report, sweep, sweep_from_payload, sweep_payload,
                         curve_from_sweep, auc)
from .io_utils import atomic_write_text, load_image, write_json
from .manifest import SAMPLE_KINDS, ManifestEntry, read_manifest
from .scoring import SubmodularObjective
from .search import brute_force_best, greedy_search, load_attribution, save_attribution
from .segmentation import (choose_grid, grid_partition, load_partition,
                           save_partition, segment_slico)
from .synthetic import faithfulness_suite, random_orderings

GREEDY_BOUND = 1.0 - 1.0 / math.e

METRIC_FIELDS = ("insertion_auc", "deletion_auc", "insertion_class_auc",
                 "deletion_class_auc", "insertion_iou_auc", "deletion_iou_auc",
                 "avg_highest_score", "point_game", "energy_point_game",
                 "esr_success", "esr_minimal_t")


def _parse_box(text: str) -> BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--box expects x1,y1,x2,y2, got {text!r}")
    try:
        return BBox(*(float(p) for p in parts))
    except (ValueError, VPSearchError) as exc:
        raise ConfigError(f"bad --box {text!r}: {exc}") from exc


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for name in ("regions", "baseline", "detector", "workers", "seed", "out",
                 "partition", "threshold", "n_max", "save_raw",
                 "esr_threshold", "esr_budget", "plot_curves",
                 "suite_samples", "random_orderings", "suite_spec"):
        if hasattr(args, name):
            overrides[name] = getattr(args, name)
    if getattr(args, "iou_only", False):
        overrides["iou_only"] = True
    if getattr(args, "categories", None):
        overrides["categories"] = list(args.categories)
    if getattr(args, "no_location", False):
        overrides["metrics_location"] = False
    if getattr(args, "no_esr", False):
        overrides["metrics_esr"] = False
    return build_config(getattr(args, "config", None), overrides)


def _build_partition(cfg: RunConfig, image, name: str, out_dir: Path):
    if cfg.partition == "slico":
        partition = segment_slico(image, cfg.regions, cfg.slico_iterations)
    elif cfg.partition == "grid":
        rows, cols = choose_grid(image.height, image.width, cfg.regions)
        partition = grid_partition(image.height, image.width, rows, cols)
    elif cfg.partition.startswith("file:"):
        partition = load_partition(cfg.partition[len("file:"):])
        if (partition.height, partition.width) != (image.height, image.width):
            raise ConfigError("partition file shape does not match the image")
    else:
        raise ConfigError(f"unknown partition mode {cfg.partition!r}")
    path = out_dir / f"{name}.partition.pgm"
    save_partition(partition, path)
    return partition, path


def _sample_detector(cfg: RunConfig, entry: ManifestEntry):
    if not cfg.detector:
        raise ConfigError("no detector configured (use --detector or the config file)")
    categories = list(cfg.categories) if cfg.categories else None
    if not cfg.detector.startswith("blob:"):
        categories = categories or [entry.category]
    return build_detector(cfg.detector, categories=categories, n_max=cfg.n_max,
                          score_threshold=cfg.threshold, iou_only=cfg.iou_only,
                          baseline=cfg.baseline)


def _process_sample(entry: ManifestEntry, cfg: RunConfig, out_dir: Path,
                    greedy_workers: int) -> dict:
    """Attribution pipeline for one sample; failures are isolated per sample."""
    try:
        image = load_image(entry.image_path)
        partition, partition_path = _build_partition(cfg, image, entry.name, out_dir)
        detector = _sample_detector(cfg, entry)
        target = ExplanationTarget(target_box=entry.target_box, category=entry.category)
        objective = SubmodularObjective(detector, image, partition, target,
                                        baseline=cfg.baseline)
        result = greedy_search(objective=objective, workers=greedy_workers)
        insertion = sweep(objective, result.order, "insertion")
        deletion = sweep(objective, result.order, "deletion")

        artifacts = save_attribution(result, out_dir / entry.name, save_raw=cfg.save_raw)
        curves_path = out_dir / f"{entry.name}.curves.json"
        write_json(curves_path, {
            "m": partition.region_count,
            "insertion": sweep_payload(insertion),
            "deletion": sweep_payload(deletion),
        })
        paths = {"partition": partition_path.name,
                 "attribution": artifacts["attribution"].name,
                 "saliency_png": artifacts["saliency_png"].name,
                 "curves": curves_path.name}
        if "saliency_raw" in artifacts:
            paths["saliency_raw"] = artifacts["saliency_raw"].name
        return {
            "name": entry.name,
            "kind": entry.sample_kind,
            "status": "ok",
            "artifacts": paths,
            "counters": {
                "f_evaluations": objective.f_evaluations,
                "detector_calls": objective.detector_calls,
            },
        }
    except (VPSearchError, OSError) as exc:
        return {"name": entry.name, "kind": entry.sample_kind, "status": "failed",
                "error": f"{type(exc).__name__}: {exc}"}


def cmd_attribute(args) -> int:
    cfg = _config_from_args(args)
    entries = _gather_entries(args)
    if entries and not cfg.detector:
        raise ConfigError("no detector configured (use --detector or the config file)")
    out_dir = cfg.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    if not entries:
        print("warning: empty manifest, nothing to attribute", file=sys.stderr)
        write_json(out_dir / "run_summary.json",
                   {"config": cfg.to_payload(), "samples": [], "failed": 0})
        return 0

    greedy_workers = cfg.workers if len(entries) == 1 else 1
    if len(entries) > 1 and cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(
                lambda e: _process_sample(e, cfg, out_dir, greedy_workers), entries))
    else:
        results = [_process_sample(e, cfg, out_dir, greedy_workers) for e in entries]

    failed = sum(1 for r in results if r["status"] != "ok")
    write_json(out_dir / "run_summary.json",
               {"config": cfg.to_payload(), "samples": results, "failed": failed})
    for r in results:
        line = f"{r['name']}: {r['status']}"
        if r["status"] != "ok":
            line += f" ({r['error']})"
        print(line)
    return 1 if failed else 0


def _gather_entries(args) -> list[ManifestEntry]:
    if getattr(args, "manifest", None):
        return read_manifest(args.manifest)
    if getattr(args, "image", None):
        if not getattr(args, "box", None) or not getattr(args, "category", None):
            raise ConfigError("single-sample mode needs --image, --box, and --category")
        return [ManifestEntry(
            name=getattr(args, "name", None) or Path(args.image).stem,
            image_path=args.image,
            target_box=_parse_box(args.box),
            category=args.category,
            sample_kind=getattr(args, "kind", None) or "correct",
        )]
    raise ConfigError("provide --manifest or --image/--box/--category")


def _aggregate(rows: list[dict]) -> dict:
    out = {}
    for field in METRIC_FIELDS:
        values = [r[field] for r in rows if r.get(field) is not None]
        if values:
            out[field] = float(np.mean([float(v) for v in values]))
    out["count"] = len(rows)
    return out


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    out_dir = cfg.out_dir()
    summary_path = out_dir / "run_summary.json"
    if not summary_path.exists():
        raise ConfigError(f"no run summary at {summary_path}; run attribute first")
    summary = json.loads(summary_path.read_text())
    by_name = {e.name: e for e in read_manifest(args.manifest)}

    rows, absent = [], 0
    for sample in summary["samples"]:
        name = sample["name"]
        entry = by_name.get(name)
        row = {"name": name, "kind": sample.get("kind", "correct")}
        if entry is None or sample["status"] != "ok":
            row["status"] = "absent"
            absent += 1
            rows.append(row)
            continue
        try:
            curves = json.loads((out_dir / sample["artifacts"]["curves"]).read_text())
            insertion = sweep_from_payload(curves["insertion"])
            deletion = sweep_from_payload(curves["deletion"])
            partition = load_partition(out_dir / sample["artifacts"]["partition"])
            attribution = load_attribution(out_dir / sample["artifacts"]["attribution"], partition)
        except (OSError, KeyError, ValueError, VPSearchError) as exc:
            row["status"] = "absent"
            row["error"] = f"{type(exc).__name__}: {exc}"
            absent += 1
            rows.append(row)
            continue
        report = metric_report(
            insertion, deletion,
            saliency=attribution.saliency, gt_box=entry.target_box,
            esr_threshold=cfg.esr_threshold if cfg.metrics_esr else None,
            esr_budget=cfg.esr_budget,
            include_location=cfg.metrics_location,
            include_esr=cfg.metrics_esr,
        )
        row["status"] = "ok"
        row.update(report.to_payload())
        rows.append(row)
        if cfg.plot_curves:
            _plot_curves(insertion, deletion, out_dir / f"{name}.curves.png")

    present = [r for r in rows if r["status"] == "ok"]
    payload = {
        "samples": rows,
        "aggregate": _aggregate(present),
        "aggregate_by_kind": {
            kind: _aggregate([r for r in present if r["kind"] == kind])
            for kind in SAMPLE_KINDS
            if any(r["kind"] == kind for r in present)
        },
    }
    write_json(out_dir / "metrics.json", payload)
    _write_metrics_csv(out_dir / "metrics.csv", rows)
    print(f"evaluated {len(present)} samples ({absent} absent) -> {out_dir / 'metrics.json'}")
    return 1 if absent else 0


def _write_metrics_csv(path, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("name", "kind", "status") + METRIC_FIELDS)
    for r in rows:
        writer.writerow([r.get("name"), r.get("kind"), r.get("status")]
                        + [r.get(f, "") if r.get(f) is not None else "" for f in METRIC_FIELDS])
    atomic_write_text(path, buf.getvalue())


def _plot_curves(insertion, deletion, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([p.step for p in insertion], [p.product for p in insertion],
            label="insertion", marker="o", markersize=3)
    ax.plot([p.step for p in deletion], [p.product for p in deletion],
            label="deletion", marker="s", markersize=3)
    ax.set_xlabel("regions")
    ax.set_ylabel("response")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _ordering_aucs(objective, order) -> dict:
    ins = sweep(objective, order, "insertion")
    dele = sweep(objective, order, "deletion")
    return {
        "insertion_auc": auc(curve_from_sweep(ins, "insertion", "clue")),
        "deletion_auc": auc(curve_from_sweep(dele, "deletion", "clue")),
    }


def run_benchmark(cfg: RunConfig) -> dict:
    """Compare the greedy ordering against seeded random and reversed orderings."""
    suite_kwargs = {}
    if cfg.suite_spec:
        try:
            raw = json.loads(Path(cfg.suite_spec).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read suite spec {cfg.suite_spec}: {exc}") from exc
        for key in ("grid", "block", "exponent_range"):
            if key in raw:
                suite_kwargs[key] = tuple(raw[key])
        if "cell" in raw:
            suite_kwargs["cell"] = int(raw["cell"])
    samples = faithfulness_suite(cfg.seed, cfg.suite_samples, **suite_kwargs)

    table = []
    for i, sample in enumerate(samples):
        detector = sample.detector(n_max=cfg.n_max, score_threshold=cfg.threshold,
                                   baseline=cfg.baseline)
        objective = SubmodularObjective(detector, sample.image, sample.partition,
                                        sample.target, baseline=cfg.baseline)
        vps = greedy_search(objective=objective, workers=cfg.workers)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7, i]))
        orderings = {"vps": list(vps.order), "reverse_vps": list(vps.order)[::-1]}
        for j, perm in enumerate(random_orderings(sample.partition.region_count,
                                                  cfg.random_orderings, rng)):
            orderings[f"random-{j:02d}"] = perm
        row = {"name": sample.name}
        for key, order in orderings.items():
            row[key] = _ordering_aucs(objective, order)
        random_keys = [k for k in orderings if k.startswith("random-")]
        if random_keys:
            row["random_mean"] = {
                field: float(np.mean([row[k][field] for k in random_keys]))
                for field in ("insertion_auc", "deletion_auc")
            }
            row["delta_vs_random"] = {
                "insertion_auc": row["vps"]["insertion_auc"] - row["random_mean"]["insertion_auc"],
                "deletion_auc": row["vps"]["deletion_auc"] - row["random_mean"]["deletion_auc"],
            }
        table.append(row)

    def mean_over(selector) -> dict:
        return {
            field: float(np.mean([selector(row)[field] for row in table]))
            for field in ("insertion_auc", "deletion_auc")
        }

    aggregate = {
        "vps": mean_over(lambda r: r["vps"]),
        "reverse_vps": mean_over(lambda r: r["reverse_vps"]),
    }
    if cfg.random_orderings:
        aggregate["random"] = mean_over(lambda r: r["random_mean"])
    return {
        "suite": {
            "seed": cfg.seed,
            "samples": cfg.suite_samples,
            "random_orderings": cfg.random_orderings,
            "threshold": cfg.threshold,
        },
        "samples": table,
        "aggregate": aggregate,
    }


def cmd_benchmark(args) -> int:
    cfg = _config_from_args(args)
    out_dir = cfg.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = run_benchmark(cfg)
    write_json(out_dir / "benchmark.json", payload)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("sample", "ordering", "insertion_auc", "deletion_auc"))
    for row in payload["samples"]:
        for key in sorted(k for k in row if isinstance(row[k], dict) and "insertion_auc" in row[k]):
            if key in ("random_mean", "delta_vs_random"):
                continue
            writer.writerow((row["name"], key,
                             row[key]["insertion_auc"], row[key]["deletion_auc"]))
    atomic_write_text(out_dir / "benchmark.csv", buf.getvalue())

    agg = payload["aggregate"]
    for key in sorted(agg):
        print(f"{key}: insertion={agg[key]['insertion_auc']:.4f} "
              f"deletion={agg[key]['deletion_auc']:.4f}")
    return 0


def cmd_bruteforce(args) -> int:
    cfg = _config_from_args(args)
    entries = _gather_entries(args)
    if len(entries) != 1:
        raise ConfigError("bruteforce expects exactly one sample")
    entry = entries[0]
    image = load_image(entry.image_path)
    out_dir = cfg.out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    partition, _ = _build_partition(cfg, image, entry.name, out_dir)
    if partition.region_count > 16:
        raise CostGuardError(f"bruteforce refuses m={partition.region_count} > 16 regions")
    detector = _sample_detector(cfg, entry)
    target = ExplanationTarget(target_box=entry.target_box, category=entry.category)
    objective = SubmodularObjective(detector, image, partition, target, baseline=cfg.baseline)

    k = args.k
    if k is None or not (0 <= k <= partition.region_count):
        raise ConfigError(f"--k must lie in [0, {partition.region_count}]")
    result = greedy_search(objective=objective, workers=cfg.workers)
    greedy_value = (objective.objective_value(objective.value(())) if k == 0
                    else result.f_trace[k - 1])
    best_subset, best_value = brute_force_best(objective=objective, k=k)
    ratio = 1.0 if best_value <= 0 else greedy_value / best_value
    passed = ratio >= GREEDY_BOUND - 1e-12
    print(f"F(greedy_{k}) = {greedy_value:.6f}")
    print(f"F(opt_{k}) = {best_value:.6f}  (subset {list(best_subset)})")
    print(f"ratio = {ratio:.6f}  threshold = {GREEDY_BOUND:.6f}  "
          f"{'PASS' if passed else 'FAIL'}")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpsearch",
        description="Explain black-box object detectors by greedy submodular "
                    "region search, and score the explanations.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file; flags override it")
        p.add_argument("--regions", type=int, help="sub-region count m (default 100)")
        p.add_argument("--baseline", type=int, help="masking fill value (default 0)")
        p.add_argument("--detector", help="blob:spec.json | wire:URL | stdio:CMD")
        p.add_argument("--workers", type=int, help="worker budget (default 1)")
        p.add_argument("--seed", type=int, help="run seed (default 0)")
        p.add_argument("--out", help="output directory (default runs)")
        p.add_argument("--threshold", type=float,
                       help="detector confidence threshold (ablation only; default none)")
        p.add_argument("--iou-only", dest="iou_only", action="store_true", default=False,
                       help="score boxes by IoU alone (confidence-free detectors)")
        p.add_argument("--partition", help="slico | grid | file:PATH (default slico)")
        p.add_argument("--n-max", dest="n_max", type=int, help="max candidate boxes")
        p.add_argument("--categories", nargs="+", help="detector category vocabulary")

    def add_sample(p):
        p.add_argument("--manifest", help="newline-delimited JSON manifest")
        p.add_argument("--image", help="single image path")
        p.add_argument("--box", help="target box as x1,y1,x2,y2")
        p.add_argument("--category", help="target category")
        p.add_argument("--kind", choices=SAMPLE_KINDS, help="sample kind (single mode)")
        p.add_argument("--name", help="sample name (single mode)")

    p_attr = sub.add_parser("attribute", help="rank regions and emit saliency artifacts")
    add_common(p_attr)
    add_sample(p_attr)
    p_attr.add_argument("--save-raw", dest="save_raw", action="store_true", default=None,
                        help="also dump the saliency map as float32 raw")
    p_attr.set_defaults(func=cmd_attribute)

    p_eval = sub.add_parser("evaluate", help="compute the metric battery from artifacts")
    add_common(p_eval)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--esr-threshold", dest="esr_threshold", type=float,
                        help="ESR confidence threshold (default 0.35)")
    p_eval.add_argument("--esr-budget", dest="esr_budget", type=int,
                        help="ESR region budget (default m)")
    p_eval.add_argument("--no-location", dest="no_location", action="store_true",
                        default=False, help="skip Point Game / Energy Point Game")
    p_eval.add_argument("--no-esr", dest="no_esr", action="store_true", default=False)
    p_eval.add_argument("--plot-curves", dest="plot_curves", action="store_true",
                        default=None, help="render insertion/deletion curve PNGs")
    p_eval.set_defaults(func=cmd_evaluate)

    p_bench = sub.add_parser("benchmark", help="compare vps vs random and reversed orderings")
    add_common(p_bench)
    p_bench.add_argument("--samples", dest="suite_samples", type=int,
                         help="synthetic suite size (default 20)")
    p_bench.add_argument("--random-orderings", dest="random_orderings", type=int,
                         help="random orderings per sample (default 5)")
    p_bench.add_argument("--suite", dest="suite_spec", help="suite spec JSON")
    p_bench.set_defaults(func=cmd_benchmark)

    p_bf = sub.add_parser("bruteforce", help="verify the greedy bound exhaustively")
    add_common(p_bf)
    add_sample(p_bf)
    p_bf.add_argument("--k", type=int, help="subset size to verify")
    p_bf.set_defaults(func=cmd_bruteforce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CostGuardError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except VPSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
