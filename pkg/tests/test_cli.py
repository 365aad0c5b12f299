"""End-to-end CLI behavior: artifacts, exit codes, determinism."""

import json

import numpy as np

from vpsearch import BBox, BlobObject, BlobWorld, Image
from vpsearch.cli import main
from vpsearch.io_utils import save_image
from vpsearch.evaluation import metric_report, sweep_from_payload

BLOB = (16, 16, 48, 48)


def write_sample(tmp_path, name="sample", blob=BLOB, exponent=1.0):
    """An image with one blob plus its matching synthetic world spec."""
    pixels = np.zeros((64, 64, 3), dtype=np.uint8)
    x1, y1, x2, y2 = blob
    pixels[y1:y2, x1:x2] = (90, 180, 40)
    image_path = tmp_path / f"{name}.png"
    save_image(Image(pixels=pixels), image_path)
    world = BlobWorld(objects=(BlobObject(region=BBox(*blob), category="obj",
                                          exponent=exponent),))
    world_path = tmp_path / f"{name}.world.json"
    world_path.write_text(json.dumps(world.to_payload()))
    return image_path, world_path


def write_manifest(tmp_path, rows):
    path = tmp_path / "manifest.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def attribute_args(tmp_path, image_path, world_path, out="out", extra=()):
    return ["attribute",
            "--image", str(image_path),
            "--box", ",".join(str(c) for c in BLOB),
            "--category", "obj",
            "--detector", f"blob:{world_path}",
            "--partition", "grid",
            "--regions", "16",
            "--out", str(tmp_path / out)] + list(extra)


class TestAttribute:
    def test_single_sample_artifacts_and_counter(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        assert main(attribute_args(tmp_path, image_path, world_path)) == 0
        summary = json.loads((tmp_path / "out/run_summary.json").read_text())
        sample = summary["samples"][0]
        assert sample["status"] == "ok"
        assert sample["counters"]["f_evaluations"] == 136  # 16 * 17 / 2
        artifacts = sample["artifacts"]
        assert set(artifacts) == {"partition", "attribution", "saliency_png", "curves"}
        for name in artifacts.values():
            assert (tmp_path / "out" / name).exists()

    def test_empty_manifest_warns_and_exits_zero(self, tmp_path, capsys):
        manifest = write_manifest(tmp_path, [])
        _, world_path = write_sample(tmp_path)
        code = main(["attribute", "--manifest", str(manifest),
                     "--detector", f"blob:{world_path}",
                     "--out", str(tmp_path / "out")])
        assert code == 0
        assert "empty manifest" in capsys.readouterr().err
        summary = json.loads((tmp_path / "out/run_summary.json").read_text())
        assert summary["samples"] == []

    def test_unreadable_sample_is_isolated(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        manifest = write_manifest(tmp_path, [
            {"name": "good", "image_path": str(image_path),
             "target_box": list(BLOB), "category": "obj"},
            {"name": "missing", "image_path": str(tmp_path / "nope.png"),
             "target_box": list(BLOB), "category": "obj"},
        ])
        code = main(["attribute", "--manifest", str(manifest),
                     "--detector", f"blob:{world_path}",
                     "--partition", "grid", "--regions", "16",
                     "--out", str(tmp_path / "out")])
        assert code == 1
        summary = json.loads((tmp_path / "out/run_summary.json").read_text())
        by_name = {s["name"]: s for s in summary["samples"]}
        assert by_name["good"]["status"] == "ok"
        assert by_name["missing"]["status"] == "failed"
        assert "error" in by_name["missing"]

    def test_idempotent_artifacts(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        assert main(attribute_args(tmp_path, image_path, world_path, out="a")) == 0
        assert main(attribute_args(tmp_path, image_path, world_path, out="b")) == 0
        for name in ("sample.attribution.json", "sample.saliency.png",
                     "sample.partition.pgm", "sample.curves.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_worker_budget_does_not_change_artifacts(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        assert main(attribute_args(tmp_path, image_path, world_path, out="w1",
                                   extra=["--workers", "1"])) == 0
        assert main(attribute_args(tmp_path, image_path, world_path, out="w3",
                                   extra=["--workers", "3"])) == 0
        for name in ("sample.attribution.json", "sample.saliency.png"):
            assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w3" / name).read_bytes()

    def test_concurrent_samples(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        manifest = write_manifest(tmp_path, [
            {"name": f"s{i}", "image_path": str(image_path),
             "target_box": list(BLOB), "category": "obj"} for i in range(3)
        ])
        code = main(["attribute", "--manifest", str(manifest),
                     "--detector", f"blob:{world_path}",
                     "--partition", "grid", "--regions", "16",
                     "--workers", "3", "--out", str(tmp_path / "out")])
        assert code == 0
        summary = json.loads((tmp_path / "out/run_summary.json").read_text())
        assert [s["name"] for s in summary["samples"]] == ["s0", "s1", "s2"]
        assert all(s["status"] == "ok" for s in summary["samples"])

    def test_missing_detector_is_config_error(self, tmp_path):
        image_path, _ = write_sample(tmp_path)
        code = main(["attribute", "--image", str(image_path), "--box", "1,1,5,5",
                     "--category", "obj", "--out", str(tmp_path / "out")])
        assert code == 2

    def test_bad_box_is_config_error(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        code = main(["attribute", "--image", str(image_path), "--box", "1,2,3",
                     "--category", "obj", "--detector", f"blob:{world_path}",
                     "--out", str(tmp_path / "out")])
        assert code == 2


class TestEvaluate:
    def run_pipeline(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        manifest = write_manifest(tmp_path, [
            {"name": "sample", "image_path": str(image_path),
             "target_box": list(BLOB), "category": "obj", "sample_kind": "correct"},
        ])
        assert main(["attribute", "--manifest", str(manifest),
                     "--detector", f"blob:{world_path}",
                     "--partition", "grid", "--regions", "16",
                     "--out", str(tmp_path / "out")]) == 0
        return manifest

    def test_metrics_match_library_computation(self, tmp_path):
        manifest = self.run_pipeline(tmp_path)
        assert main(["evaluate", "--manifest", str(manifest),
                     "--out", str(tmp_path / "out")]) == 0
        metrics = json.loads((tmp_path / "out/metrics.json").read_text())
        row = metrics["samples"][0]

        curves = json.loads((tmp_path / "out/sample.curves.json").read_text())
        insertion = sweep_from_payload(curves["insertion"])
        deletion = sweep_from_payload(curves["deletion"])
        from vpsearch.segmentation import load_partition
        from vpsearch.search import load_attribution
        partition = load_partition(tmp_path / "out/sample.partition.pgm")
        attribution = load_attribution(tmp_path / "out/sample.attribution.json", partition)
        expected = metric_report(insertion, deletion, saliency=attribution.saliency,
                                 gt_box=BBox(*BLOB), esr_threshold=0.35)
        for key, value in expected.to_payload().items():
            assert row[key] == value
        assert metrics["aggregate"]["count"] == 1
        assert (tmp_path / "out/metrics.csv").exists()

        # rerunning evaluate is idempotent, bit for bit
        first = (tmp_path / "out/metrics.json").read_bytes()
        assert main(["evaluate", "--manifest", str(manifest),
                     "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out/metrics.json").read_bytes() == first

    def test_missing_artifact_marks_row_absent(self, tmp_path):
        manifest = self.run_pipeline(tmp_path)
        (tmp_path / "out/sample.curves.json").unlink()
        code = main(["evaluate", "--manifest", str(manifest),
                     "--out", str(tmp_path / "out")])
        assert code == 1
        metrics = json.loads((tmp_path / "out/metrics.json").read_text())
        assert metrics["samples"][0]["status"] == "absent"
        assert metrics["aggregate"]["count"] == 0

    def test_plot_curves_renders_png(self, tmp_path):
        manifest = self.run_pipeline(tmp_path)
        assert main(["evaluate", "--manifest", str(manifest),
                     "--out", str(tmp_path / "out"), "--plot-curves"]) == 0
        assert (tmp_path / "out/sample.curves.png").exists()

    def test_evaluate_without_run_is_config_error(self, tmp_path):
        manifest = write_manifest(tmp_path, [])
        code = main(["evaluate", "--manifest", str(manifest),
                     "--out", str(tmp_path / "nothing")])
        assert code == 2

    def test_aggregates_grouped_by_kind(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        manifest = write_manifest(tmp_path, [
            {"name": "a", "image_path": str(image_path), "target_box": list(BLOB),
             "category": "obj", "sample_kind": "correct"},
            {"name": "b", "image_path": str(image_path), "target_box": list(BLOB),
             "category": "obj", "sample_kind": "misclassified"},
        ])
        assert main(["attribute", "--manifest", str(manifest),
                     "--detector", f"blob:{world_path}",
                     "--partition", "grid", "--regions", "16",
                     "--out", str(tmp_path / "out")]) == 0
        assert main(["evaluate", "--manifest", str(manifest),
                     "--out", str(tmp_path / "out")]) == 0
        metrics = json.loads((tmp_path / "out/metrics.json").read_text())
        assert set(metrics["aggregate_by_kind"]) == {"correct", "misclassified"}
        # identical samples: the aggregate mean equals the per-sample value
        rows = metrics["samples"]
        assert rows[0]["insertion_auc"] == rows[1]["insertion_auc"]
        assert metrics["aggregate"]["insertion_auc"] == rows[0]["insertion_auc"]


class TestBenchmark:
    def test_r_zero_has_vps_and_reverse_only(self, tmp_path):
        assert main(["benchmark", "--samples", "2", "--random-orderings", "0",
                     "--seed", "3", "--out", str(tmp_path / "bench")]) == 0
        table = json.loads((tmp_path / "bench/benchmark.json").read_text())
        row = table["samples"][0]
        ordering_keys = {k for k, v in row.items()
                         if isinstance(v, dict) and "insertion_auc" in v}
        assert ordering_keys == {"vps", "reverse_vps"}
        assert set(table["aggregate"]) == {"vps", "reverse_vps"}

    def test_seeded_runs_are_byte_identical(self, tmp_path):
        args = ["benchmark", "--samples", "3", "--random-orderings", "2", "--seed", "11"]
        assert main(args + ["--out", str(tmp_path / "one")]) == 0
        assert main(args + ["--out", str(tmp_path / "two")]) == 0
        for name in ("benchmark.json", "benchmark.csv"):
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_vps_beats_random_on_small_suite(self, tmp_path):
        assert main(["benchmark", "--samples", "4", "--random-orderings", "3",
                     "--seed", "5", "--out", str(tmp_path / "bench")]) == 0
        agg = json.loads((tmp_path / "bench/benchmark.json").read_text())["aggregate"]
        assert agg["vps"]["insertion_auc"] > agg["random"]["insertion_auc"]
        assert agg["vps"]["deletion_auc"] < agg["random"]["deletion_auc"]


class TestStdioBackend:
    def test_attribute_through_stdio_detector(self, tmp_path):
        import sys

        from test_detectors import STDIO_CHILD
        image_path, _ = write_sample(tmp_path)
        script = tmp_path / "child.py"
        script.write_text(STDIO_CHILD)
        code = main(["attribute", "--image", str(image_path),
                     "--box", ",".join(str(c) for c in BLOB), "--category", "obj",
                     "--detector", f"stdio:{sys.executable} {script}",
                     "--partition", "grid", "--regions", "4",
                     "--out", str(tmp_path / "out")])
        assert code == 0
        summary = json.loads((tmp_path / "out/run_summary.json").read_text())
        assert summary["samples"][0]["status"] == "ok"
        assert summary["samples"][0]["counters"]["f_evaluations"] == 10


class TestBruteforce:
    def test_k_equals_m_passes_with_ratio_one(self, tmp_path, capsys):
        image_path, world_path = write_sample(tmp_path)
        code = main(["bruteforce", "--image", str(image_path),
                     "--box", ",".join(str(c) for c in BLOB), "--category", "obj",
                     "--detector", f"blob:{world_path}", "--partition", "grid",
                     "--regions", "8", "--k", "8", "--out", str(tmp_path / "bf")])
        assert code == 0
        out = capsys.readouterr().out
        assert "ratio = 1.000000" in out and "PASS" in out

    def test_blob_world_k3_respects_bound(self, tmp_path, capsys):
        image_path, world_path = write_sample(tmp_path)
        code = main(["bruteforce", "--image", str(image_path),
                     "--box", ",".join(str(c) for c in BLOB), "--category", "obj",
                     "--detector", f"blob:{world_path}", "--partition", "grid",
                     "--regions", "8", "--k", "3", "--out", str(tmp_path / "bf")])
        assert code == 0
        assert "PASS" in capsys.readouterr().out

    def test_large_m_refused(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        code = main(["bruteforce", "--image", str(image_path),
                     "--box", ",".join(str(c) for c in BLOB), "--category", "obj",
                     "--detector", f"blob:{world_path}", "--partition", "grid",
                     "--regions", "25", "--k", "2", "--out", str(tmp_path / "bf")])
        assert code == 2


class TestConfigFile:
    def test_config_file_with_flag_override(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        config = tmp_path / "run.toml"
        config.write_text(
            "[run]\n"
            "regions = 9\n"
            "partition = \"grid\"\n"
            f"detector = \"blob:{world_path}\"\n"
        )
        code = main(["attribute", "--config", str(config),
                     "--image", str(image_path),
                     "--box", ",".join(str(c) for c in BLOB), "--category", "obj",
                     "--regions", "4", "--out", str(tmp_path / "out")])
        assert code == 0
        summary = json.loads((tmp_path / "out/run_summary.json").read_text())
        assert summary["config"]["regions"] == 4  # flag wins over config file
        assert summary["samples"][0]["counters"]["f_evaluations"] == 10  # 4*5/2

    def test_unknown_config_key_rejected(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("[run]\nwat = 3\n")
        assert main(["benchmark", "--config", str(config),
                     "--out", str(tmp_path / "out")]) == 2

    def test_config_file_booleans_survive_unset_flags(self, tmp_path):
        image_path, world_path = write_sample(tmp_path)
        config = tmp_path / "run.toml"
        config.write_text(
            "save_raw = true\n"
            "partition = \"grid\"\n"
            "regions = 4\n"
            f"detector = \"blob:{world_path}\"\n"
        )
        code = main(["attribute", "--config", str(config),
                     "--image", str(image_path),
                     "--box", ",".join(str(c) for c in BLOB), "--category", "obj",
                     "--out", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out/sample.saliency.raw").exists()
