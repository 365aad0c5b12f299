"""Greedy ordering, attribution recurrence, rasterization, and the brute-force oracle."""

import numpy as np
import pytest

from vpsearch import (AttributionAborted, BackendError, BBox, BlobObject, BlobWorld,
                      CostGuardError, CountingDetector, ExplanationTarget, Image,
                      InvalidInputError, SubmodularObjective, SyntheticBlobDetector,
                      brute_force_best, greedy_search, grid_partition,
                      normalize_attribution, rasterize)
from vpsearch.search import load_attribution, save_attribution
from vpsearch.segmentation import load_partition, save_partition

from conftest import single_blob_sample


def make_objective(**kwargs):
    image, partition, world, target = single_blob_sample(**kwargs)
    detector = CountingDetector(SyntheticBlobDetector(world))
    return SubmodularObjective(detector, image, partition, target), detector


class TestGreedySearch:
    def test_blob_regions_selected_first(self):
        # blob covers regions {3, 7} of a 4x4 grid
        objective, _ = make_objective(blob_cells=((0, 3), (1, 3)))
        result = greedy_search(objective=objective)
        assert set(result.order[:2]) == {3, 7}

    def test_first_pick_matches_exhaustive_candidate_scan(self):
        objective, _ = make_objective(blob_cells=((1, 1), (1, 2)))
        scan = {alpha: objective.value({alpha}).total for alpha in range(16)}
        best = min(a for a, v in scan.items() if v == max(scan.values()))
        result = greedy_search(objective=objective)
        assert result.order[0] == best

    @pytest.mark.parametrize("m,grid", [(4, (2, 2)), (10, (2, 5)), (16, (4, 4))])
    def test_exact_evaluation_count(self, m, grid):
        objective, _ = make_objective(grid=grid, cell=12, blob_cells=((0, 0),))
        greedy_search(objective=objective)
        assert objective.f_evaluations == m * (m + 1) // 2

    def test_detector_call_budget(self):
        objective, detector = make_objective(grid=(2, 2), cell=12, blob_cells=((0, 0),))
        greedy_search(objective=objective)
        m = 4
        assert detector.calls == objective.detector_calls
        assert objective.detector_calls <= m * (m + 1)

    def test_constant_objective_degenerates_to_identity(self):
        # a world whose object never becomes visible: F is constant
        image = Image(pixels=np.zeros((24, 24, 3), dtype=np.uint8))
        partition = grid_partition(24, 24, 2, 2)
        world = BlobWorld(objects=(BlobObject(region=BBox(0, 0, 12, 12), category="x"),))
        target = ExplanationTarget(target_box=BBox(0, 0, 12, 12), category="x")
        result = greedy_search(SyntheticBlobDetector(world), image, partition, target)
        assert result.order == (0, 1, 2, 3)
        assert result.raw_scores == (0.0, 0.0, 0.0, 0.0)
        assert result.normalized == (1.0, 1.0, 1.0, 1.0)

    def test_raw_scores_non_increasing_and_traces_consistent(self):
        objective, _ = make_objective(exponent=1.7)
        result = greedy_search(objective=objective)
        raw = result.raw_scores
        assert raw[0] == 0.0
        assert all(b <= a for a, b in zip(raw, raw[1:]))
        for i in range(1, len(raw)):
            expected = raw[i - 1] - abs(result.f_trace[i] - result.f_trace[i - 1])
            assert raw[i] == pytest.approx(expected, abs=1e-12)

    def test_order_is_permutation(self):
        objective, _ = make_objective()
        result = greedy_search(objective=objective)
        assert sorted(result.order) == list(range(16))

    def test_parallel_candidates_match_serial(self):
        serial, _ = make_objective(exponent=1.3)
        parallel, _ = make_objective(exponent=1.3)
        a = greedy_search(objective=serial, workers=1)
        b = greedy_search(objective=parallel, workers=4)
        assert a.order == b.order
        assert a.raw_scores == b.raw_scores
        assert np.array_equal(a.saliency, b.saliency)

    def test_backend_failure_aborts_with_partial_trace(self):
        class FlakyDetector:
            def __init__(self, inner, allowed):
                self.inner, self.allowed, self.calls = inner, allowed, 0
                self.scores_available = True

            def detect(self, image):
                self.calls += 1
                if self.calls > self.allowed:
                    raise BackendError("backend went away")
                return self.inner.detect(image)

        image, partition, world, target = single_blob_sample()
        flaky = FlakyDetector(SyntheticBlobDetector(world), allowed=40)
        with pytest.raises(AttributionAborted) as excinfo:
            greedy_search(flaky, image, partition, target)
        assert len(excinfo.value.order) >= 1
        assert len(excinfo.value.f_trace) == len(excinfo.value.order)


class TestNormalizeAttribution:
    def test_min_max(self):
        out = normalize_attribution([0.0, -0.2, -0.5])
        assert np.allclose(out, [1.0, 0.6, 0.0])

    def test_constant_maps_to_ones(self):
        assert np.array_equal(normalize_attribution([0.0, 0.0, 0.0]), [1.0, 1.0, 1.0])

    def test_single_region(self):
        assert np.array_equal(normalize_attribution([0.0]), [1.0])

    def test_increasing_input_rejected(self):
        with pytest.raises(InvalidInputError):
            normalize_attribution([0.0, 0.5])


class TestRasterize:
    def test_all_ones(self):
        partition = grid_partition(6, 6, 2, 2)
        out = rasterize(partition, [0, 1, 2, 3], [1.0, 1.0, 1.0, 1.0])
        assert np.all(out == 1.0)

    def test_binary_two_regions(self):
        partition = grid_partition(4, 8, 1, 2)
        out = rasterize(partition, [1, 0], [1.0, 0.0])
        assert np.all(out[:, 4:] == 1.0)
        assert np.all(out[:, :4] == 0.0)

    def test_three_distinct_values_pixel_counts(self):
        partition = grid_partition(9, 9, 3, 3)
        scores = [1.0, 0.5] + [0.0] * 7
        out = rasterize(partition, list(range(9)), scores)
        values, counts = np.unique(out, return_counts=True)
        assert list(values) == [0.0, 0.5, 1.0]
        assert list(counts) == [63, 9, 9]


class TestBruteForce:
    def setup_method(self):
        self.objective, _ = make_objective(grid=(2, 4), cell=12,
                                           blob_cells=((0, 1), (0, 2)))

    def test_k_equals_m(self):
        subset, value = brute_force_best(objective=self.objective, k=8)
        assert subset == tuple(range(8))
        assert value == pytest.approx(self.objective.value(range(8)).total)

    def test_k_zero(self):
        subset, value = brute_force_best(objective=self.objective, k=0)
        assert subset == ()
        assert value == pytest.approx(self.objective.value(()).total)

    def test_blob_world_k2_matches_pairwise_enumeration(self):
        import itertools
        best_pair = max(itertools.combinations(range(8), 2),
                        key=lambda s: (self.objective.value(s).total, [-r for r in s]))
        subset, _ = brute_force_best(objective=self.objective, k=2)
        assert set(subset) == set(best_pair) == {1, 2}

    def test_cost_guard(self):
        image, partition, world, target = single_blob_sample(grid=(5, 4), cell=8,
                                                             blob_cells=((0, 0),))
        with pytest.raises(CostGuardError):
            brute_force_best(SyntheticBlobDetector(world), image, partition, target, k=2)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        objective, _ = make_objective(exponent=1.4)
        result = greedy_search(objective=objective)
        save_attribution(result, tmp_path / "sample", save_raw=True)
        save_partition(objective.partition, tmp_path / "sample.partition.pgm")

        partition = load_partition(tmp_path / "sample.partition.pgm")
        loaded = load_attribution(tmp_path / "sample.attribution.json", partition)
        assert loaded.order == result.order
        assert loaded.raw_scores == pytest.approx(result.raw_scores)
        assert loaded.normalized == pytest.approx(result.normalized)
        assert np.array_equal(loaded.saliency, result.saliency)
        assert loaded.target == result.target

        raw = np.fromfile(tmp_path / "sample.saliency.raw", dtype="<f4")
        assert raw.shape[0] == result.saliency.size
        assert np.allclose(raw.reshape(result.saliency.shape), result.saliency, atol=1e-7)

    def test_saliency_png_quantization(self, tmp_path):
        from vpsearch.io_utils import load_grayscale_png
        objective, _ = make_objective()
        result = greedy_search(objective=objective)
        save_attribution(result, tmp_path / "s")
        png = load_grayscale_png(tmp_path / "s.saliency.png")
        assert np.max(np.abs(png - result.saliency)) <= 0.5 / 255 + 1e-9
