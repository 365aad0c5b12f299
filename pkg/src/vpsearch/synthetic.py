"""Seeded synthetic worlds with closed-form detector responses.

Two instance families:

* ``bound_instance`` -- small grids (at most 10 regions) with a single blob
  covering one grid cell or two adjacent cells, aligned to cell boundaries.
  On these worlds the objective's marginal gains are constant in the chain
  argument, so monotonicity and diminishing returns hold by construction and
  the greedy/brute-force bound can be checked exhaustively.
* ``faithfulness_instance`` -- 4x4 grids with a blob covering a 2x2 block of
  cells and a visibility exponent above 1, giving multi-step insertion and
  deletion curves that separate good orderings from random ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BBox, ExplanationTarget, Image
from .detectors import BlobObject, BlobWorld, SyntheticBlobDetector
from .segmentation import RegionPartition, grid_partition

DEFAULT_CATEGORY = "object"


@dataclass(frozen=True)
class SyntheticSample:
    name: str
    world: BlobWorld
    image: Image
    partition: RegionPartition
    target: ExplanationTarget

    def detector(self, **kwargs) -> SyntheticBlobDetector:
        return SyntheticBlobDetector(self.world, **kwargs)


def render_world(world: BlobWorld, height: int, width: int, rng=None) -> Image:
    """Paint each object's region (and inhibitor) with a non-baseline color."""
    pixels = np.zeros((height, width, 3), dtype=np.uint8)
    rng = rng or np.random.default_rng(0)
    for obj in world.objects:
        color = rng.integers(40, 256, size=3, dtype=np.int64)
        _fill_box(pixels, obj.region, color)
        if obj.inhibitor_region is not None:
            _fill_box(pixels, obj.inhibitor_region, rng.integers(40, 256, size=3))
    return Image(pixels=pixels)


def _fill_box(pixels, box: BBox, color):
    r0, r1 = int(round(box.y1)), int(round(box.y2))
    c0, c1 = int(round(box.x1)), int(round(box.x2))
    pixels[r0:r1, c0:c1] = np.asarray(color, dtype=np.uint8)


def _cell_box(row_edges, col_edges, r0, c0, r1, c1) -> BBox:
    """Box spanning grid cells [r0, r1] x [c0, c1] inclusive."""
    return BBox(x1=float(col_edges[c0]), y1=float(row_edges[r0]),
                x2=float(col_edges[c1 + 1]), y2=float(row_edges[r1 + 1]))


def bound_instance(rng: np.random.Generator, name: str = "bound") -> SyntheticSample:
    """One instance of the exact-marginals family (m <= 10, 1-2 cell blob)."""
    rows, cols = [(2, 2), (2, 3), (3, 3), (2, 4), (2, 5)][int(rng.integers(0, 5))]
    cell = int(rng.integers(10, 15))
    height, width = rows * cell, cols * cell
    row_edges = np.arange(rows + 1) * cell
    col_edges = np.arange(cols + 1) * cell

    shapes = [(1, 1)]
    if cols >= 2:
        shapes.append((1, 2))
    if rows >= 2:
        shapes.append((2, 1))
    sh, sw = shapes[int(rng.integers(0, len(shapes)))]
    anchor_r = int(rng.integers(0, rows - sh + 1))
    anchor_c = int(rng.integers(0, cols - sw + 1))
    blob = _cell_box(row_edges, col_edges, anchor_r, anchor_c,
                     anchor_r + sh - 1, anchor_c + sw - 1)

    exponent = float(rng.uniform(0.6, 2.0))
    world = BlobWorld(objects=(BlobObject(region=blob, category=DEFAULT_CATEGORY,
                                          exponent=exponent),))
    return SyntheticSample(
        name=name,
        world=world,
        image=render_world(world, height, width, rng),
        partition=grid_partition(height, width, rows, cols),
        target=ExplanationTarget(target_box=blob, category=DEFAULT_CATEGORY),
    )


def faithfulness_instance(rng: np.random.Generator, name: str = "sample",
                          grid: tuple[int, int] = (4, 4), cell: int = 16,
                          exponent_range: tuple[float, float] = (1.0, 2.0),
                          block: tuple[int, int] = (2, 2)) -> SyntheticSample:
    """One instance of the curve-separation family (default 16 regions)."""
    rows, cols = grid
    height, width = rows * cell, cols * cell
    row_edges = np.arange(rows + 1) * cell
    col_edges = np.arange(cols + 1) * cell
    bh, bw = block
    anchor_r = int(rng.integers(0, rows - bh + 1))
    anchor_c = int(rng.integers(0, cols - bw + 1))
    blob = _cell_box(row_edges, col_edges, anchor_r, anchor_c,
                     anchor_r + bh - 1, anchor_c + bw - 1)
    exponent = float(rng.uniform(*exponent_range))
    world = BlobWorld(objects=(BlobObject(region=blob, category=DEFAULT_CATEGORY,
                                          exponent=exponent),))
    return SyntheticSample(
        name=name,
        world=world,
        image=render_world(world, height, width, rng),
        partition=grid_partition(height, width, rows, cols),
        target=ExplanationTarget(target_box=blob, category=DEFAULT_CATEGORY),
    )


def bound_suite(seed: int, count: int = 50) -> list[SyntheticSample]:
    root = np.random.SeedSequence(seed)
    return [bound_instance(np.random.default_rng(child), name=f"bound-{i:03d}")
            for i, child in enumerate(root.spawn(count))]


def faithfulness_suite(seed: int, count: int = 20, **kwargs) -> list[SyntheticSample]:
    root = np.random.SeedSequence(seed)
    return [faithfulness_instance(np.random.default_rng(child), name=f"sample-{i:03d}", **kwargs)
            for i, child in enumerate(root.spawn(count))]


def inhibitor_instance(weight: float = 0.9, exponent: float = 1.0,
                       cell: int = 12) -> SyntheticSample:
    """A 2x2 grid world whose blob spans two cells with an inhibitor in a third.

    Used by failure-interpretation tests: revealing the inhibitor region damps
    the blob's confidence by (1 - weight * visible_fraction).
    """
    height = width = 2 * cell
    edges = np.arange(3) * cell
    blob = _cell_box(edges, edges, 0, 0, 1, 0)        # cells 0 and 2 (left column)
    inhibitor = _cell_box(edges, edges, 0, 1, 0, 1)   # cell 1 (top right)
    world = BlobWorld(objects=(BlobObject(
        region=blob, category=DEFAULT_CATEGORY, exponent=exponent,
        inhibitor_region=inhibitor, inhibitor_weight=weight),))
    return SyntheticSample(
        name="inhibitor",
        world=world,
        image=render_world(world, height, width),
        partition=grid_partition(height, width, 2, 2),
        target=ExplanationTarget(target_box=blob, category=DEFAULT_CATEGORY),
    )


def random_orderings(region_count: int, count: int, rng: np.random.Generator) -> list[list[int]]:
    return [list(map(int, rng.permutation(region_count))) for _ in range(count)]
