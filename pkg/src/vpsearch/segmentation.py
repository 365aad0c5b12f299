"""Sparsify an image into connected sub-regions (the ground set for the search).

The segmenter is the zero-parameter SLIC variant: CIELAB color space, seeds
on a regular grid perturbed to the lowest-gradient pixel in their 3x3
neighborhood, per-cluster adaptive color normalization, and a post-pass that
enforces 4-connectivity and merges fragments smaller than (H*W/m)/4 into the
largest adjacent region. Grid partitions and partition files are provided so
controlled divisions can replace the segmenter in experiments.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.color import rgb2lab

from .core import Image
from .errors import InvalidInputError
from .io_utils import atomic_write_bytes

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RegionPartition:
    """Per-pixel map assigning each pixel to exactly one of m sub-regions."""

    labels: np.ndarray
    region_count: int
    region_pixel_lists: tuple[np.ndarray, ...]

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise InvalidInputError(f"labels must be 2-D, got shape {labels.shape}")
        m = self.region_count
        if m < 1:
            raise InvalidInputError("region_count must be >= 1")
        if labels.min() < 0 or labels.max() >= m:
            raise InvalidInputError("labels must lie in [0, region_count)")
        labels = labels.astype(np.int32, copy=True)
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

        sizes = np.bincount(labels.ravel(), minlength=m)
        if np.any(sizes == 0):
            raise InvalidInputError("every region must be non-empty")
        if len(self.region_pixel_lists) != m:
            raise InvalidInputError("region_pixel_lists length must equal region_count")
        for r, idx in enumerate(self.region_pixel_lists):
            if len(idx) != sizes[r]:
                raise InvalidInputError(f"pixel list for region {r} disagrees with labels")
        for r in range(m):
            mask = labels == r
            _, ncomp = ndimage.label(mask, structure=FOUR_CONNECTED)
            if ncomp != 1:
                raise InvalidInputError(f"region {r} is not 4-connected ({ncomp} components)")

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "RegionPartition":
        labels = np.asarray(labels)
        m = int(labels.max()) + 1 if labels.size else 0
        flat = labels.ravel()
        order = np.argsort(flat, kind="stable")
        sizes = np.bincount(flat, minlength=m)
        bounds = np.concatenate(([0], np.cumsum(sizes)))
        pixel_lists = tuple(order[bounds[r]:bounds[r + 1]] for r in range(m))
        return cls(labels=labels, region_count=m, region_pixel_lists=pixel_lists)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def region_sizes(self) -> np.ndarray:
        return np.array([len(idx) for idx in self.region_pixel_lists])

    def region_centroids(self) -> np.ndarray:
        """(m, 2) array of (row, col) centroids."""
        w = self.width
        out = np.empty((self.region_count, 2))
        for r, idx in enumerate(self.region_pixel_lists):
            out[r, 0] = np.mean(idx // w)
            out[r, 1] = np.mean(idx % w)
        return out


def choose_grid(height: int, width: int, target: int) -> tuple[int, int]:
    """Pick a (rows, cols) grid whose cell count is closest to ``target``.

    Ties prefer near-square cells, then wider-than-tall grids, so a 2-region
    request on a square image splits left/right rather than top/bottom.
    """
    best = None
    for rows in range(1, min(target, height) + 1):
        for cols in {target // rows, -(-target // rows), max(1, round(target / rows))}:
            if cols < 1 or cols > width:
                continue
            count = rows * cols
            score = (abs(count - target), abs(height / rows - width / cols), rows, cols)
            if best is None or score < best[0]:
                best = (score, rows, cols)
    if best is None:
        raise InvalidInputError(f"cannot place {target} regions on a {height}x{width} image")
    return best[1], best[2]


def grid_partition(height: int, width: int, rows: int, cols: int) -> RegionPartition:
    """Near-equal rectangular cells in row-major region-id order."""
    if rows < 1 or cols < 1 or rows > height or cols > width:
        raise InvalidInputError(f"grid {rows}x{cols} does not fit a {height}x{width} image")
    row_edges = (np.arange(rows + 1) * height) // rows
    col_edges = (np.arange(cols + 1) * width) // cols
    row_ids = np.searchsorted(row_edges, np.arange(height), side="right") - 1
    col_ids = np.searchsorted(col_edges, np.arange(width), side="right") - 1
    labels = row_ids[:, None] * cols + col_ids[None, :]
    return RegionPartition.from_labels(labels)


def _seed_positions(height, width, rows, cols):
    ys = np.clip(((np.arange(rows) + 0.5) * height / rows).astype(int), 0, height - 1)
    xs = np.clip(((np.arange(cols) + 0.5) * width / cols).astype(int), 0, width - 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


def _gradient_magnitude(lab):
    gy, gx = np.gradient(lab, axis=(0, 1))
    return np.sum(gy * gy + gx * gx, axis=2)


def _perturb_seeds(seeds, grad):
    """Move each seed to a strictly lower-gradient pixel in its 3x3 neighborhood."""
    height, width = grad.shape
    out = seeds.copy()
    for i, (y, x) in enumerate(seeds):
        best = grad[y, x]
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < height and 0 <= nx < width and grad[ny, nx] < best:
                    best = grad[ny, nx]
                    out[i] = (ny, nx)
    return out


def _enforce_connectivity(raw_labels: np.ndarray, min_size: float) -> np.ndarray:
    """Split disconnected clusters and merge small fragments.

    Every 4-connected component of the raw assignment becomes a candidate
    region; components smaller than ``min_size`` are absorbed by the largest
    adjacent surviving region (ties broken by lowest region id).
    """
    height, width = raw_labels.shape
    comp = np.full((height, width), -1, dtype=np.int64)
    next_id = 0
    for k in np.unique(raw_labels):
        mask = raw_labels == k
        lab, ncomp = ndimage.label(mask, structure=FOUR_CONNECTED)
        comp[mask] = lab[mask] + next_id - 1
        next_id += ncomp

    sizes = np.bincount(comp.ravel(), minlength=next_id)
    keep = sizes >= min_size
    if not np.any(keep):
        keep[int(np.argmax(sizes))] = True

    region = np.where(keep[comp], comp, -1)
    region_size = {int(c): int(sizes[c]) for c in range(next_id) if keep[c]}
    pending = sorted(
        (int(c) for c in range(next_id) if not keep[c]),
        key=lambda c: (sizes[c], c),
    )

    while pending:
        deferred = []
        merged_any = False
        for c in pending:
            mask = comp == c
            neighbors = _adjacent_regions(mask, region)
            if not neighbors:
                deferred.append(c)
                continue
            target = max(neighbors, key=lambda r: (region_size[r], -r))
            region[mask] = target
            region_size[target] += int(sizes[c])
            merged_any = True
        if not merged_any:
            raise InvalidInputError("connectivity enforcement failed to converge")
        pending = deferred

    # Relabel to [0, m) by first appearance in row-major order.
    flat = region.ravel()
    _, first = np.unique(flat, return_index=True)
    lut = np.empty(next_id, dtype=np.int32)
    for rank, i in enumerate(sorted(first)):
        lut[flat[i]] = rank
    return lut[region]


def _adjacent_regions(mask, region):
    found = set()
    for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
        shifted = np.roll(region, shift, axis=axis)
        if axis == 0:
            edge = slice(0, 1) if shift == 1 else slice(-1, None)
            shifted[edge, :] = -1
        else:
            edge = slice(0, 1) if shift == 1 else slice(-1, None)
            shifted[:, edge] = -1
        vals = shifted[mask]
        found.update(int(v) for v in np.unique(vals[vals >= 0]))
    return found


def segment_slico(image: Image, target_regions: int, iterations: int = 10) -> RegionPartition:
    """Segment ``image`` into roughly ``target_regions`` connected sub-regions.

    Deterministic for fixed inputs: cluster assignment ties break toward the
    lowest cluster id, and the post-pass scans components in a fixed order.
    """
    height, width = image.height, image.width
    if height < 2 or width < 2:
        raise InvalidInputError("image must be at least 2x2 for segmentation")
    if target_regions < 2:
        raise InvalidInputError("target_regions must be >= 2")
    if target_regions > height * width:
        raise InvalidInputError("target_regions cannot exceed the pixel count")
    if iterations < 1:
        raise InvalidInputError("iterations must be >= 1")

    lab = rgb2lab(image.pixels)
    rows, cols = choose_grid(height, width, target_regions)
    seeds = _perturb_seeds(_seed_positions(height, width, rows, cols), _gradient_magnitude(lab))
    k = len(seeds)

    centers = np.empty((k, 5))
    centers[:, :3] = lab[seeds[:, 0], seeds[:, 1]]
    centers[:, 3:] = seeds
    step = max(1, int(round(math.sqrt(height * width / k))))
    # Window half-widths are sized to cover every pixel even on elongated grids.
    wy = max(step, -(-height // rows) // 2 + 2)
    wx = max(step, -(-width // cols) // 2 + 2)
    inv_spatial = 1.0 / (step * step)
    max_color = np.full(k, 100.0)  # squared CIELAB normalizer, adapted per cluster

    ys_full = np.arange(height)
    xs_full = np.arange(width)
    for _ in range(iterations):
        dist = np.full((height, width), np.inf)
        assign = np.full((height, width), -1, dtype=np.int32)
        color_d = np.zeros((height, width))
        for ki in range(k):
            cy, cx = centers[ki, 3], centers[ki, 4]
            y0, y1 = max(0, int(cy) - wy), min(height, int(cy) + wy + 1)
            x0, x1 = max(0, int(cx) - wx), min(width, int(cx) + wx + 1)
            window = lab[y0:y1, x0:x1]
            dl = np.sum((window - centers[ki, :3]) ** 2, axis=2)
            dy = ys_full[y0:y1, None] - cy
            dx = xs_full[None, x0:x1] - cx
            d = dl / max_color[ki] + (dy * dy + dx * dx) * inv_spatial
            better = d < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][better] = d[better]
            assign[y0:y1, x0:x1][better] = ki
            color_d[y0:y1, x0:x1][better] = dl[better]

        if np.any(assign < 0):  # elongated-grid fallback, assignment by full distance
            miss = np.argwhere(assign < 0)
            for y, x in miss:
                dl = np.sum((lab[y, x] - centers[:, :3]) ** 2, axis=1)
                d = dl / max_color + ((y - centers[:, 3]) ** 2 + (x - centers[:, 4]) ** 2) * inv_spatial
                ki = int(np.argmin(d))
                assign[y, x] = ki
                color_d[y, x] = dl[ki]

        for ki in range(k):
            mask = assign == ki
            if not np.any(mask):
                continue
            ys, xs = np.nonzero(mask)
            centers[ki, :3] = lab[ys, xs].mean(axis=0)
            centers[ki, 3] = ys.mean()
            centers[ki, 4] = xs.mean()
            max_color[ki] = max(max_color[ki], float(color_d[mask].max()))

    min_size = (height * width / target_regions) / 4.0
    return RegionPartition.from_labels(_enforce_connectivity(assign, min_size))


def reveal(image: Image, partition: RegionPartition, subset, baseline: int = 0) -> Image:
    """Keep pixels of the subset's regions; set every other pixel to ``baseline``."""
    if not (0 <= baseline <= 255):
        raise InvalidInputError(f"baseline must be in [0, 255], got {baseline}")
    if image.height != partition.height or image.width != partition.width:
        raise InvalidInputError("image and partition shapes disagree")
    subset = sorted(set(int(r) for r in subset))
    for r in subset:
        if r < 0 or r >= partition.region_count:
            raise InvalidInputError(f"region id {r} out of range [0, {partition.region_count})")
    out = np.full(image.pixels.shape, baseline, dtype=np.uint8)
    if subset:
        idx = np.concatenate([partition.region_pixel_lists[r] for r in subset])
        flat = out.reshape(-1, 3)
        flat[idx] = image.pixels.reshape(-1, 3)[idx]
    return Image(pixels=out)


_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(\d+)\s+(\d+)\s")


def save_partition(partition: RegionPartition, path) -> None:
    """Write labels as a 16-bit binary PGM plus a JSON metadata sidecar."""
    path = Path(path)
    if partition.region_count > 65536:
        raise InvalidInputError("partition files support at most 65536 regions")
    header = f"P5\n{partition.width} {partition.height}\n65535\n".encode()
    atomic_write_bytes(path, header + partition.labels.astype(">u2").tobytes())
    meta = {
        "region_count": partition.region_count,
        "height": partition.height,
        "width": partition.width,
        "provenance": {"format": "vpsearch-partition-v1"},
    }
    atomic_write_bytes(path.with_suffix(".json"),
                       json.dumps(meta, sort_keys=True, indent=2).encode() + b"\n")


def load_partition(path) -> RegionPartition:
    """Read a partition written by :func:`save_partition`, validating invariants."""
    path = Path(path)
    blob = path.read_bytes()
    match = _PGM_HEADER.match(blob)
    if not match:
        raise InvalidInputError(f"{path} is not a binary 16-bit PGM")
    width, height, maxval = (int(match.group(i)) for i in (1, 2, 3))
    if maxval != 65535:
        raise InvalidInputError("partition PGM must use maxval 65535")
    data = blob[match.end():]
    expected = height * width * 2
    if len(data) != expected:
        raise InvalidInputError(f"partition payload is {len(data)} bytes, expected {expected}")
    labels = np.frombuffer(data, dtype=">u2").reshape(height, width).astype(np.int32)
    partition = RegionPartition.from_labels(labels)

    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        if meta.get("region_count") != partition.region_count:
            raise InvalidInputError(
                f"sidecar region_count {meta.get('region_count')} does not match "
                f"labels ({partition.region_count} regions)")
    return partition
