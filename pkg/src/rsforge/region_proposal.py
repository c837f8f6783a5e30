"""Hierarchical grouping of super-pixels into candidate sample windows.

Starting from the over-segmentation, the most similar pair of adjacent
regions is merged repeatedly until one region remains; every initial and
merged region contributes its minimum bounding rectangle as a candidate.
Similarity combines color-histogram and texture-histogram intersection
with size and bounding-box-fill terms, each in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import find_objects

from .errors import DimensionMismatchError, EmptyPatchError
from .geo_raster import Rect
from .oversegment import SegmentLabelMap, felzenszwalb

COLOR_BINS = 25
TEXTURE_BINS = 10


@dataclass
class ProposalParams:
    """Knobs for segmentation and candidate filtering."""

    k: float = 300.0
    min_size: int = 50
    sigma: float = 0.8
    min_side: int = 32
    max_side: int | None = None  # None: no upper limit beyond the patch itself


@dataclass
class Region:
    """A segment or merged region inside one patch."""

    pixel_count: int
    bbox: Rect
    color_hist: np.ndarray = field(repr=False)
    texture_hist: np.ndarray = field(repr=False)
    alive: bool = True


def _color_bin_grid(patch: np.ndarray) -> np.ndarray:
    v = np.clip(patch, 0.0, 255.0)
    return np.minimum((v * COLOR_BINS / 256.0).astype(np.int64), COLOR_BINS - 1)


def _texture_bin_grid(patch: np.ndarray) -> np.ndarray:
    """Gradient-orientation bin per pixel per channel."""
    bins = np.empty(patch.shape, dtype=np.int64)
    for c in range(patch.shape[2]):
        gy, gx = np.gradient(patch[:, :, c])
        theta = np.arctan2(gy, gx)  # [-pi, pi]
        idx = np.floor((theta + np.pi) / (2.0 * np.pi) * TEXTURE_BINS).astype(np.int64)
        bins[:, :, c] = np.clip(idx, 0, TEXTURE_BINS - 1)
    return bins


def _per_segment_hist(labels, bin_grid, n_segments, n_bins):
    """(n_segments, channels*n_bins) bin counts, channel-major."""
    flat_labels = labels.ravel()
    parts = []
    for c in range(bin_grid.shape[2]):
        combined = flat_labels * n_bins + bin_grid[:, :, c].ravel()
        counts = np.bincount(combined, minlength=n_segments * n_bins)
        parts.append(counts.reshape(n_segments, n_bins))
    return np.concatenate(parts, axis=1).astype(np.float64)


def initial_regions(labels: SegmentLabelMap, patch: np.ndarray):
    """One Region per segment plus the segment adjacency graph.

    Returns (regions, adjacency) where adjacency maps region id to the set
    of 8-connected neighbor ids.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[:2] != labels.shape:
        raise DimensionMismatchError(
            f"patch {patch.shape} vs labels {labels.shape}"
        )
    lab = labels.labels
    n = labels.num_segments

    color = _per_segment_hist(lab, _color_bin_grid(patch), n, COLOR_BINS)
    texture = _per_segment_hist(lab, _texture_bin_grid(patch), n, TEXTURE_BINS)
    color /= color.sum(axis=1, keepdims=True)
    texture /= texture.sum(axis=1, keepdims=True)

    sizes = np.bincount(lab.ravel(), minlength=n)
    slices = find_objects(lab + 1)

    regions = []
    for i in range(n):
        rs, cs = slices[i]
        bbox = Rect(cs.start, rs.start, cs.stop - cs.start, rs.stop - rs.start)
        regions.append(
            Region(
                pixel_count=int(sizes[i]),
                bbox=bbox,
                color_hist=color[i],
                texture_hist=texture[i],
            )
        )

    adjacency: dict[int, set[int]] = {i: set() for i in range(n)}
    for sl_a, sl_b in (
        (np.s_[:, :-1], np.s_[:, 1:]),
        (np.s_[:-1, :], np.s_[1:, :]),
        (np.s_[:-1, :-1], np.s_[1:, 1:]),
        (np.s_[:-1, 1:], np.s_[1:, :-1]),
    ):
        a = lab[sl_a].ravel()
        b = lab[sl_b].ravel()
        mask = a != b
        if not mask.any():
            continue
        lo = np.minimum(a[mask], b[mask])
        hi = np.maximum(a[mask], b[mask])
        for key in np.unique(lo.astype(np.int64) * n + hi):
            i, j = divmod(int(key), n)
            adjacency[i].add(j)
            adjacency[j].add(i)
    return regions, adjacency


def similarity(a: Region, b: Region, patch_area: int) -> float:
    """Merge priority of two adjacent regions, clamped to [0, 4]."""
    s_color = float(np.minimum(a.color_hist, b.color_hist).sum())
    s_texture = float(np.minimum(a.texture_hist, b.texture_hist).sum())
    s_size = 1.0 - (a.pixel_count + b.pixel_count) / patch_area
    merged_bbox = a.bbox.union(b.bbox)
    s_fill = 1.0 - (merged_bbox.area - a.pixel_count - b.pixel_count) / patch_area
    return float(np.clip(s_color + s_texture + s_size + s_fill, 0.0, 4.0))


def _merge_regions(a: Region, b: Region) -> Region:
    total = a.pixel_count + b.pixel_count
    color = (a.pixel_count * a.color_hist + b.pixel_count * b.color_hist) / total
    texture = (a.pixel_count * a.texture_hist + b.pixel_count * b.texture_hist) / total
    return Region(
        pixel_count=total,
        bbox=a.bbox.union(b.bbox),
        color_hist=color / color.sum(),
        texture_hist=texture / texture.sum(),
    )


def hierarchical_merge(regions: list[Region], adjacency: dict[int, set[int]], patch_area: int):
    """Greedy merging to a single region; returns merged bboxes in order.

    Mutates ``regions`` (appends merged entries, clears alive flags).
    Similarity ties pick the lexicographically smallest (min id, max id)
    pair, so the merge sequence is deterministic.
    """
    adj = {i: set(nbrs) for i, nbrs in adjacency.items()}
    sims: dict[tuple[int, int], float] = {}
    for i, nbrs in adjacency.items():
        for j in nbrs:
            if i < j:
                sims[(i, j)] = similarity(regions[i], regions[j], patch_area)

    merged_bboxes = []
    while sims:
        best_pair = None
        best_sim = -1.0
        for pair, s in sims.items():
            if s > best_sim or (s == best_sim and pair < best_pair):
                best_sim = s
                best_pair = pair
        i, j = best_pair

        new_id = len(regions)
        merged = _merge_regions(regions[i], regions[j])
        regions.append(merged)
        regions[i].alive = False
        regions[j].alive = False
        merged_bboxes.append(merged.bbox)

        neighbors = (adj[i] | adj[j]) - {i, j}
        for old in (i, j):
            for nb in adj[old]:
                adj[nb].discard(old)
                sims.pop((min(old, nb), max(old, nb)), None)
            adj[old] = set()
        adj[new_id] = neighbors
        for nb in neighbors:
            adj[nb].add(new_id)
            sims[(nb, new_id)] = similarity(regions[nb], merged, patch_area)
    return merged_bboxes


def selective_search(patch: np.ndarray, params: ProposalParams) -> list[Rect]:
    """Candidate windows for one patch: initial segment bboxes plus every
    merged bbox, deduplicated and filtered by side length."""
    patch = np.asarray(patch)
    if patch.ndim != 3 or patch.shape[0] == 0 or patch.shape[1] == 0:
        raise EmptyPatchError(f"patch shape {patch.shape}")
    seg = felzenszwalb(patch, params.k, params.min_size, params.sigma)
    regions, adjacency = initial_regions(seg, patch)
    patch_area = patch.shape[0] * patch.shape[1]

    candidates = [r.bbox for r in regions]
    candidates += hierarchical_merge(regions, adjacency, patch_area)

    max_side = params.max_side or max(patch.shape[0], patch.shape[1])
    seen = set()
    out = []
    for rect in candidates:
        key = (rect.col0, rect.row0, rect.width, rect.height)
        if key in seen:
            continue
        seen.add(key)
        if min(rect.width, rect.height) < params.min_side:
            continue
        if max(rect.width, rect.height) > max_side:
            continue
        out.append(rect)
    return out
