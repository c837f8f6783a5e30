"""Graph-based over-segmentation of an image patch into super-pixels.

Pixels form an 8-connected grid graph weighted by RGB Euclidean distance
after optional Gaussian pre-smoothing.  Components merge greedily in
nondecreasing edge-weight order whenever the edge weight does not exceed
either component's internal difference plus k/|C|; undersized components
are then absorbed along their cheapest boundary edge.

Edge ties are broken by (weight, smaller pixel index, larger pixel index)
so identical inputs always produce identical label maps.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import EmptyPatchError, NonPositiveParameterError

_LABEL_MAP_MAGIC = b"SGL1"


@dataclass(frozen=True)
class SegmentLabelMap:
    """Per-pixel segment ids, contiguous 0..num_segments-1."""

    labels: np.ndarray  # (H, W) int32
    num_segments: int

    def __post_init__(self):
        self.labels.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def _smooth(patch: np.ndarray, sigma: float) -> np.ndarray:
    out = np.asarray(patch, dtype=np.float64)
    if sigma > 0:
        out = gaussian_filter(out, sigma=(sigma, sigma, 0), mode="nearest")
    return out


def build_grid_graph(patch: np.ndarray, sigma: float = 0.8):
    """8-neighbor pixel edges with RGB-distance weights.

    Returns (a, b, w): flat pixel indices with a < b and Euclidean RGB
    distances computed on the smoothed patch.
    """
    patch = np.asarray(patch)
    if patch.ndim != 3 or patch.shape[0] == 0 or patch.shape[1] == 0:
        raise EmptyPatchError(f"patch shape {patch.shape}")
    h, w = patch.shape[:2]
    sm = _smooth(patch, sigma)

    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    pairs_a = []
    pairs_b = []
    weights = []

    def add(sl_a, sl_b):
        a = idx[sl_a].ravel()
        b = idx[sl_b].ravel()
        d = sm[sl_a].reshape(-1, sm.shape[2]) - sm[sl_b].reshape(-1, sm.shape[2])
        pairs_a.append(a)
        pairs_b.append(b)
        weights.append(np.sqrt(np.sum(d * d, axis=1)))

    if w > 1:
        add(np.s_[:, :-1], np.s_[:, 1:])  # right
    if h > 1:
        add(np.s_[:-1, :], np.s_[1:, :])  # down
    if h > 1 and w > 1:
        add(np.s_[:-1, :-1], np.s_[1:, 1:])  # down-right
        add(np.s_[:-1, 1:], np.s_[1:, :-1])  # down-left

    if not pairs_a:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0, dtype=np.float64)
    a = np.concatenate(pairs_a)
    b = np.concatenate(pairs_b)
    wgt = np.concatenate(weights)
    return a, b, wgt


class _UnionFind:
    __slots__ = ("parent", "size", "count")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.count = n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        # a, b are roots; attach smaller tree under larger, ties to a
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.count -= 1
        return a


def felzenszwalb(
    patch: np.ndarray,
    k: float,
    min_size: int,
    sigma: float = 0.8,
) -> SegmentLabelMap:
    """Segment a patch; k trades segment size against boundary evidence.

    Larger k yields coarser segmentations.  Components smaller than
    min_size after the merge phase are joined with the neighbor across
    their lowest-weight boundary edge.
    """
    if k <= 0:
        raise NonPositiveParameterError(f"k must be > 0, got {k}")
    if min_size < 1:
        raise NonPositiveParameterError(f"min_size must be >= 1, got {min_size}")
    patch = np.asarray(patch)
    if patch.ndim != 3 or patch.shape[0] == 0 or patch.shape[1] == 0:
        raise EmptyPatchError(f"patch shape {patch.shape}")

    h, w = patch.shape[:2]
    a, b, wgt = build_grid_graph(patch, sigma)
    order = np.lexsort((b, a, wgt))
    a = a[order].tolist()
    b = b[order].tolist()
    wgt = wgt[order].tolist()

    uf = _UnionFind(h * w)
    threshold = [float(k)] * (h * w)  # Int(C) + k/|C|, Int starts at 0
    find = uf.find
    size = uf.size

    for e in range(len(wgt)):
        ra = find(a[e])
        rb = find(b[e])
        if ra == rb:
            continue
        we = wgt[e]
        if we <= threshold[ra] and we <= threshold[rb]:
            root = uf.union(ra, rb)
            threshold[root] = we + k / size[root]

    # absorb undersized components along their cheapest remaining edge
    for e in range(len(wgt)):
        ra = find(a[e])
        rb = find(b[e])
        if ra != rb and (size[ra] < min_size or size[rb] < min_size):
            uf.union(ra, rb)

    # contiguous labels in row-major first-appearance order
    labels = np.empty(h * w, dtype=np.int32)
    remap: dict[int, int] = {}
    for px in range(h * w):
        root = find(px)
        lab = remap.get(root)
        if lab is None:
            lab = len(remap)
            remap[root] = lab
        labels[px] = lab

    return SegmentLabelMap(labels=labels.reshape(h, w), num_segments=len(remap))


def save_label_map(path, seg: SegmentLabelMap) -> None:
    """Debug dump: magic, u32 width, u32 height, then u32 labels row-major."""
    h, w = seg.labels.shape
    payload = seg.labels.astype("<u4").tobytes()
    with open(path, "wb") as f:
        f.write(_LABEL_MAP_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(payload)


def load_label_map(path) -> SegmentLabelMap:
    raw = Path(path).read_bytes()
    if raw[:4] != _LABEL_MAP_MAGIC:
        raise ValueError(f"not a label map file: {path}")
    w, h = struct.unpack_from("<II", raw, 4)
    labels = np.frombuffer(raw[12:], dtype="<u4", count=h * w).astype(np.int32)
    labels = labels.reshape(h, w)
    return SegmentLabelMap(labels=labels, num_segments=int(labels.max()) + 1)
