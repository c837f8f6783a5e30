"""Natural-scene sample selection guided by a land-cover raster.

Candidate windows from selective search are scored for category
homogeneity: S = sum_c p_c * ln(p_c) over the window's land-cover class
histogram.  The keep test applies the threshold to exp(S), the geometric
mean of per-pixel class fractions, which lies in (0, 1] and equals 1
exactly when the window is single-class.  Kept windows become samples
labeled with the window's dominant class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidHistogramError
from .geo_raster import (
    ClassHistogram,
    GeoRaster,
    Rect,
    align_class_ids,
    histogram_from_ids,
)
from .region_proposal import ProposalParams, selective_search
from .taxonomy import NUM_NATURAL, SceneCategory, natural_category

HIST_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Sample:
    """One extracted patch with its noisy category label."""

    image_id: str
    window: Rect
    label: SceneCategory
    source_kind: str  # "natural" | "man-made"
    score: float | None = None

    def __post_init__(self):
        if self.source_kind not in ("natural", "man-made"):
            raise ValueError(f"bad source kind: {self.source_kind!r}")
        if self.label.kind != self.source_kind:
            raise ValueError(
                f"label {self.label.name!r} is {self.label.kind}, "
                f"sample is {self.source_kind}"
            )


def _validate_histogram(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidHistogramError(f"bad histogram shape {p.shape}")
    if np.any(p < 0) or np.any(p > 1):
        raise InvalidHistogramError("histogram entries outside [0, 1]")
    if abs(float(p.sum()) - 1.0) > HIST_SUM_TOL:
        raise InvalidHistogramError(f"histogram sums to {p.sum()!r}, not 1")
    return p


def homogeneity_score(h) -> float:
    """S = sum p*ln(p) with 0*ln(0) = 0; 0 for one-hot, ln(1/C) for uniform."""
    p = h.p if isinstance(h, ClassHistogram) else h
    p = _validate_histogram(p)
    nz = p[p > 0]
    return float(np.sum(nz * np.log(nz)))


def keep_candidate(score: float, threshold: float) -> bool:
    """Keep iff exp(score) >= threshold; monotone in score."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    return math.exp(score) >= threshold


def sample_natural(
    image: GeoRaster,
    landcover: GeoRaster,
    seg_params: ProposalParams,
    threshold: float,
    *,
    image_id: str = "",
    num_classes: int = NUM_NATURAL,
    max_dimension: int = 1024,
) -> list[Sample]:
    """Candidate windows kept by the homogeneity filter, labeled argmax class.

    The land-cover raster is aligned into the image grid by nearest
    neighbor; candidates reaching outside the land-cover footprint are
    skipped.  Images larger than max_dimension on a side are segmented
    tile by tile.
    """
    if image.bands != 3:
        raise ValueError(f"expected 3-band image raster, got {image.bands}")
    aligned = align_class_ids(image, landcover)  # CrsMismatch / NoOverlap
    patch_full = image.data.astype(np.float64)

    rects: list[Rect] = []
    for row0 in range(0, image.height, max_dimension):
        for col0 in range(0, image.width, max_dimension):
            th = min(max_dimension, image.height - row0)
            tw = min(max_dimension, image.width - col0)
            if min(th, tw) < seg_params.min_side:
                continue
            tile = patch_full[row0 : row0 + th, col0 : col0 + tw]
            for r in selective_search(tile, seg_params):
                rects.append(Rect(r.col0 + col0, r.row0 + row0, r.width, r.height))

    samples = []
    for rect in rects:
        ids = aligned[rect.row0 : rect.row1, rect.col0 : rect.col1]
        if ids.min() < 0:  # partially outside land-cover coverage
            continue
        hist = histogram_from_ids(ids, num_classes)
        score = homogeneity_score(hist)
        if not keep_candidate(score, threshold):
            continue
        label = natural_category(int(np.argmax(hist)))
        samples.append(
            Sample(
                image_id=image_id,
                window=rect,
                label=label,
                source_kind="natural",
                score=score,
            )
        )
    return samples
