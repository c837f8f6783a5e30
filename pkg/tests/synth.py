"""Procedural fixture data shared across the test suite.

Two corpora drive the training-trend tests: a "general" corpus of
assorted procedural textures, and a "specialized" 8-class mosaic corpus
whose classes differ only in spatial arrangement of the same two
colors, so mean color carries no class signal.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from rsforge.geo_raster import GeoRaster, IDENTITY_TRANSFORM, Rect
from rsforge.natural_sampler import Sample
from rsforge.resampler import DatasetManifest
from rsforge.taxonomy import category_by_name

MOSAIC_CLASS_NAMES = (
    "Forest", "Grassland", "Cropland", "Water",
    "Airport", "Parking", "School", "Residential area",
)

_COLOR_A = np.array([0.58, 0.44, 0.40])
_COLOR_B = np.array([0.42, 0.56, 0.60])


def _texture_base(rng: np.random.Generator, side: int, kind: int) -> np.ndarray:
    """Scalar field in [0, 1] for one texture family."""
    yy, xx = np.mgrid[0:side, 0:side] / side
    if kind == 0:  # oriented grating, low spatial frequency only
        theta = rng.uniform(0, np.pi)
        freq = rng.uniform(2, 6)
        phase = rng.uniform(0, 2 * np.pi)
        return 0.5 + 0.5 * np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
    if kind == 1:  # coarse checkerboard
        block = int(rng.integers(8, 17))
        cells = (np.add.outer(np.arange(side) // block, np.arange(side) // block)) % 2
        return cells.astype(float)
    if kind == 2:  # low-pass noise
        base = gaussian_filter(rng.random((side, side)), sigma=rng.uniform(0.5, 4.0))
        lo, hi = base.min(), base.max()
        return (base - lo) / (hi - lo) if hi > lo else base
    if kind == 3:  # linear ramp
        theta = rng.uniform(0, 2 * np.pi)
        base = xx * np.cos(theta) + yy * np.sin(theta)
        lo, hi = base.min(), base.max()
        return (base - lo) / (hi - lo) if hi > lo else base
    # random dots
    base = np.zeros((side, side))
    r = rng.uniform(3, 8)
    for _ in range(int(rng.integers(5, 15))):
        cy, cx = rng.uniform(0, side, 2)
        base[(yy * side - cy) ** 2 + (xx * side - cx) ** 2 < r**2] = 1.0
    return base


def texture_image(rng: np.random.Generator, side: int = 64) -> np.ndarray:
    """One random procedural texture, uint8 (side, side, 3).

    Roughly a third of the images are collages, a 2x2 arrangement of
    independent textures, so the corpus exhibits region boundaries and
    junctions as well as pure periodic patterns.
    """
    if rng.random() < 0.35:  # collage of four texture patches
        half = side // 2
        base = np.zeros((side, side))
        for oy in (0, half):
            for ox in (0, half):
                kind = int(rng.integers(0, 2))
                base[oy : oy + half, ox : ox + half] = _texture_base(rng, half, kind)
    else:
        base = _texture_base(rng, side, int(rng.integers(0, 5)))
    c1 = rng.uniform(0.1, 0.9, 3)
    c2 = rng.uniform(0.1, 0.9, 3)
    img = c1 + (c2 - c1) * base[:, :, None]
    img += rng.normal(0, 0.02, img.shape)
    return (np.clip(img, 0, 1) * 255).astype(np.uint8)


def make_texture_corpus(dest, n: int = 128, side: int = 64, seed: int = 0) -> list:
    """Write ``n`` texture PNGs under ``dest``; returns the file paths."""
    root = Path(dest)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        p = root / f"tex{i:04d}.png"
        Image.fromarray(texture_image(rng, side)).save(p)
        paths.append(p)
    return paths


def mosaic_tile(style: int, rng: np.random.Generator, side: int = 32) -> np.ndarray:
    """Class prototype ``style`` in [0, 8) as a uint8 tile.

    Each class is a sine grating at one of eight orientations, 22.5
    degree steps apart.  Phase, contrast and illumination vary freely
    per tile, so separating neighboring orientations needs sharper
    tuning than a generic filter bank gives.
    """
    if not 0 <= style < 8:
        raise ValueError(f"style must be in [0, 8), got {style}")
    yy, xx = np.mgrid[0:side, 0:side] / side
    theta = style * np.pi / 8
    freq = 4.0
    phase = rng.uniform(0, 2 * np.pi)
    base = 0.5 + 0.5 * np.sin(
        2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase
    )
    img = _COLOR_A + (_COLOR_B - _COLOR_A) * base[:, :, None]
    # per-tile sharpness, contrast, illumination and noise level:
    # class-uninformative by construction
    img = gaussian_filter(img, sigma=(rng.uniform(0, 0.8),) * 2 + (0,))
    img = (img - 0.5) * rng.uniform(0.8, 1.3) + 0.5
    img = img * rng.uniform(0.8, 1.2) + rng.normal(0, rng.uniform(0.05, 0.10), img.shape)
    return (np.clip(img, 0, 1) * 255).astype(np.uint8)


def mosaic_samples(counts, side: int = 32, seed: int = 0):
    """Labeled mosaic tiles: (samples, label ids, category list).

    ``counts`` is either one int (per class) or a map from class name
    (in MOSAIC_CLASS_NAMES) to count.
    """
    if isinstance(counts, int):
        counts = {name: counts for name in MOSAIC_CLASS_NAMES}
    rng = np.random.default_rng(seed)
    cats = [category_by_name(n) for n in MOSAIC_CLASS_NAMES]
    samples, labels = [], []
    for style, cat in enumerate(cats):
        for _ in range(counts.get(cat.name, 0)):
            samples.append(mosaic_tile(style, rng, side))
            labels.append(cat.id)
    return samples, np.array(labels), cats


def mosaic_raster_and_manifest(counts, side: int = 32, seed: int = 0, dataset_id: str = "mosaic"):
    """Tiles composed into one raster plus the matching manifest.

    Returns (rasters dict, manifest); manifest windows address tile
    positions in a near-square grid on a single synthetic raster.
    """
    samples, labels, cats = mosaic_samples(counts, side, seed)
    by_id = {c.id: c for c in cats}
    n = len(samples)
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    sheet = np.zeros((rows * side, cols * side, 3), dtype=np.uint8)
    records = []
    for i, (tile, lab) in enumerate(zip(samples, labels)):
        r, c = divmod(i, cols)
        sheet[r * side : (r + 1) * side, c * side : (c + 1) * side] = tile
        cat = by_id[int(lab)]
        records.append(
            Sample(
                image_id=dataset_id,
                window=Rect(c * side, r * side, side, side),
                label=cat,
                source_kind=cat.kind,
            )
        )
    raster = GeoRaster(
        width=cols * side, height=rows * side, bands=3,
        data=sheet, transform=IDENTITY_TRANSFORM, crs_tag=None,
    )
    manifest = DatasetManifest(
        id=dataset_id, seed=seed, records=tuple(records),
        taxonomy_names=tuple(c.name for c in cats),
    )
    return {dataset_id: raster}, manifest


def random_rgb_raster(width: int, height: int, seed: int = 0, transform=IDENTITY_TRANSFORM):
    data = (np.random.default_rng(seed).random((height, width, 3)) * 255).astype(np.uint8)
    return GeoRaster(width, height, 3, data, transform, None)
