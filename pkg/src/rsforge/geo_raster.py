"""Rasters with affine georeferencing.

A raster is a row-major pixel grid plus a 6-coefficient affine transform
mapping pixel (col, row) to planar geo coordinates:

    x = origin_x + col * pixel_w + row * row_rot
    y = origin_y + col * col_rot + row * pixel_h

Pixel (col, row) covers the half-open unit square [col, col+1) x [row, row+1),
so ``geo_to_pixel`` floors the inverse-affine image of a point and
``pixel_to_geo`` reports the pixel center.  Georeferencing comes from plain
6-line world files; rasters without one get the identity transform
(origin 0,0; pixel size 1,-1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CrsMismatchError,
    MalformedWorldFileError,
    NoOverlapError,
    SingularTransformError,
    UnknownClassIdError,
    UnreadableImageError,
    WindowOutOfBoundsError,
)

# transform tuple layout
AffineTransform = tuple[float, float, float, float, float, float]

IDENTITY_TRANSFORM: AffineTransform = (0.0, 1.0, 0.0, 0.0, 0.0, -1.0)


@dataclass(frozen=True)
class Rect:
    """Pixel-space window: top-left corner plus size."""

    col0: int
    row0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"degenerate rect: {self}")

    @property
    def col1(self) -> int:
        return self.col0 + self.width

    @property
    def row1(self) -> int:
        return self.row0 + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, other: "Rect") -> bool:
        return (
            self.col0 <= other.col0
            and self.row0 <= other.row0
            and self.col1 >= other.col1
            and self.row1 >= other.row1
        )

    def union(self, other: "Rect") -> "Rect":
        c0 = min(self.col0, other.col0)
        r0 = min(self.row0, other.row0)
        c1 = max(self.col1, other.col1)
        r1 = max(self.row1, other.row1)
        return Rect(c0, r0, c1 - c0, r1 - r0)


@dataclass(frozen=True)
class GeoRaster:
    """Immutable pixel grid with an affine geotransform.

    data is (height, width, bands) uint8; bands is 1 for class-id rasters
    and 3 for RGB imagery.
    """

    width: int
    height: int
    bands: int
    data: np.ndarray = field(repr=False)
    transform: AffineTransform = IDENTITY_TRANSFORM
    crs_tag: str = ""

    def __post_init__(self):
        if self.data.shape != (self.height, self.width, self.bands):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{self.height}x{self.width}x{self.bands}"
            )
        _, pixel_w, _, _, _, pixel_h = self.transform
        if pixel_w == 0 or pixel_h == 0:
            raise ValueError("pixel size must be non-zero in both axes")
        self.data.flags.writeable = False

    @property
    def full_rect(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def window(self, rect: Rect) -> np.ndarray:
        """Read-only view of the pixels inside ``rect``."""
        if not self.full_rect.contains(rect):
            raise WindowOutOfBoundsError(
                f"window {rect} outside raster {self.width}x{self.height}"
            )
        return self.data[rect.row0 : rect.row1, rect.col0 : rect.col1]

    def geo_bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the raster footprint in geo space."""
        corners_c = np.array([0.0, self.width, 0.0, self.width])
        corners_r = np.array([0.0, 0.0, self.height, self.height])
        xs, ys = pixel_to_geo_arrays(self, corners_c, corners_r)
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())


def _parse_world_file(path: Path) -> AffineTransform:
    try:
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as e:
        raise MalformedWorldFileError(f"cannot read world file {path}: {e}") from e
    if len(lines) != 6:
        raise MalformedWorldFileError(
            f"world file {path} has {len(lines)} lines, expected 6"
        )
    try:
        vals = [float(ln) for ln in lines]
    except ValueError as e:
        raise MalformedWorldFileError(f"non-numeric line in {path}: {e}") from e
    pixel_w, row_rot, col_rot, pixel_h, origin_x, origin_y = vals
    if pixel_w == 0 or pixel_h == 0:
        raise MalformedWorldFileError(f"zero pixel size in {path}")
    return (origin_x, pixel_w, row_rot, origin_y, col_rot, pixel_h)


def load_raster(path, sidecar=None, crs_tag: str = "") -> GeoRaster:
    """Load an image file plus optional world file into a GeoRaster.

    With ``sidecar=None`` the world file is looked up at ``<stem>.wld`` next
    to the image; a missing world file yields the identity transform.
    Single-band (L or palette) images become class-id rasters, everything
    else is converted to 3-band RGB.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode in ("L", "P", "I;16", "I"):
                arr = np.asarray(img)
                if arr.dtype != np.uint8:
                    arr = arr.astype(np.uint8)
                arr = arr[:, :, None]
            else:
                arr = np.asarray(img.convert("RGB"))
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise UnreadableImageError(f"cannot decode {path}: {e}") from e

    if sidecar is not None:
        transform = _parse_world_file(Path(sidecar))
    else:
        wld = path.with_suffix(".wld")
        transform = _parse_world_file(wld) if wld.exists() else IDENTITY_TRANSFORM

    h, w, bands = arr.shape
    return GeoRaster(
        width=w,
        height=h,
        bands=bands,
        data=np.ascontiguousarray(arr),
        transform=transform,
        crs_tag=crs_tag,
    )


def write_world_file(path, transform: AffineTransform) -> None:
    origin_x, pixel_w, row_rot, origin_y, col_rot, pixel_h = transform
    lines = [pixel_w, row_rot, col_rot, pixel_h, origin_x, origin_y]
    Path(path).write_text("".join(f"{v!r}\n" for v in lines))


def pixel_to_geo(r: GeoRaster, col: int, row: int) -> tuple[float, float]:
    """Geo coordinates of the center of pixel (col, row)."""
    origin_x, pixel_w, row_rot, origin_y, col_rot, pixel_h = r.transform
    c = col + 0.5
    w = row + 0.5
    x = origin_x + c * pixel_w + w * row_rot
    y = origin_y + c * col_rot + w * pixel_h
    return x, y


def pixel_to_geo_arrays(r: GeoRaster, cols: np.ndarray, rows: np.ndarray):
    """Vectorized affine map of fractional pixel coordinates (no center shift)."""
    origin_x, pixel_w, row_rot, origin_y, col_rot, pixel_h = r.transform
    x = origin_x + cols * pixel_w + rows * row_rot
    y = origin_y + cols * col_rot + rows * pixel_h
    return x, y


def _inverse_coeffs(r: GeoRaster) -> tuple[float, float, float, float, float]:
    origin_x, pixel_w, row_rot, origin_y, col_rot, pixel_h = r.transform
    det = pixel_w * pixel_h - row_rot * col_rot
    if det == 0:
        raise SingularTransformError(f"non-invertible transform {r.transform}")
    return det, pixel_w, row_rot, col_rot, pixel_h


def geo_to_pixel_float(r: GeoRaster, x: float, y: float) -> tuple[float, float]:
    """Real-valued (col, row) of a geo point; no bounds check."""
    det, pixel_w, row_rot, col_rot, pixel_h = _inverse_coeffs(r)
    origin_x, _, _, origin_y, _, _ = r.transform
    dx = x - origin_x
    dy = y - origin_y
    col = (dx * pixel_h - dy * row_rot) / det
    row = (dy * pixel_w - dx * col_rot) / det
    return col, row


def geo_to_pixel(r: GeoRaster, x: float, y: float):
    """Integer pixel containing geo point (x, y), or None when outside."""
    col_f, row_f = geo_to_pixel_float(r, x, y)
    col = math.floor(col_f)
    row = math.floor(row_f)
    if 0 <= col < r.width and 0 <= row < r.height:
        return col, row
    return None


def geo_to_pixel_arrays(r: GeoRaster, xs: np.ndarray, ys: np.ndarray):
    """Vectorized ``geo_to_pixel``: floored (cols, rows) plus in-bounds mask."""
    det, pixel_w, row_rot, col_rot, pixel_h = _inverse_coeffs(r)
    origin_x, _, _, origin_y, _, _ = r.transform
    dx = xs - origin_x
    dy = ys - origin_y
    cols = np.floor((dx * pixel_h - dy * row_rot) / det).astype(np.int64)
    rows = np.floor((dy * pixel_w - dx * col_rot) / det).astype(np.int64)
    inside = (cols >= 0) & (cols < r.width) & (rows >= 0) & (rows < r.height)
    return cols, rows, inside


def _histogram_from_ids(ids: np.ndarray, num_classes: int) -> np.ndarray:
    if ids.size == 0:
        raise WindowOutOfBoundsError("empty pixel window")
    if int(ids.min()) < 0:
        raise UnknownClassIdError("negative class id in window")
    max_id = int(ids.max())
    if max_id >= num_classes:
        raise UnknownClassIdError(
            f"class id {max_id} >= num_classes={num_classes}"
        )
    counts = np.bincount(ids.ravel(), minlength=num_classes)
    return counts / ids.size


@dataclass(frozen=True)
class ClassHistogram:
    """Per-class pixel fractions over a window; entries sum to 1."""

    p: np.ndarray

    def __post_init__(self):
        self.p.flags.writeable = False

    @property
    def num_classes(self) -> int:
        return len(self.p)


def class_histogram(landcover: GeoRaster, window: Rect, num_classes: int) -> ClassHistogram:
    """Fraction of window pixels per class id.

    Raises WindowOutOfBoundsError when the window leaves the raster and
    UnknownClassIdError when any pixel id is >= num_classes.
    """
    if landcover.bands != 1:
        raise ValueError("class_histogram needs a single-band class-id raster")
    ids = landcover.window(window)[:, :, 0].astype(np.int64)
    return ClassHistogram(_histogram_from_ids(ids, num_classes))


def rasters_overlap(a: GeoRaster, b: GeoRaster) -> bool:
    ax0, ay0, ax1, ay1 = a.geo_bounds()
    bx0, by0, bx1, by1 = b.geo_bounds()
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


def align_class_ids(image: GeoRaster, landcover: GeoRaster) -> np.ndarray:
    """Nearest-neighbor land-cover class id per image pixel.

    Each image pixel center is mapped to geo space and looked up in the
    land-cover grid; ids are categorical, so nearest-neighbor is the only
    label-preserving resampling.  Image pixels outside the land-cover
    footprint get -1.  Rasters must share a crs tag.
    """
    if image.crs_tag != landcover.crs_tag:
        raise CrsMismatchError(
            f"crs mismatch: {image.crs_tag!r} vs {landcover.crs_tag!r}"
        )
    if not rasters_overlap(image, landcover):
        raise NoOverlapError("image and land-cover rasters do not overlap")

    cols = np.arange(image.width, dtype=np.float64) + 0.5
    rows = np.arange(image.height, dtype=np.float64) + 0.5
    cgrid, rgrid = np.meshgrid(cols, rows)
    xs, ys = pixel_to_geo_arrays(image, cgrid, rgrid)
    lc_cols, lc_rows, inside = geo_to_pixel_arrays(landcover, xs, ys)

    out = np.full((image.height, image.width), -1, dtype=np.int64)
    lc = landcover.data[:, :, 0]
    out[inside] = lc[lc_rows[inside], lc_cols[inside]]
    return out


# alias used by natural_sampler for windowed histograms on aligned grids
histogram_from_ids = _histogram_from_ids
