"""Stochastic two-view augmentation chain for contrastive training.

Each view is an independent draw of crop -> resize -> flips -> color
distortion -> Gaussian blur, producing a (3, side, side) float64 array
in [0, 1].  All randomness comes from the generator handed in, so a
fixed seed gives bit-identical views.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import ImageTooSmallError


@dataclass(frozen=True)
class AugmentationSpec:
    out_side: int = 32
    crop_scale: tuple = (0.2, 1.0)  # area fraction range of the random crop
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    color_jitter: tuple = (0.4, 0.4, 0.4)  # brightness, contrast, saturation
    blur_prob: float = 0.5
    blur_sigma: tuple = (0.1, 2.0)

    def __post_init__(self):
        if self.out_side < 8:
            raise ValueError(f"output side must be >= 8, got {self.out_side}")
        lo, hi = self.crop_scale
        if not (0.0 < lo <= hi <= 1.0):
            raise ValueError(f"crop scale must lie in (0, 1], got {self.crop_scale}")
        for name in ("hflip_prob", "vflip_prob", "blur_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if len(self.color_jitter) != 3 or any(s < 0 for s in self.color_jitter):
            raise ValueError("color_jitter needs three nonnegative factors")
        slo, shi = self.blur_sigma
        if not 0.0 < slo <= shi:
            raise ValueError(f"blur sigma range must be positive, got {self.blur_sigma}")


def to_float_image(img: np.ndarray) -> np.ndarray:
    """(H, W, 3) array to float64 in [0, 1]; uint8 is scaled by 255."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return np.clip(arr.astype(np.float64), 0.0, 1.0)


def resize_bilinear(img: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize of (H, W, C) to (side, side, C), half-pixel centers.

    Resizing to the input's own size is exactly the identity.
    """
    h, w = img.shape[:2]
    if h == side and w == side:
        return img.copy()

    def axis_coords(src: int, dst: int):
        scale = src / dst
        x = (np.arange(dst) + 0.5) * scale - 0.5
        x = np.clip(x, 0.0, src - 1.0)
        lo = np.floor(x).astype(np.intp)
        hi = np.minimum(lo + 1, src - 1)
        frac = x - lo
        return lo, hi, frac

    r0, r1, fr = axis_coords(h, side)
    c0, c1, fc = axis_coords(w, side)
    top = img[r0][:, c0] * (1 - fc)[None, :, None] + img[r0][:, c1] * fc[None, :, None]
    bot = img[r1][:, c0] * (1 - fc)[None, :, None] + img[r1][:, c1] * fc[None, :, None]
    return top * (1 - fr)[:, None, None] + bot * fr[:, None, None]


def _min_crop_side(img_side: int, scale_lo: float) -> int:
    return int(math.floor(math.sqrt(scale_lo) * img_side))


def _random_crop(img: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator):
    h, w = img.shape[:2]
    short = min(h, w)
    scale = rng.uniform(spec.crop_scale[0], spec.crop_scale[1])
    side = int(round(math.sqrt(scale) * short))
    side = max(spec.out_side, min(short, side))
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    return img[top : top + side, left : left + side]


def _color_distort(img: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator):
    sb, sc, ss = spec.color_jitter
    out = img
    if sb > 0:
        out = out * rng.uniform(max(0.0, 1.0 - sb), 1.0 + sb)
    if sc > 0:
        mean = out.mean()
        out = mean + (out - mean) * rng.uniform(max(0.0, 1.0 - sc), 1.0 + sc)
    if ss > 0:
        gray = out @ np.array([0.299, 0.587, 0.114])
        f = rng.uniform(max(0.0, 1.0 - ss), 1.0 + ss)
        out = gray[:, :, None] + (out - gray[:, :, None]) * f
    return np.clip(out, 0.0, 1.0)


def _one_view(img: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator):
    view = _random_crop(img, spec, rng)
    view = resize_bilinear(view, spec.out_side)
    if spec.hflip_prob > 0 and rng.random() < spec.hflip_prob:
        view = view[:, ::-1]
    if spec.vflip_prob > 0 and rng.random() < spec.vflip_prob:
        view = view[::-1]
    view = _color_distort(view, spec, rng)
    if spec.blur_prob > 0 and rng.random() < spec.blur_prob:
        sigma = rng.uniform(spec.blur_sigma[0], spec.blur_sigma[1])
        view = gaussian_filter(view, sigma=(sigma, sigma, 0), mode="nearest")
        view = np.clip(view, 0.0, 1.0)
    return np.ascontiguousarray(view.transpose(2, 0, 1))


def augment_pair(img: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator):
    """Two independent augmented views of one image, each (3, side, side)."""
    arr = to_float_image(img)
    short = min(arr.shape[0], arr.shape[1])
    if _min_crop_side(short, spec.crop_scale[0]) < spec.out_side:
        raise ImageTooSmallError(
            f"short side {short} cannot cover a {spec.out_side}px view at "
            f"minimum crop scale {spec.crop_scale[0]}"
        )
    return _one_view(arr, spec, rng), _one_view(arr, spec, rng)
