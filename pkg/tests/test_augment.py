"""View-pair augmentation primitives."""

import numpy as np
import pytest

from rsforge.errors import ImageTooSmallError
from rsforge.ssl_core import (
    AugmentationSpec,
    augment_pair,
    resize_bilinear,
    to_float_image,
)


def test_to_float_scales_uint8():
    img = np.array([[[0, 128, 255]]], dtype=np.uint8)
    out = to_float_image(img)
    np.testing.assert_allclose(out[0, 0], [0.0, 128 / 255, 1.0])
    assert out.dtype == np.float64


def test_to_float_clips_floats():
    img = np.full((2, 2, 3), 1.7)
    assert to_float_image(img).max() == 1.0
    img = np.full((2, 2, 3), -0.3)
    assert to_float_image(img).min() == 0.0


def test_to_float_rejects_wrong_shape():
    with pytest.raises(ValueError):
        to_float_image(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        to_float_image(np.zeros((4, 4, 1)))


def test_resize_identity_is_exact():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, (7, 7, 3))
    out = resize_bilinear(img, 7)
    np.testing.assert_array_equal(out, img)
    assert out is not img


def test_resize_constant_stays_constant():
    img = np.full((5, 5, 3), 0.37)
    np.testing.assert_allclose(resize_bilinear(img, 12), 0.37, atol=1e-12)
    np.testing.assert_allclose(resize_bilinear(img, 3), 0.37, atol=1e-12)


def test_resize_downsample_2x_averages():
    # 2x2 -> 1x1 with half-pixel centers lands exactly between the four
    img = np.zeros((2, 2, 1))
    img[0, 0] = 1.0
    out = resize_bilinear(img, 1)
    np.testing.assert_allclose(out[0, 0, 0], 0.25)


def test_resize_preserves_range():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 1, (9, 9, 3))
    for side in (4, 17):
        out = resize_bilinear(img, side)
        assert out.min() >= img.min() - 1e-12
        assert out.max() <= img.max() + 1e-12


def test_spec_validation():
    with pytest.raises(ValueError):
        AugmentationSpec(out_side=4)
    with pytest.raises(ValueError):
        AugmentationSpec(crop_scale=(0.0, 1.0))
    with pytest.raises(ValueError):
        AugmentationSpec(crop_scale=(0.8, 0.2))
    with pytest.raises(ValueError):
        AugmentationSpec(hflip_prob=1.5)
    with pytest.raises(ValueError):
        AugmentationSpec(color_jitter=(0.4, 0.4))
    with pytest.raises(ValueError):
        AugmentationSpec(blur_sigma=(0.0, 1.0))


def test_pair_shapes_and_range():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (48, 48, 3), dtype=np.uint8)
    spec = AugmentationSpec(out_side=16)
    v1, v2 = augment_pair(img, spec, np.random.default_rng(0))
    for v in (v1, v2):
        assert v.shape == (3, 16, 16)
        assert v.dtype == np.float64
        assert 0.0 <= v.min() and v.max() <= 1.0
    assert not np.array_equal(v1, v2)  # independent randomness


def test_pair_deterministic_in_rng():
    img = np.random.default_rng(4).integers(0, 256, (40, 40, 3), dtype=np.uint8)
    spec = AugmentationSpec(out_side=16)
    a1, a2 = augment_pair(img, spec, np.random.default_rng(123))
    b1, b2 = augment_pair(img, spec, np.random.default_rng(123))
    np.testing.assert_array_equal(a1, b1)
    np.testing.assert_array_equal(a2, b2)


def test_pair_rejects_small_images():
    img = np.zeros((20, 20, 3), dtype=np.uint8)
    # min crop of a 20px side at scale 0.25 is 10px < 16px target
    spec = AugmentationSpec(out_side=16, crop_scale=(0.25, 1.0))
    with pytest.raises(ImageTooSmallError):
        augment_pair(img, spec, np.random.default_rng(0))
    # full-frame crops are fine at any size >= out_side
    ok = AugmentationSpec(out_side=16, crop_scale=(1.0, 1.0))
    augment_pair(img, ok, np.random.default_rng(0))


def test_identity_spec_keeps_content():
    rng = np.random.default_rng(5)
    img = rng.uniform(0, 1, (16, 16, 3))
    spec = AugmentationSpec(
        out_side=16, crop_scale=(1.0, 1.0), hflip_prob=0.0, vflip_prob=0.0,
        color_jitter=(0.0, 0.0, 0.0), blur_prob=0.0,
    )
    v1, v2 = augment_pair(img, spec, np.random.default_rng(0))
    np.testing.assert_allclose(v1, img.transpose(2, 0, 1), atol=1e-12)
    np.testing.assert_array_equal(v1, v2)
