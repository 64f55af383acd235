# -*- coding: utf-8 -*-
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from earlock.earlock.exceptions import (
    DimensionMismatchError,
    EmptyMaskError,
    ImageDecodeError,
    ValidationError,
)
from earlock.earlock.imaging import (
    ColorImage,
    GrayImage,
    Mask,
    apply_mask,
    check_same_shape,
    crop,
    decolorize,
    downsample,
    histogram_equalize,
    load_image,
    load_mask,
    mask_box,
    save_image,
)


def test_load_solid_red_png(tmp_path):
    path = tmp_path / "red.png"
    Image.new("RGB", (2, 2), (255, 0, 0)).save(path)
    img = load_image(path)
    assert (img.width, img.height) == (2, 2)
    assert np.all(img.pixels == np.array([255, 0, 0], dtype=np.uint8))


def test_load_ppm_and_pixel_count(tmp_path):
    path = tmp_path / "ear.ppm"
    Image.new("RGB", (200, 240), (10, 20, 30)).save(path, format="PPM")
    img = load_image(path)
    assert img.pixels.shape == (240, 200, 3)
    assert img.width * img.height == 48000


def test_save_then_load_keeps_pixels(tmp_path, rng):
    img = ColorImage(rng.integers(0, 256, (7, 5, 3), dtype=np.uint8))
    for name in ("a.png", "b.ppm"):
        assert np.array_equal(load_image(save_image(img, tmp_path / name)).pixels, img.pixels)


def test_truncated_file_is_a_decode_error(tmp_path):
    path = tmp_path / "broken.png"
    Image.new("RGB", (16, 16), (1, 2, 3)).save(path)
    path.write_bytes(path.read_bytes()[:20])
    with pytest.raises(ImageDecodeError):
        load_image(path)


def test_missing_and_unsupported_files(tmp_path):
    with pytest.raises(ImageDecodeError):
        load_image(tmp_path / "nope.png")
    other = tmp_path / "ear.jpg"
    other.write_bytes(b"not really")
    with pytest.raises(ImageDecodeError):
        load_image(other)


def test_load_mask_threshold_and_size_check(tmp_path):
    bits = np.array([[0, 255], [127, 128]], dtype=np.uint8)
    path = tmp_path / "m.mask.png"
    Image.fromarray(bits).save(path)
    mask = load_mask(path)
    assert mask.bits.tolist() == [[False, True], [False, True]]
    with pytest.raises(DimensionMismatchError):
        load_mask(path, expected=ColorImage.solid(3, 2, (0, 0, 0)))


def test_apply_mask_row_major_order():
    px = np.arange(12, dtype=np.uint8).reshape(2, 2, 3)
    img = ColorImage(px)
    assert apply_mask(img, Mask.full(2, 2)).shape == (4, 3)
    checker = Mask(np.array([[True, False], [False, True]]))
    selected = apply_mask(img, checker)
    assert selected.tolist() == [[0, 1, 2], [9, 10, 11]]


def test_apply_mask_errors():
    img = ColorImage.solid(2, 2, (5, 5, 5))
    with pytest.raises(EmptyMaskError):
        apply_mask(img, Mask(np.zeros((2, 2), bool)))
    with pytest.raises(DimensionMismatchError):
        apply_mask(img, Mask.full(3, 2))


def test_mask_box_and_shape_check():
    bits = np.zeros((5, 7), bool)
    bits[1:3, 2:6] = True
    assert mask_box(Mask(bits)) == (2, 1, 5, 2)
    with pytest.raises(EmptyMaskError):
        mask_box(Mask(np.zeros((5, 7), bool)))
    with pytest.raises(DimensionMismatchError):
        check_same_shape(ColorImage.solid(7, 4, (1, 2, 3)), Mask(bits))


def test_decolorize_luminance():
    assert np.allclose(decolorize(ColorImage.solid(3, 3, (255, 255, 255))).pixels, 1.0)
    assert np.allclose(decolorize(ColorImage.solid(3, 3, (0, 0, 0))).pixels, 0.0)
    red = decolorize(ColorImage.solid(1, 1, (255, 0, 0))).pixels[0, 0]
    blue = decolorize(ColorImage.solid(1, 1, (0, 0, 255))).pixels[0, 0]
    assert red == pytest.approx(0.299)
    assert red > blue


def test_decolorize_monotone_for_gray_levels():
    levels = np.arange(0, 256, 15, dtype=np.uint8)
    px = np.repeat(levels[None, :, None], 3, axis=2)
    gray = decolorize(ColorImage(px), contrast_enhance=True).pixels[0]
    assert np.all(np.diff(gray) > 0)
    assert gray[0] == 0.0 and gray[-1] == 1.0


channel = st.integers(min_value=0, max_value=255)


@settings(max_examples=60, deadline=None)
@given(st.tuples(channel, channel, channel), st.tuples(channel, channel, channel),
       st.tuples(channel, channel, channel), st.booleans())
def test_decolorize_respects_channel_dominance(low, lift, other, contrast_enhance):
    high = tuple(min(255, a + b) for a, b in zip(low, lift))
    px = np.array([[low, high, other]], dtype=np.uint8)
    gray = decolorize(ColorImage(px), contrast_enhance=contrast_enhance).pixels[0]
    assert gray[1] >= gray[0]


@pytest.mark.parametrize("with_support", [False, True])
def test_equalize_is_idempotent_within_a_bin(rng, with_support):
    img = GrayImage(rng.beta(2.0, 5.0, (48, 40)))
    support = Mask(rng.random((48, 40)) < 0.7) if with_support else None
    once = histogram_equalize(img, support=support)
    twice = histogram_equalize(once, support=support)
    assert np.max(np.abs(twice.pixels - once.pixels)) <= 1.0 / 256 + 1e-12


def test_equalize_two_levels():
    px = np.full((4, 4), 0.2)
    px[2:] = 0.8
    out = histogram_equalize(GrayImage(px)).pixels
    assert np.allclose(out[:2], 0.5)
    assert np.allclose(out[2:], 1.0)


def test_equalize_constant_image_stays_constant():
    out = histogram_equalize(GrayImage(np.full((5, 6), 0.3))).pixels
    assert np.all(out == out[0, 0])


def test_equalize_ramp_is_preserved():
    ramp = GrayImage(np.arange(256, dtype=np.float64)[None, :] / 255.0)
    out = histogram_equalize(ramp).pixels
    assert np.max(np.abs(out - ramp.pixels)) <= 1.0 / 256 + 1e-12
    assert np.all(np.diff(out[0]) >= 0)


def test_equalize_with_support_zeroes_outside():
    px = np.full((2, 4), 0.9)
    px[:, :2] = 0.1
    support = Mask(np.array([[True, True, True, False]] * 2))
    out = histogram_equalize(GrayImage(px), support=support).pixels
    assert np.all(out[:, 3] == 0.0)
    assert out[0, 0] == pytest.approx(4 / 6)
    assert out[0, 2] == pytest.approx(1.0)


def test_crop_and_downsample():
    px = np.zeros((4, 6, 3), dtype=np.uint8)
    px[:2, :2] = 200
    img = ColorImage(px)
    assert crop(img, (1, 1, 3, 2)).pixels.shape == (2, 3, 3)
    half = downsample(img, 2)
    assert half.pixels.shape == (2, 3, 3)
    assert half.pixels[0, 0, 0] == 200 and half.pixels[1, 2, 0] == 0
    with pytest.raises(ValidationError):
        crop(img, (0, 0, 6, 1))


def test_containers_reject_bad_arrays():
    with pytest.raises(ValidationError):
        GrayImage(np.full((2, 2), 1.5))
    with pytest.raises(ValidationError):
        ColorImage(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ColorImage.solid(2, 2, (0, 0, 0)).pixels[0, 0, 0] = 1
