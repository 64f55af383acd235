# -*- coding: utf-8 -*-
"""Raster containers, loading, masking, decolorization and histogram equalization."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from earlock.earlock.exceptions import (
    DimensionMismatchError,
    EmptyMaskError,
    ImageDecodeError,
    ValidationError,
)
from earlock.earlock.utils import logger, throw

log = logger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
EQUALIZE_BINS = 256
SUPPORTED_SUFFIXES = (".png", ".ppm")


# ─── Containers ──────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ColorImage:
    """H×W×3 uint8 RGB raster, row-major."""
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            throw(f"ColorImage needs an H×W×3 array, got shape {px.shape}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            throw("ColorImage must have positive width and height")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255):
                throw("ColorImage channels must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def solid(cls, width: int, height: int, rgb) -> "ColorImage":
        return cls(np.broadcast_to(np.asarray(rgb, dtype=np.uint8), (height, width, 3)).copy())


@dataclass(frozen=True, eq=False)
class GrayImage:
    """H×W float64 intensities in [0, 1]."""
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] == 0 or px.shape[1] == 0:
            throw(f"GrayImage needs a non-empty H×W array, got shape {px.shape}")
        if np.any(px < 0.0) or np.any(px > 1.0) or not np.all(np.isfinite(px)):
            throw("GrayImage intensities must lie in [0, 1]")
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True, eq=False)
class Mask:
    """H×W boolean crop marker; True means inside the ear region."""
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            throw(f"Mask needs an H×W array, got shape {bits.shape}")
        bits = np.ascontiguousarray(bits)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @classmethod
    def full(cls, width: int, height: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))


# ─── Loading / saving ────────────────────────────────────────────────────────

def _open_raster(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        throw(f"Image not found: {path}", ImageDecodeError)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        throw(f"Unsupported raster format {path.suffix!r} for {path}", ImageDecodeError)
    try:
        raster = Image.open(path)
        raster.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        throw(f"Cannot decode {path}: {e}", ImageDecodeError)
    if raster.width == 0 or raster.height == 0:
        throw(f"Zero-dimension image: {path}", ImageDecodeError)
    return raster


def load_image(path) -> ColorImage:
    """Decode a PNG or binary PPM (P6) file into a ColorImage."""
    raster = _open_raster(path)
    log.debug("Loaded %s (%dx%d, mode %s)", path, raster.width, raster.height, raster.mode)
    return ColorImage(np.asarray(raster.convert("RGB"), dtype=np.uint8))


def load_mask(path, expected: ColorImage | None = None) -> Mask:
    """Read a mask raster; white (>= 128 luminance) marks in-crop pixels."""
    raster = _open_raster(path)
    mask = Mask(np.asarray(raster.convert("L")) >= 128)
    if expected is not None and (mask.width, mask.height) != (expected.width, expected.height):
        throw(f"Mask {path} is {mask.width}x{mask.height}, image is "
              f"{expected.width}x{expected.height}", DimensionMismatchError)
    return mask


def save_image(img, path) -> Path:
    """Write a ColorImage, GrayImage or Mask; the suffix picks PNG or PPM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(img, ColorImage):
        raster = Image.fromarray(np.asarray(img.pixels, dtype=np.uint8))
    elif isinstance(img, GrayImage):
        raster = Image.fromarray(np.round(img.pixels * 255.0).astype(np.uint8))
    elif isinstance(img, Mask):
        raster = Image.fromarray(img.bits.astype(np.uint8) * 255)
    else:
        throw(f"Cannot save object of type {type(img).__name__}")
    if path.suffix.lower() == ".ppm":
        raster.convert("RGB").save(path, format="PPM")
    else:
        raster.save(path, format="PNG")
    return path


# ─── Pixel operations ────────────────────────────────────────────────────────

def check_same_shape(img, mask: Mask):
    if (img.width, img.height) != (mask.width, mask.height):
        throw(f"Mask is {mask.width}x{mask.height} but image is {img.width}x{img.height}",
              DimensionMismatchError)


def mask_box(mask: Mask):
    """Inclusive bounding box (x0, y0, x1, y1) of the set bits."""
    ys, xs = np.nonzero(mask.bits)
    if xs.size == 0:
        throw("Mask selects no pixels", EmptyMaskError)
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def apply_mask(img: ColorImage, m: Mask) -> np.ndarray:
    """Return the (n, 3) in-mask pixels in row-major order."""
    check_same_shape(img, m)
    selected = img.pixels[m.bits]
    if selected.shape[0] == 0:
        throw("Mask selects no pixels", EmptyMaskError)
    return selected


def decolorize(img: ColorImage, contrast_enhance: bool = False) -> GrayImage:
    """Luminance conversion with the 0.299/0.587/0.114 weights.

    ``contrast_enhance`` stretches the resulting luminance to the full [0, 1]
    range, which keeps the mapping monotone for achromatic inputs.
    """
    luma = (img.pixels.astype(np.float64) @ LUMA_WEIGHTS) / 255.0
    luma = np.clip(luma, 0.0, 1.0)
    if contrast_enhance:
        lo, hi = float(luma.min()), float(luma.max())
        if hi > lo:
            luma = (luma - lo) / (hi - lo)
    return GrayImage(luma)


def _bin_index(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values * EQUALIZE_BINS), 0, EQUALIZE_BINS - 1).astype(np.intp)


def histogram_equalize(img: GrayImage, support: Mask | None = None) -> GrayImage:
    """Map every intensity to the empirical CDF of its 256-bin level.

    When ``support`` is given only its pixels shape the histogram; pixels
    outside it are mapped to 0 so zeroed slice borders stay dark.
    """
    bins = _bin_index(img.pixels)
    if support is not None:
        check_same_shape(img, support)
        counted = bins[support.bits]
    else:
        counted = bins.ravel()
    if counted.size == 0:
        throw("Cannot equalize an empty support", EmptyMaskError)
    hist = np.bincount(counted, minlength=EQUALIZE_BINS).astype(np.float64)
    cdf = np.cumsum(hist) / counted.size
    out = cdf[bins]
    if support is not None:
        out = np.where(support.bits, out, 0.0)
    return GrayImage(np.clip(out, 0.0, 1.0))


def crop(img, box):
    """Crop to the inclusive box (x0, y0, x1, y1)."""
    x0, y0, x1, y1 = box
    if not (0 <= x0 <= x1 < img.width and 0 <= y0 <= y1 < img.height):
        throw(f"Crop box {box} outside {img.width}x{img.height} image")
    if isinstance(img, Mask):
        return Mask(img.bits[y0:y1 + 1, x0:x1 + 1])
    return type(img)(img.pixels[y0:y1 + 1, x0:x1 + 1])


def downsample(img: ColorImage, factor: int = 2) -> ColorImage:
    """Box-filter downsampling by an integer factor."""
    if factor < 1:
        throw("Downsampling factor must be >= 1", ValidationError)
    h = img.height // factor * factor
    w = img.width // factor * factor
    if h == 0 or w == 0:
        throw("Image too small to downsample", ValidationError)
    blocks = img.pixels[:h, :w].astype(np.float64).reshape(h // factor, factor, w // factor, factor, 3)
    return ColorImage(np.round(blocks.mean(axis=(1, 3))).astype(np.uint8))
