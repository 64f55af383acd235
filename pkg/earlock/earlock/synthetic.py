# -*- coding: utf-8 -*-
"""Seeded synthetic "ears": per-subject colour zones and skin texture, per-instance jitter.

Every instance of a subject carries the same ear pixels. The default jitter
moves the ear inside the frame and redraws the background noise. Sensor noise
and rotation on the ear itself are opt-in.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, rotate

from earlock import hooks
from earlock.earlock.imaging import ColorImage, GrayImage, Mask, save_image
from earlock.earlock.utils import logger, throw

log = logger(__name__)

PALETTE_SIZE = 3
MIN_PALETTE_DISTANCE = 100.0
PALETTE_RANGE = (60.0, 195.0)
SKIN_SCALES = (2.0, 4.0)
SKIN_AMPLITUDE = 12.0           # colour units per standard deviation of the skin field
GRAIN_SIGMA = 2.0
TEXTURE_BLOBS = 50
BLOB_SIGMA = (2.2, 4.5)
BLOB_AMPLITUDE = (0.7, 1.0)
EAR_FILL = 0.42
MAX_SHIFT = 6
BACKGROUND = (24, 24, 24)
BACKGROUND_NOISE = 6.0
DEFAULT_SIZE = (128, 160)


# ─── Patterns ────────────────────────────────────────────────────────────────

def subject_palette(rng: np.random.Generator, size: int = PALETTE_SIZE,
                    min_distance: float = MIN_PALETTE_DISTANCE) -> np.ndarray:
    """``size`` RGB colours at least ``min_distance`` apart."""
    lo, hi = PALETTE_RANGE
    colours = []
    for _ in range(10_000):
        c = rng.uniform(lo, hi, 3)
        if all(np.linalg.norm(c - o) >= min_distance for o in colours):
            colours.append(c)
            if len(colours) == size:
                return np.array(colours)
    throw(f"Could not draw {size} colours {min_distance} apart")


def blob_field(rng: np.random.Generator, width: int, height: int, blobs: int = TEXTURE_BLOBS,
               sigma=BLOB_SIGMA, amplitude=BLOB_AMPLITUDE) -> np.ndarray:
    """Sum of Gaussian blobs with random sign; each blob peaks at |a| in ``amplitude``."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    field = np.zeros((height, width))
    for _ in range(blobs):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        s = rng.uniform(*sigma)
        a = rng.uniform(*amplitude) * rng.choice((-1.0, 1.0))
        field += a * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s ** 2))
    return field


def synthetic_texture(seed: int, width: int = 128, height: int = 128,
                      blobs: int = TEXTURE_BLOBS) -> GrayImage:
    """Gray blob texture in [0, 1], handy for keypoint experiments."""
    field = blob_field(np.random.default_rng(seed), width, height, blobs)
    return GrayImage(np.clip(0.5 + 0.5 * field, 0.0, 1.0))


def skin_field(rng: np.random.Generator, width: int, height: int, scales=SKIN_SCALES) -> np.ndarray:
    """Zero-mean, unit-variance Gaussian random field mixing a few correlation lengths."""
    field = np.zeros((height, width))
    for s in scales:
        layer = gaussian_filter(rng.standard_normal((height, width)), sigma=s, mode="reflect")
        field += layer / layer.std()
    return (field - field.mean()) / field.std()


def zone_map(rng: np.random.Generator, width: int, height: int, zones: int = PALETTE_SIZE) -> np.ndarray:
    """Zone index per pixel from quantiles of a smooth random field."""
    field = gaussian_filter(rng.standard_normal((height, width)), sigma=max(height, width) / 8.0)
    edges = np.quantile(field, np.linspace(0, 1, zones + 1)[1:-1])
    return np.digitize(field, edges)


def ellipse_mask(width: int, height: int, fill: float = EAR_FILL) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    return ((xx - cx) / (fill * width)) ** 2 + ((yy - cy) / (fill * height)) ** 2 <= 1.0


def subject_pattern(seed: int, index: int, width: int, height: int):
    """The 8-bit ear image and mask of one subject, before any jitter."""
    rng = np.random.default_rng([seed, index])
    palette = subject_palette(rng)
    zones = zone_map(rng, width, height)
    skin = skin_field(rng, width, height)
    grain = rng.normal(0.0, GRAIN_SIGMA, (height, width, 3))
    pixels = palette[zones] + SKIN_AMPLITUDE * skin[..., None] + grain
    mask = ellipse_mask(width, height)
    pixels[~mask] = BACKGROUND
    return np.clip(np.round(pixels), 0, 255).astype(np.uint8), mask


# ─── Instances ───────────────────────────────────────────────────────────────

def _shift(rng: np.random.Generator, mask: np.ndarray, max_shift: int):
    """Integer (dx, dy) that keeps the whole ear inside the frame."""
    ys, xs = np.nonzero(mask)
    if not xs.size or max_shift <= 0:
        return 0, 0
    h, w = mask.shape
    dx = rng.integers(max(-max_shift, -int(xs.min())), min(max_shift, w - 1 - int(xs.max())) + 1)
    dy = rng.integers(max(-max_shift, -int(ys.min())), min(max_shift, h - 1 - int(ys.max())) + 1)
    return int(dx), int(dy)


def jitter(pixels: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
           max_shift: int = MAX_SHIFT, max_rotation: float = 0.0, noise: float = 0.0,
           background_noise: float = BACKGROUND_NOISE):
    """Move the ear, optionally turn it and add sensor noise, then redraw the background."""
    dx, dy = _shift(rng, mask, max_shift)
    out = np.roll(pixels, (dy, dx), axis=(0, 1)).astype(np.float64)
    mask = np.roll(mask, (dy, dx), axis=(0, 1))
    if max_rotation > 0:
        angle = rng.uniform(-max_rotation, max_rotation)
        out = rotate(out, angle, axes=(1, 0), reshape=False, order=1, mode="nearest")
        mask = rotate(mask.astype(np.float64), angle, axes=(1, 0), reshape=False,
                      order=1, mode="constant", cval=0.0) > 0.5
    if noise > 0:
        out[mask] += rng.normal(0.0, noise, (int(mask.sum()), 3))
    outside = ~mask
    out[outside] = np.asarray(BACKGROUND, dtype=np.float64) + rng.normal(
        0.0, background_noise, (int(outside.sum()), 3))
    return ColorImage(np.clip(np.round(out), 0, 255).astype(np.uint8)), Mask(mask)


def subject_instance(seed: int, index: int, instance: int, width: int = DEFAULT_SIZE[0],
                     height: int = DEFAULT_SIZE[1], max_shift: int = MAX_SHIFT,
                     max_rotation: float = 0.0, noise: float = 0.0):
    pixels, mask = subject_pattern(seed, index, width, height)
    rng = np.random.default_rng([seed, index, instance])
    return jitter(pixels, mask, rng, max_shift, max_rotation, noise)


def generate_dataset(root, subjects: int = 20, seed: int = 0, width: int = DEFAULT_SIZE[0],
                     height: int = DEFAULT_SIZE[1], probes: int = 1, prefix: str = "subject",
                     first_index: int = 0, max_rotation: float = 0.0, noise: float = 0.0) -> list:
    """Write ``root/<subject>/ref/0.png`` and ``root/<subject>/probe/<n>.png`` with masks.

    ``first_index`` offsets the pattern seeds so a calibration set drawn with
    the same seed still holds different subjects.
    """
    if subjects < 1 or probes < 0:
        throw("Need at least one subject and a non-negative probe count")
    root = Path(root)
    ref_split, probe_split = hooks.dataset_splits
    written = []
    for n in range(subjects):
        index = first_index + n
        subject_dir = root / f"{prefix}{index:03d}"
        instances = [(ref_split, "0", 0)] + [(probe_split, str(p + 1), p + 1) for p in range(probes)]
        for split, stem, instance in instances:
            img, mask = subject_instance(seed, index, instance, width, height,
                                         max_rotation=max_rotation, noise=noise)
            image_path = subject_dir / split / f"{stem}.png"
            save_image(img, image_path)
            save_image(mask, subject_dir / split / f"{stem}{hooks.mask_suffix}")
            written.append(image_path)
    log.info("Generated %d subjects (%d images) under %s", subjects, len(written), root)
    return written
