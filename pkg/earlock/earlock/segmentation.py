# -*- coding: utf-8 -*-
"""Pixel classification by mixture component, slice-region extraction and slice correspondence."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from earlock.earlock.divergence import symmetric_gaussian_kl
from earlock.earlock.exceptions import DimensionMismatchError, SegmentationError
from earlock.earlock.gmm import GMM, Gaussian
from earlock.earlock.imaging import (
    ColorImage,
    GrayImage,
    Mask,
    check_same_shape,
    decolorize,
    histogram_equalize,
    save_image,
)
from earlock.earlock.utils import logger, throw

log = logger(__name__)

SENTINEL = -1
MIN_SLICE_PIXELS = 64


@dataclass(frozen=True, eq=False)
class LabelMap:
    labels: np.ndarray          # H×W, component index or SENTINEL
    component_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 2:
            throw(f"LabelMap needs an H×W array, got shape {labels.shape}")
        inside = labels[labels != SENTINEL]
        if inside.size and (inside.min() < 0 or inside.max() >= self.component_count):
            throw(f"Labels must lie in [0, {self.component_count}) or be SENTINEL")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True, eq=False)
class SliceRegion:
    component_index: int
    pixel_coords: np.ndarray    # (n, 2) of (x, y) in full-image frame
    bounding_box: tuple         # inclusive (x0, y0, x1, y1)
    color_patch: ColorImage
    gray_patch: GrayImage
    support: Mask               # region pixels inside the bounding box

    @property
    def pixel_count(self) -> int:
        return int(self.pixel_coords.shape[0])

    @property
    def offset(self) -> tuple:
        return self.bounding_box[0], self.bounding_box[1]


# ─── Classification ──────────────────────────────────────────────────────────

def component_log_scores(model: GMM, pixels, weight_scale: float = 1.0) -> np.ndarray:
    """(n, k) of log(c·Pᵢ) + log f(x|i); the argmax does not depend on ``weight_scale``."""
    if not weight_scale > 0:
        throw("weight_scale must be positive")
    return model.component_logpdf(pixels) + np.log(weight_scale)


def assign_pixels(model: GMM, img: ColorImage, mask: Mask, weight_scale: float = 1.0) -> LabelMap:
    """Label each in-mask pixel with argmaxᵢ c·Pᵢ·f(x|i); lowest index wins ties."""
    check_same_shape(img, mask)
    labels = np.full((img.height, img.width), SENTINEL, dtype=np.int64)
    if mask.bits.any():
        pixels = img.pixels[mask.bits].astype(np.float64)
        labels[mask.bits] = np.argmax(component_log_scores(model, pixels, weight_scale), axis=1)
    return LabelMap(labels, model.k)


# ─── Slice regions ───────────────────────────────────────────────────────────

def _slice_for(index: int, where: np.ndarray, img: ColorImage, contrast_enhance: bool) -> SliceRegion:
    ys, xs = np.nonzero(where)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    support = where[y0:y1 + 1, x0:x1 + 1]
    patch = img.pixels[y0:y1 + 1, x0:x1 + 1].copy()
    patch[~support] = 0
    color_patch = ColorImage(patch)
    support_mask = Mask(support)
    gray = histogram_equalize(decolorize(color_patch, contrast_enhance), support=support_mask)
    return SliceRegion(
        component_index=index,
        pixel_coords=np.column_stack([xs, ys]),
        bounding_box=(x0, y0, x1, y1),
        color_patch=color_patch,
        gray_patch=gray,
        support=support_mask,
    )


def extract_slices(labels: LabelMap, img: ColorImage, min_slice_pixels: int = MIN_SLICE_PIXELS,
                   contrast_enhance: bool = False) -> list:
    """One SliceRegion per component with at least ``min_slice_pixels`` pixels, by index."""
    if (img.width, img.height) != (labels.width, labels.height):
        throw("LabelMap does not cover the image", DimensionMismatchError)
    slices = []
    for index in range(labels.component_count):
        where = labels.labels == index
        count = int(where.sum())
        if count == 0:
            continue
        if count < min_slice_pixels:
            log.debug("Dropping slice %d: %d pixels < %d", index, count, min_slice_pixels)
            continue
        slices.append(_slice_for(index, where, img, contrast_enhance))
    if not slices:
        throw(f"No slice region reaches {min_slice_pixels} pixels", SegmentationError)
    return slices


def dump_slices(slices: Sequence[SliceRegion], directory, subject: str, instance: str) -> list:
    """Write color and gray patches as ``{subject}_{instance}_slice{index}[_gray].png``."""
    written = []
    for s in slices:
        stem = f"{subject}_{instance}_slice{s.component_index}"
        written.append(save_image(s.color_patch, f"{directory}/{stem}.png"))
        written.append(save_image(s.gray_patch, f"{directory}/{stem}_gray.png"))
    return written


# ─── Correspondence ──────────────────────────────────────────────────────────

class Correspondence(NamedTuple):
    pairs: list                 # (ref index, probe index)
    costs: list
    unmatched_ref: list
    unmatched_probe: list

    @property
    def total_cost(self) -> float:
        return float(sum(self.costs))


def correspond_slices(ref: Sequence[tuple], probe: Sequence[tuple]) -> Correspondence:
    """Greedy minimum-cost pairing on symmetrized Gaussian K-L.

    ``ref`` and ``probe`` hold (slice, Gaussian) pairs; the slice element is
    only carried along so callers can index back into their own lists.
    """
    ref_g = [_gaussian_of(item) for item in ref]
    probe_g = [_gaussian_of(item) for item in probe]
    if not ref_g or not probe_g:
        throw("Slice correspondence needs non-empty slice lists")
    cost = np.array([[symmetric_gaussian_kl(a, b) for b in probe_g] for a in ref_g])
    order = sorted(((cost[i, j], i, j) for i in range(len(ref_g)) for j in range(len(probe_g))))
    used_ref, used_probe = set(), set()
    pairs, costs = [], []
    for c, i, j in order:
        if i in used_ref or j in used_probe:
            continue
        used_ref.add(i)
        used_probe.add(j)
        pairs.append((i, j))
        costs.append(float(c))
    ordered = sorted(zip(pairs, costs))
    return Correspondence(
        pairs=[p for p, _ in ordered],
        costs=[c for _, c in ordered],
        unmatched_ref=[i for i in range(len(ref_g)) if i not in used_ref],
        unmatched_probe=[j for j in range(len(probe_g)) if j not in used_probe],
    )


def _gaussian_of(item) -> Gaussian:
    if isinstance(item, Gaussian):
        return item
    _, gaussian = item
    return gaussian
