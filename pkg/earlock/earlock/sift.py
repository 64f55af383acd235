# -*- coding: utf-8 -*-
"""Scale-invariant keypoints: DoG scale space, extrema, localization, orientations, 128-element descriptors.

Coordinates follow the raster convention: x grows to the right, y grows
downwards, and orientations are measured from +x towards +y in [0, 2π).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter, minimum_filter, zoom

from earlock.earlock.exceptions import ImageTooSmallError
from earlock.earlock.imaging import GrayImage, Mask
from earlock.earlock.utils import logger, throw

log = logger(__name__)

DESCRIPTOR_LENGTH = 128
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SiftConfig:
    scales_per_octave: int = 3
    base_sigma: float = 1.6
    assumed_blur: float = 0.5
    upsample: bool = False
    contrast_threshold: float = 0.03
    edge_ratio: float = 10.0
    descriptor_clamp: float = 0.2
    image_border: int = 5
    min_image_size: int = 32
    min_octave_size: int = 8
    orientation_bins: int = 36
    orientation_peak_ratio: float = 0.8
    orientation_sigma_factor: float = 1.5
    descriptor_width: int = 4
    descriptor_bins: int = 8
    descriptor_scale: float = 3.0
    max_outside_fraction: float = 0.5
    max_interpolation_steps: int = 5

    def __post_init__(self):
        if self.scales_per_octave < 1:
            throw("scales_per_octave must be >= 1")
        if not self.base_sigma > 0 or self.assumed_blur < 0:
            throw("base_sigma must be > 0 and assumed_blur >= 0")
        if not self.contrast_threshold > 0 or not self.edge_ratio > 1:
            throw("contrast_threshold must be > 0 and edge_ratio > 1")
        if not 0 < self.descriptor_clamp <= 1:
            throw("descriptor_clamp must lie in (0, 1]")
        if not 0 <= self.max_outside_fraction <= 1:
            throw("max_outside_fraction must lie in [0, 1]")
        if self.min_image_size < 2 * self.min_octave_size:
            throw("min_image_size must allow at least two octaves")

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.scales_per_octave)


# ─── Scale space ─────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ScaleSpace:
    octaves: list               # per octave: (S+3, h, w) Gaussian stack
    dog: list                   # per octave: (S+2, h, w) difference stack
    magnitude: list             # per octave: gradient magnitude of every blur layer
    orientation: list           # per octave: gradient direction in [0, 2π)
    scales_per_octave: int
    base_sigma: float
    upsampled: bool
    width: int
    height: int

    @property
    def octave_count(self) -> int:
        return len(self.octaves)

    def octave_factor(self, octave: int) -> float:
        """Input-image pixels per octave pixel."""
        return 2.0 ** octave / (2.0 if self.upsampled else 1.0)


def blur_schedule(config: SiftConfig):
    """(absolute σ per layer, incremental σ applied to reach it) within one octave."""
    count = config.scales_per_octave + 3
    absolute = np.array([config.base_sigma * config.k ** s for s in range(count)])
    increments = np.zeros(count)
    increments[0] = config.base_sigma
    increments[1:] = np.sqrt(absolute[1:] ** 2 - absolute[:-1] ** 2)
    return absolute, increments


def octave_count_for(width: int, height: int, config: SiftConfig) -> int:
    side = min(width, height) * (2 if config.upsample else 1)
    return int(math.floor(math.log2(side))) - int(math.log2(config.min_octave_size)) + 1


def _gradients(stack: np.ndarray):
    padded = np.pad(stack, ((0, 0), (1, 1), (1, 1)), mode="edge")
    dx = padded[:, 1:-1, 2:] - padded[:, 1:-1, :-2]
    dy = padded[:, 2:, 1:-1] - padded[:, :-2, 1:-1]
    return np.hypot(dx, dy), np.mod(np.arctan2(dy, dx), TWO_PI)


def build_scale_space(img: GrayImage, config: SiftConfig | None = None) -> ScaleSpace:
    config = config or SiftConfig()
    if min(img.width, img.height) < config.min_image_size:
        throw(f"Image {img.width}x{img.height} is smaller than {config.min_image_size} px",
              ImageTooSmallError)
    base = np.asarray(img.pixels, dtype=np.float64)
    blur = config.assumed_blur
    if config.upsample:
        base = zoom(base, 2.0, order=1, mode="nearest")
        blur *= 2.0
    sigma_diff = math.sqrt(max(config.base_sigma ** 2 - blur ** 2, 0.01))
    base = gaussian_filter(base, sigma_diff, mode="nearest")

    _, increments = blur_schedule(config)
    count = octave_count_for(img.width, img.height, config)
    octaves, dogs, mags, oris = [], [], [], []
    for _ in range(count):
        layers = [base]
        for inc in increments[1:]:
            layers.append(gaussian_filter(layers[-1], inc, mode="nearest"))
        stack = np.stack(layers)
        octaves.append(stack)
        dogs.append(np.diff(stack, axis=0))
        mag, ori = _gradients(stack)
        mags.append(mag)
        oris.append(ori)
        # layer S carries twice the base blur: it seeds the next octave
        base = stack[config.scales_per_octave][::2, ::2]

    return ScaleSpace(
        octaves=octaves,
        dog=dogs,
        magnitude=mags,
        orientation=oris,
        scales_per_octave=config.scales_per_octave,
        base_sigma=config.base_sigma,
        upsampled=config.upsample,
        width=img.width,
        height=img.height,
    )


# ─── Extrema ─────────────────────────────────────────────────────────────────

class Candidate(NamedTuple):
    octave: int
    layer: int      # DoG layer index, 1..S
    x: int
    y: int


_NEIGHBOURS = np.ones((3, 3, 3), dtype=bool)
_NEIGHBOURS[1, 1, 1] = False


def detect_extrema(ss: ScaleSpace, config: SiftConfig | None = None) -> list:
    """Strict maxima/minima among the 26 scale-space neighbours above the contrast pre-threshold."""
    config = config or SiftConfig()
    threshold = 0.5 * config.contrast_threshold
    border = max(1, config.image_border)
    out = []
    for o, dog in enumerate(ss.dog):
        _, h, w = dog.shape
        if h <= 2 * border or w <= 2 * border:
            continue
        above = maximum_filter(dog, footprint=_NEIGHBOURS, mode="nearest")
        below = minimum_filter(dog, footprint=_NEIGHBOURS, mode="nearest")
        peaks = ((dog > above) | (dog < below)) & (np.abs(dog) > threshold)
        peaks[0] = peaks[-1] = False
        peaks[:, :border] = peaks[:, h - border:] = False
        peaks[:, :, :border] = peaks[:, :, w - border:] = False
        for layer, y, x in zip(*np.nonzero(peaks)):
            out.append(Candidate(o, int(layer), int(x), int(y)))
    return out


# ─── Localization ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Keypoint:
    octave: int
    layer: int
    x_oct: float
    y_oct: float
    sub_layer: float
    x: float
    y: float
    scale: float
    response: float
    factor: float = 1.0         # input pixels per octave pixel

    @property
    def octave_sigma(self) -> float:
        return self.scale / self.factor


def _derivatives(cube: np.ndarray):
    g = 0.5 * np.array([
        cube[1, 1, 2] - cube[1, 1, 0],
        cube[1, 2, 1] - cube[1, 0, 1],
        cube[2, 1, 1] - cube[0, 1, 1],
    ])
    c = cube[1, 1, 1]
    dxx = cube[1, 1, 2] - 2 * c + cube[1, 1, 0]
    dyy = cube[1, 2, 1] - 2 * c + cube[1, 0, 1]
    dss = cube[2, 1, 1] - 2 * c + cube[0, 1, 1]
    dxy = 0.25 * (cube[1, 2, 2] - cube[1, 2, 0] - cube[1, 0, 2] + cube[1, 0, 0])
    dxs = 0.25 * (cube[2, 1, 2] - cube[2, 1, 0] - cube[0, 1, 2] + cube[0, 1, 0])
    dys = 0.25 * (cube[2, 2, 1] - cube[2, 0, 1] - cube[0, 2, 1] + cube[0, 0, 1])
    hessian = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    return g, hessian


def passes_edge_test(hessian_xy: np.ndarray, edge_ratio: float) -> bool:
    """Principal-curvature ratio below ``edge_ratio``: tr²/det < (r+1)²/r with det > 0."""
    tr = hessian_xy[0, 0] + hessian_xy[1, 1]
    det = hessian_xy[0, 0] * hessian_xy[1, 1] - hessian_xy[0, 1] ** 2
    return bool(det > 0 and edge_ratio * tr * tr < (edge_ratio + 1) ** 2 * det)


def _localize(c: Candidate, ss: ScaleSpace, config: SiftConfig):
    dog = ss.dog[c.octave]
    _, h, w = dog.shape
    s_max = ss.scales_per_octave
    border = max(1, config.image_border)
    x, y, layer = c.x, c.y, c.layer
    for _ in range(config.max_interpolation_steps):
        cube = dog[layer - 1:layer + 2, y - 1:y + 2, x - 1:x + 2]
        g, hess = _derivatives(cube)
        try:
            offset = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(offset)):
            return None
        if np.all(np.abs(offset) < 0.5):
            break
        x += int(round(offset[0]))
        y += int(round(offset[1]))
        layer += int(round(offset[2]))
        if not (border <= x < w - border and border <= y < h - border and 1 <= layer <= s_max):
            return None
    else:
        return None

    value = cube[1, 1, 1] + 0.5 * float(g @ offset)
    if abs(value) < config.contrast_threshold:
        return None
    if not passes_edge_test(hess[:2, :2], config.edge_ratio):
        return None

    factor = ss.octave_factor(c.octave)
    x_oct, y_oct = x + offset[0], y + offset[1]
    fx, fy = x_oct * factor, y_oct * factor
    if not (0.0 <= fx <= ss.width - 1 and 0.0 <= fy <= ss.height - 1):
        return None
    sigma_oct = ss.base_sigma * 2.0 ** ((layer + offset[2]) / s_max)
    return Keypoint(
        octave=c.octave,
        layer=layer,
        x_oct=float(x_oct),
        y_oct=float(y_oct),
        sub_layer=float(offset[2]),
        x=float(fx),
        y=float(fy),
        scale=float(sigma_oct * factor),
        response=float(abs(value)),
        factor=factor,
    )


def localize_and_filter(candidates: Sequence[Candidate], ss: ScaleSpace,
                        config: SiftConfig | None = None) -> list:
    """Quadratic refinement plus contrast and edge-response rejection."""
    config = config or SiftConfig()
    seen = set()
    out = []
    for c in candidates:
        kp = _localize(c, ss, config)
        if kp is None:
            continue
        key = (kp.octave, kp.layer, round(kp.x_oct, 6), round(kp.y_oct, 6))
        if key in seen:
            continue
        seen.add(key)
        out.append(kp)
    log.debug("Localized %d of %d candidates", len(out), len(candidates))
    return out


# ─── Orientation ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class OrientedKeypoint:
    keypoint: Keypoint
    orientation: float


def _window(ss: ScaleSpace, kp: Keypoint, radius: int):
    h, w = ss.octaves[kp.octave].shape[1:]
    cx, cy = int(round(kp.x_oct)), int(round(kp.y_oct))
    dy, dx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    ys, xs = cy + dy, cx + dx
    inside = (ys >= 0) & (ys < h) & (xs >= 0) & (xs < w)
    return dx, dy, np.clip(xs, 0, w - 1), np.clip(ys, 0, h - 1), inside


def assign_orientations(kp: Keypoint, ss: ScaleSpace, config: SiftConfig | None = None) -> list:
    """Dominant gradient directions (36-bin histogram, peaks ≥ 80% of the maximum)."""
    config = config or SiftConfig()
    nbins = config.orientation_bins
    sigma = config.orientation_sigma_factor * kp.octave_sigma
    radius = max(1, int(round(3.0 * sigma)))
    dx, dy, xs, ys, inside = _window(ss, kp, radius)
    mag = ss.magnitude[kp.octave][kp.layer][ys, xs]
    ori = ss.orientation[kp.octave][kp.layer][ys, xs]
    weight = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) * mag * inside

    position = ori * nbins / TWO_PI
    lower = np.floor(position).astype(np.intp)
    frac = position - lower
    hist = np.bincount((lower % nbins).ravel(), (weight * (1 - frac)).ravel(), minlength=nbins)
    hist += np.bincount(((lower + 1) % nbins).ravel(), (weight * frac).ravel(), minlength=nbins)

    smooth = (6 * hist + 4 * (np.roll(hist, 1) + np.roll(hist, -1))
              + np.roll(hist, 2) + np.roll(hist, -2)) / 16.0
    peak = smooth.max()
    if peak <= 1e-12:
        return []
    left, right = np.roll(smooth, 1), np.roll(smooth, -1)
    out = []
    for b in np.flatnonzero((smooth > left) & (smooth > right)):
        if smooth[b] < config.orientation_peak_ratio * peak:
            continue
        denom = left[b] - 2 * smooth[b] + right[b]
        shift = 0.5 * (left[b] - right[b]) / denom if denom != 0 else 0.0
        angle = ((b + shift) % nbins) * TWO_PI / nbins
        if angle >= TWO_PI - 1e-12:
            angle = 0.0
        out.append(OrientedKeypoint(kp, float(angle)))
    return out


# ─── Descriptor ──────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SiftFeature:
    x: float
    y: float
    scale: float
    orientation: float
    descriptor: np.ndarray
    octave: int = 0
    layer: int = 0

    def __post_init__(self):
        d = np.asarray(self.descriptor, dtype=np.float64).ravel()
        if d.shape[0] != DESCRIPTOR_LENGTH:
            throw(f"Descriptor must have {DESCRIPTOR_LENGTH} elements, got {d.shape[0]}")
        d.flags.writeable = False
        object.__setattr__(self, "descriptor", d)

    def record(self) -> tuple:
        """Full-record identity used for set semantics."""
        return (self.x, self.y, self.scale, self.orientation, self.descriptor.tobytes())

    def sort_key(self) -> tuple:
        return (self.octave, self.layer, self.y, self.x, self.orientation)

    def translated(self, dx: float, dy: float) -> "SiftFeature":
        return replace(self, x=self.x + dx, y=self.y + dy)


def clamp_renormalize(v: np.ndarray, clamp: float):
    """Unit vector of the form min(a·v, clamp): the fixed point of clamp-then-renormalize.

    Returns None when fewer than 1/clamp² elements are non-zero, since no unit
    vector with that support fits under the clamp.
    """
    norm = np.linalg.norm(v)
    if norm <= 1e-12:
        return None
    v = v / norm
    if v.max() <= clamp:
        return v
    order = np.argsort(-v, kind="stable")
    ranked = v[order]
    tail = np.cumsum((ranked ** 2)[::-1])[::-1]      # Σ of squares from index t on
    for t in range(1, ranked.shape[0]):
        budget = 1.0 - t * clamp * clamp
        if budget <= 0 or tail[t] <= 0:
            return None
        a = math.sqrt(budget / tail[t])
        if a * ranked[t] <= clamp:
            out = np.minimum(a * v, clamp)
            return out / np.linalg.norm(out)
    return None


def _descriptor_samples(okp: OrientedKeypoint, ss: ScaleSpace, config: SiftConfig):
    kp = okp.keypoint
    width = config.descriptor_width
    hist_width = config.descriptor_scale * kp.octave_sigma
    radius = int(round(hist_width * math.sqrt(2) * (width + 1) * 0.5))
    h, w = ss.octaves[kp.octave].shape[1:]
    radius = max(1, min(radius, int(math.hypot(h, w))))
    dx, dy, xs, ys, inside = _window(ss, kp, radius)
    cos_t, sin_t = math.cos(okp.orientation), math.sin(okp.orientation)
    x_rot = (cos_t * dx + sin_t * dy) / hist_width
    y_rot = (-sin_t * dx + cos_t * dy) / hist_width
    row_bin = y_rot + 0.5 * width - 0.5
    col_bin = x_rot + 0.5 * width - 0.5
    keep = (row_bin > -1) & (row_bin < width) & (col_bin > -1) & (col_bin < width)
    return dx, dy, xs, ys, inside, x_rot, y_rot, row_bin, col_bin, keep


def compute_descriptor(okp: OrientedKeypoint, ss: ScaleSpace, config: SiftConfig | None = None,
                       support: Mask | None = None):
    """4×4 cells × 8 orientation bins around the keypoint, or None when the window is unusable."""
    config = config or SiftConfig()
    kp = okp.keypoint
    width, nbins = config.descriptor_width, config.descriptor_bins
    dx, dy, xs, ys, inside, x_rot, y_rot, row_bin, col_bin, keep = _descriptor_samples(okp, ss, config)
    n_keep = int(keep.sum())
    if n_keep == 0:
        return None

    outside = np.count_nonzero(keep & ~inside)
    if support is not None:
        factor = ss.octave_factor(kp.octave)
        sx = np.round((np.round(kp.x_oct) + dx) * factor).astype(np.intp)
        sy = np.round((np.round(kp.y_oct) + dy) * factor).astype(np.intp)
        on_image = (sx >= 0) & (sx < support.width) & (sy >= 0) & (sy < support.height)
        covered = np.zeros_like(on_image)
        covered[on_image] = support.bits[sy[on_image], sx[on_image]]
        outside = np.count_nonzero(keep & ~covered)
    if outside > config.max_outside_fraction * n_keep:
        return None

    mag = ss.magnitude[kp.octave][kp.layer][ys, xs][keep]
    ori = ss.orientation[kp.octave][kp.layer][ys, xs][keep]
    weight = np.exp(-(x_rot[keep] ** 2 + y_rot[keep] ** 2) / (2.0 * (0.5 * width) ** 2))
    magnitude = weight * mag
    ori_bin = np.mod(ori - okp.orientation, TWO_PI) * nbins / TWO_PI

    rb, cb = row_bin[keep], col_bin[keep]
    r0, c0, o0 = np.floor(rb).astype(np.intp), np.floor(cb).astype(np.intp), np.floor(ori_bin).astype(np.intp)
    fr, fc, fo = rb - r0, cb - c0, ori_bin - o0
    tensor = np.zeros((width + 2, width + 2, nbins))
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            for do, wo in ((0, 1 - fo), (1, fo)):
                np.add.at(tensor, (r0 + 1 + dr, c0 + 1 + dc, (o0 + do) % nbins), magnitude * wr * wc * wo)

    vector = clamp_renormalize(tensor[1:-1, 1:-1, :].ravel(), config.descriptor_clamp)
    if vector is None:
        return None
    return SiftFeature(
        x=kp.x,
        y=kp.y,
        scale=kp.scale,
        orientation=okp.orientation,
        descriptor=vector,
        octave=kp.octave,
        layer=kp.layer,
    )


# ─── Pipeline ────────────────────────────────────────────────────────────────

def canonical_order(features: Sequence[SiftFeature]) -> list:
    return sorted(features, key=lambda f: f.sort_key())


def sift_features(img: GrayImage, config: SiftConfig | None = None, support: Mask | None = None,
                  offset: tuple = (0, 0)) -> list:
    """Detect and describe keypoints of a gray raster; coordinates shifted by ``offset``."""
    config = config or SiftConfig()
    if min(img.width, img.height) < config.min_image_size:
        log.debug("Skipping %dx%d raster below the %d px SIFT minimum",
                  img.width, img.height, config.min_image_size)
        return []
    ss = build_scale_space(img, config)
    keypoints = localize_and_filter(detect_extrema(ss, config), ss, config)
    features = []
    for kp in keypoints:
        for okp in assign_orientations(kp, ss, config):
            feature = compute_descriptor(okp, ss, config, support)
            if feature is not None:
                features.append(feature)
    ox, oy = offset
    if ox or oy:
        features = [f.translated(ox, oy) for f in features]
    return canonical_order(features)


def extract_sift(region, config: SiftConfig | None = None) -> list:
    """Features of one slice region, in full-image coordinates."""
    return sift_features(region.gray_patch, config, support=region.support, offset=region.offset)


# ─── Feature dump ────────────────────────────────────────────────────────────

def dumps_features(features: Sequence[SiftFeature], precision: int = 6) -> str:
    fmt = f"{{:.{precision}g}}"
    lines = []
    for f in features:
        head = [f.x, f.y, f.scale, f.orientation]
        lines.append(" ".join(fmt.format(float(v)) for v in (*head, *f.descriptor)))
    return "\n".join(lines) + ("\n" if lines else "")


def _infer_level(scale: float, config: SiftConfig):
    """Octave and layer recovered from an absolute σ (dump lines do not carry them)."""
    base = config.base_sigma / (2.0 if config.upsample else 1.0)
    level = math.log2(max(scale, 1e-12) / base) * config.scales_per_octave
    octave = max(0, int(math.floor((level - 0.5) / config.scales_per_octave)))
    layer = int(round(level - octave * config.scales_per_octave))
    return octave, min(max(layer, 1), config.scales_per_octave)


def loads_features(text: str, config: SiftConfig | None = None) -> list:
    config = config or SiftConfig()
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        values = [float(v) for v in line.split()]
        if len(values) != 4 + DESCRIPTOR_LENGTH:
            throw(f"Feature line has {len(values)} fields, expected {4 + DESCRIPTOR_LENGTH}")
        x, y, scale, orientation = values[:4]
        octave, layer = _infer_level(scale, config)
        out.append(SiftFeature(x, y, scale, orientation, np.array(values[4:]), octave, layer))
    return out
