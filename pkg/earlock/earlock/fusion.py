# -*- coding: utf-8 -*-
"""Feature-level fusion of per-slice SIFT sets.

Two fusion rules live here: the augmented (concatenated) keypoint set with
its pair-based matching distance, and the Dempster combination of per-slice
mass vectors into one representative vector. The general mass machinery over
subsets of a frame (belief, plausibility, Möbius inversion, orthogonal sum)
sits at the bottom of the module.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from earlock.earlock.exceptions import (
    DimensionMismatchError,
    EmptyFeatureSetError,
    TotalConflictError,
    ValidationError,
    ZeroMassError,
)
from earlock.earlock.sift import DESCRIPTOR_LENGTH, SiftFeature, canonical_order
from earlock.earlock.utils import logger, throw

log = logger(__name__)

AUGMENTED = "augmented"
DEFAULT_RATIO = 0.8
DEFAULT_MIN_PAIRS = 4
MASS_TOL = 1e-9


# ─── Feature sets ────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FeatureSet:
    features: tuple
    source: object = AUGMENTED      # slice index, or AUGMENTED

    def __post_init__(self):
        features = tuple(self.features)
        for f in features:
            if not isinstance(f, SiftFeature):
                throw(f"FeatureSet holds SiftFeature records, got {type(f).__name__}")
        object.__setattr__(self, "features", features)

    def __len__(self) -> int:
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    @property
    def is_empty(self) -> bool:
        return not self.features

    def descriptors(self) -> np.ndarray:
        if not self.features:
            return np.zeros((0, DESCRIPTOR_LENGTH))
        return np.vstack([f.descriptor for f in self.features])

    def flatten(self) -> np.ndarray:
        """Descriptors concatenated in stored order: length 128·count."""
        return self.descriptors().ravel()


def concat_fuse(slices: Sequence[FeatureSet]) -> FeatureSet:
    """Union of all slice sets, identical records kept once, in canonical order."""
    if not slices:
        throw("concat_fuse needs at least one feature set")
    seen, merged = set(), []
    for fs in slices:
        for f in fs:
            key = f.record()
            if key in seen:
                continue
            seen.add(key)
            merged.append(f)
    if not merged:
        log.warning("All %d slice feature sets are empty; augmented set is empty", len(slices))
    return FeatureSet(tuple(canonical_order(merged)), AUGMENTED)


# ─── Pair matching ───────────────────────────────────────────────────────────

class DescriptorPair(NamedTuple):
    probe_index: int
    reference_index: int
    distance: float


class ConcatMatch(NamedTuple):
    distance: float
    accept: bool
    pair_count: int


def descriptor_matches(probe: FeatureSet, reference: FeatureSet,
                       ratio: float = DEFAULT_RATIO) -> list:
    """Mutual nearest neighbours whose best distance passes the ratio test d1 ≤ ratio·d2."""
    if probe.is_empty or reference.is_empty:
        return []
    dist = cdist(probe.descriptors(), reference.descriptors())
    forward = np.argmin(dist, axis=1)
    backward = np.argmin(dist, axis=0)
    best = dist[np.arange(dist.shape[0]), forward]
    if dist.shape[1] > 1:
        second = np.partition(dist, 1, axis=1)[:, 1]
    else:
        second = np.full(dist.shape[0], np.inf)
    pairs = []
    for i, j in enumerate(forward):
        if backward[j] != i:
            continue
        if best[i] > ratio * second[i]:
            continue
        pairs.append(DescriptorPair(i, int(j), float(best[i])))
    return pairs


def concat_match(probe: FeatureSet, reference: FeatureSet, psi: float,
                 ratio: float = DEFAULT_RATIO, min_pairs: int = DEFAULT_MIN_PAIRS) -> ConcatMatch:
    """sqrt(Σ‖d_probe − d_ref‖²)/pairs over matched keypoints; accept iff ≤ ψ with enough pairs.

    The pair floor never exceeds the smaller set size, so a small set still
    accepts against itself.
    """
    if probe.is_empty or reference.is_empty:
        throw("concat_match needs two non-empty feature sets", EmptyFeatureSetError)
    pairs = descriptor_matches(probe, reference, ratio)
    if not pairs:
        return ConcatMatch(float("inf"), False, 0)
    count = len(pairs)
    distance = float(np.sqrt(sum(p.distance ** 2 for p in pairs)) / count)
    floor = min(min_pairs, len(probe), len(reference))
    return ConcatMatch(distance, bool(distance <= psi and count >= floor), count)


# ─── Singleton-frame masses ──────────────────────────────────────────────────

def _check_mass_vector(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        throw(f"{what} needs at least one element")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        throw(f"{what} entries must be finite and non-negative")
    if abs(values.sum() - 1.0) > MASS_TOL:
        throw(f"{what} must sum to 1, got {values.sum():.12g}")
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class MassFunction:
    """Mass over D singleton hypotheses; the empty set carries nothing by construction."""
    masses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "masses", _check_mass_vector(self.masses, "MassFunction"))

    @property
    def frame_size(self) -> int:
        return int(self.masses.shape[0])


@dataclass(frozen=True, eq=False)
class FusedVector:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_mass_vector(self.values, "FusedVector"))

    def __len__(self) -> int:
        return int(self.values.shape[0])


def zero_pad_equalize(sets: Sequence[FeatureSet]) -> list:
    """Flatten every set and extend with zeros to the longest length."""
    if len(sets) < 2:
        throw("zero_pad_equalize needs at least two feature sets")
    flat = [fs.flatten() for fs in sets]
    length = max(v.shape[0] for v in flat)
    if length == 0:
        throw("All feature sets are empty", EmptyFeatureSetError)
    out = []
    for fs, v in zip(sets, flat):
        if v.shape[0] == 0:
            log.warning("Feature set %s is empty; padded to an all-zero vector", fs.source)
        out.append(np.pad(v, (0, length - v.shape[0])))
    return out


def to_mass(v) -> MassFunction:
    """Scale to [0, 1] by the maximum, then to unit sum."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        throw("Mass source vector must be finite and non-negative")
    peak = v.max() if v.size else 0.0
    if peak <= 0:
        throw("Cannot build a mass function from an all-zero vector", ZeroMassError)
    scaled = v / peak
    return MassFunction(scaled / scaled.sum())


def ds_combine_pair(m1: MassFunction, m2: MassFunction) -> MassFunction:
    """Dempster's rule on singleton frames: normalized element-wise product."""
    if m1.frame_size != m2.frame_size:
        throw(f"Frames of size {m1.frame_size} and {m2.frame_size}", DimensionMismatchError)
    product = m1.masses * m2.masses
    agreement = product.sum()
    if agreement <= 0:
        throw("Total conflict: the combined masses share no hypothesis", TotalConflictError)
    return MassFunction(product / agreement)


def ds_fuse_all(masses: Sequence[MassFunction]) -> FusedVector:
    """Combine consecutive pairs (an odd leftover passes through), then fold the products."""
    if not masses:
        throw("ds_fuse_all needs at least one mass function")
    sizes = {m.frame_size for m in masses}
    if len(sizes) != 1:
        throw(f"Mass functions over different frames: {sorted(sizes)}", DimensionMismatchError)
    paired = [ds_combine_pair(masses[i], masses[i + 1]) for i in range(0, len(masses) - 1, 2)]
    if len(masses) % 2:
        paired.append(masses[-1])
    return FusedVector(reduce(ds_combine_pair, paired).masses)


def fold_compatible(masses: Sequence[MassFunction]) -> FusedVector:
    """Fold left to right, skipping any mass in total conflict with the running result."""
    if not masses:
        throw("fold_compatible needs at least one mass function")
    running = masses[0]
    for i, m in enumerate(masses[1:], start=1):
        try:
            running = ds_combine_pair(running, m)
        except TotalConflictError:
            log.warning("Mass %d conflicts totally with slices fused so far; left out", i)
    return FusedVector(running.masses)


def fuse_feature_sets(sets: Sequence[FeatureSet]):
    """Representative vector of a template's slice sets, or None when no slice has features.

    Empty slice sets carry no evidence and are left out. When the pairwise
    schedule hits total conflict the masses are folded one at a time instead,
    dropping each slice that shares no hypothesis with those before it. The
    vector keeps its native length; see ``pad_fused``.
    """
    usable = [fs for fs in sets if not fs.is_empty]
    if not usable:
        log.warning("No slice has features; representative vector unavailable")
        return None
    if len(usable) == 1:
        return FusedVector(to_mass(usable[0].flatten()).masses)
    masses = [to_mass(v) for v in zero_pad_equalize(usable)]
    try:
        return ds_fuse_all(masses)
    except TotalConflictError as e:
        log.warning("%s; folding slices one at a time", e)
        return fold_compatible(masses)


def pad_fused(a: FusedVector, b: FusedVector):
    """Both vectors extended with zeros to their common length."""
    length = max(len(a), len(b))
    return (FusedVector(np.pad(a.values, (0, length - len(a)))),
            FusedVector(np.pad(b.values, (0, length - len(b)))))


class DsMatch(NamedTuple):
    distance: float
    accept: bool


def ds_match(s1: FusedVector, s2: FusedVector, phi: float) -> DsMatch:
    if len(s1) != len(s2):
        throw(f"Fused vectors of length {len(s1)} and {len(s2)}", DimensionMismatchError)
    distance = float(np.linalg.norm(s2.values - s1.values))
    return DsMatch(distance, bool(distance <= phi))


# ─── Masses over subsets of a frame ──────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class DiscreteMass:
    """Mass on subsets of ``frame``; subsets are bitmasks over the frame's positions."""
    frame: tuple
    focal: dict

    def __post_init__(self):
        frame = tuple(self.frame)
        if not frame or len(set(frame)) != len(frame):
            throw("Frame must be a non-empty set of distinct labels")
        full = (1 << len(frame)) - 1
        focal = {}
        for subset, mass in self.focal.items():
            subset = int(subset)
            if subset == 0:
                throw("The empty set cannot carry mass")
            if subset & ~full:
                throw(f"Subset {subset:#b} lies outside the frame")
            if not mass > 0:
                throw(f"Focal masses must be positive, got {mass}")
            focal[subset] = float(mass)
        if abs(sum(focal.values()) - 1.0) > MASS_TOL:
            throw(f"Masses must sum to 1, got {sum(focal.values()):.12g}")
        object.__setattr__(self, "frame", frame)
        object.__setattr__(self, "focal", focal)

    @property
    def full(self) -> int:
        return (1 << len(self.frame)) - 1

    def subset(self, labels: Iterable) -> int:
        """Bitmask of a collection of frame labels."""
        mask = 0
        for label in labels:
            if label not in self.frame:
                throw(f"{label!r} is not in the frame", ValidationError)
            mask |= 1 << self.frame.index(label)
        return mask

    def complement(self, subset: int) -> int:
        return self.full & ~subset


def _as_subset(m: DiscreteMass, a) -> int:
    if isinstance(a, int):
        if a < 0 or a & ~m.full:
            throw(f"Subset {a} lies outside the frame")
        return a
    return m.subset(a)


def submasks(subset: int):
    """Every B ⊆ subset, the empty set included."""
    b = subset
    while True:
        yield b
        if b == 0:
            return
        b = (b - 1) & subset


def belief(m: DiscreteMass, a) -> float:
    """Bel(A) = Σ_{B⊆A} m(B)."""
    a = _as_subset(m, a)
    return float(sum(mass for b, mass in m.focal.items() if b & ~a == 0))


def plausibility(m: DiscreteMass, a) -> float:
    """Pl(A) = Σ_{B∩A≠∅} m(B)."""
    a = _as_subset(m, a)
    return float(sum(mass for b, mass in m.focal.items() if b & a))


def belief_map(m: DiscreteMass) -> dict:
    return {a: belief(m, a) for a in range(m.full + 1)}


def mass_from_belief(bel: dict, frame: Sequence) -> DiscreteMass:
    """Möbius inversion m(A) = Σ_{B⊆A} (−1)^{|A−B|} Bel(B) over a complete belief map."""
    frame = tuple(frame)
    full = (1 << len(frame)) - 1
    missing = [a for a in range(full + 1) if a not in bel]
    if missing:
        throw(f"Belief map misses {len(missing)} subsets of the frame")
    focal = {}
    for a in range(1, full + 1):
        value = 0.0
        for b in submasks(a):
            sign = -1.0 if bin(a & ~b).count("1") % 2 else 1.0
            value += sign * bel[b]
        if value < -MASS_TOL:
            throw(f"Inconsistent belief map: subset {a:#b} recovers mass {value:.3g}")
        if value > MASS_TOL:
            focal[a] = value
    return DiscreteMass(frame, focal)


def dempster_combine(m1: DiscreteMass, m2: DiscreteMass) -> DiscreteMass:
    """Orthogonal sum: products over intersecting focal sets, renormalized by 1 − conflict."""
    if m1.frame != m2.frame:
        throw("Masses are defined over different frames", DimensionMismatchError)
    combined = {}
    for a, ma in m1.focal.items():
        for b, mb in m2.focal.items():
            c = a & b
            if c:
                combined[c] = combined.get(c, 0.0) + ma * mb
    agreement = sum(combined.values())
    if agreement <= 0:
        throw("Total conflict: no focal sets intersect", TotalConflictError)
    return DiscreteMass(m1.frame, {c: v / agreement for c, v in combined.items() if v > 0})


def singleton_mass(m: MassFunction) -> DiscreteMass:
    """The same evidence as a DiscreteMass whose focal sets are the singletons."""
    return DiscreteMass(tuple(range(m.frame_size)),
                        {1 << d: float(v) for d, v in enumerate(m.masses) if v > 0})
