# -*- coding: utf-8 -*-
"""Identification and verification protocols: scoring, rankings, CMC, ROC, EER and report tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from sklearn import metrics

from earlock.earlock.exceptions import EmptyFeatureSetError, ValidationError
from earlock.earlock.fusion import (
    DEFAULT_MIN_PAIRS,
    DEFAULT_RATIO,
    FeatureSet,
    FusedVector,
    concat_match,
    descriptor_matches,
    ds_match,
    pad_fused,
)
from earlock.earlock.gmm import GMM, Gaussian
from earlock.earlock.segmentation import correspond_slices
from earlock.earlock.utils import logger, ordered_map, throw

log = logger(__name__)

DEFAULT_TOP_K = 5
INF = float("inf")


class Rule(str, Enum):
    NONE = "none"           # whole-image keypoints, no colour segmentation
    CONCAT = "concat"
    DS = "ds"


class Metric(str, Enum):
    EUCLIDEAN = "euclid"
    NEAREST_NEIGHBOR = "nn"


METHOD_LABELS = {
    Rule.NONE: "before colour segmentation",
    Rule.CONCAT: "after colour segmentation (concatenation)",
    Rule.DS: "after colour segmentation (dempster-shafer)",
}

# Verification cells in report order; the last one has no published counterpart
REPORT_CELLS = (
    (Rule.NONE, Metric.EUCLIDEAN, True),
    (Rule.NONE, Metric.NEAREST_NEIGHBOR, True),
    (Rule.CONCAT, Metric.EUCLIDEAN, True),
    (Rule.CONCAT, Metric.NEAREST_NEIGHBOR, True),
    (Rule.DS, Metric.EUCLIDEAN, True),
    (Rule.DS, Metric.NEAREST_NEIGHBOR, False),
)


# ─── Templates ───────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SliceSummary:
    component_index: int
    gaussian: Gaussian
    features: FeatureSet


@dataclass(frozen=True, eq=False)
class Template:
    subject_id: str
    image_id: str
    model: GMM
    slices: tuple
    concat_features: FeatureSet
    ds_vector: FusedVector | None
    baseline_features: FeatureSet
    created_at: float

    def __post_init__(self):
        if not self.subject_id or "/" in self.subject_id:
            throw(f"Invalid subject id {self.subject_id!r}")
        object.__setattr__(self, "slices", tuple(self.slices))

    @property
    def probe_id(self) -> str:
        return f"{self.subject_id}/{self.image_id}"

    @property
    def per_slice_features(self) -> tuple:
        return tuple(s.features for s in self.slices)


@dataclass(frozen=True)
class MatchSettings:
    psi: float = 0.1
    phi: float = 0.005
    nn_threshold: float = -float(DEFAULT_MIN_PAIRS)
    ratio: float = DEFAULT_RATIO
    min_pairs: int = DEFAULT_MIN_PAIRS

    def __post_init__(self):
        if not self.psi > 0 or not self.phi > 0:
            throw("Thresholds psi and phi must be positive")
        if not 0 < self.ratio <= 1:
            throw("ratio must lie in (0, 1]")
        if self.min_pairs < 1:
            throw("min_pairs must be >= 1")

    def threshold(self, rule: Rule, metric: Metric) -> float:
        if metric == Metric.NEAREST_NEIGHBOR:
            return self.nn_threshold
        return self.phi if rule == Rule.DS else self.psi


# ─── Scoring ─────────────────────────────────────────────────────────────────

class MatchRecord(NamedTuple):
    probe_id: str
    gallery_id: str
    score: float
    rule: Rule
    metric: Metric
    genuine: bool | None = None


def _feature_score(probe: FeatureSet, reference: FeatureSet, metric: Metric,
                   settings: MatchSettings) -> float:
    if probe.is_empty or reference.is_empty:
        return INF if metric == Metric.EUCLIDEAN else 0.0
    if metric == Metric.NEAREST_NEIGHBOR:
        return -float(len(descriptor_matches(probe, reference, settings.ratio)))
    return concat_match(probe, reference, settings.psi, settings.ratio, settings.min_pairs).distance


def _slicewise_pairs(probe: Template, reference: Template, settings: MatchSettings) -> float:
    if not probe.slices or not reference.slices:
        return 0.0
    ref = [(s, s.gaussian) for s in reference.slices]
    prb = [(s, s.gaussian) for s in probe.slices]
    corr = correspond_slices(ref, prb)
    total = 0
    for i, j in corr.pairs:
        total += len(descriptor_matches(probe.slices[j].features, reference.slices[i].features,
                                        settings.ratio))
    return -float(total)


def score(probe: Template, reference: Template, rule: Rule, metric: Metric,
          settings: MatchSettings | None = None) -> float:
    """Lower is better. Euclidean metrics give distances; nearest-neighbour gives −(pair count)."""
    settings = settings or MatchSettings()
    rule, metric = Rule(rule), Metric(metric)
    if rule == Rule.NONE:
        return _feature_score(probe.baseline_features, reference.baseline_features, metric, settings)
    if rule == Rule.CONCAT:
        return _feature_score(probe.concat_features, reference.concat_features, metric, settings)
    if metric == Metric.NEAREST_NEIGHBOR:
        return _slicewise_pairs(probe, reference, settings)
    if probe.ds_vector is None or reference.ds_vector is None:
        log.warning("No representative vector for %s or %s; rejecting",
                    probe.probe_id, reference.probe_id)
        return INF
    a, b = pad_fused(probe.ds_vector, reference.ds_vector)
    return ds_match(a, b, settings.phi).distance


# ─── Identification ──────────────────────────────────────────────────────────

def rank_gallery(probe: Template, gallery: Sequence[Template], rule: Rule, metric: Metric,
                 settings: MatchSettings | None = None, threads: int = 1) -> list:
    """Every gallery entry scored and sorted by (score, gallery_id)."""
    if not gallery:
        throw("Gallery is empty")
    rule, metric = Rule(rule), Metric(metric)

    def match(ref):
        return MatchRecord(
            probe_id=probe.probe_id,
            gallery_id=ref.subject_id,
            score=score(probe, ref, rule, metric, settings),
            rule=rule,
            metric=metric,
            genuine=probe.subject_id == ref.subject_id,
        )

    records = ordered_map(match, gallery, threads)
    return sorted(records, key=lambda r: (r.score, r.gallery_id))


def identify(probe: Template, gallery: Sequence[Template], k: int = DEFAULT_TOP_K,
             rule: Rule = Rule.CONCAT, metric: Metric = Metric.EUCLIDEAN,
             settings: MatchSettings | None = None, threads: int = 1) -> list:
    if k < 1:
        throw(f"k must be >= 1, got {k}")
    return rank_gallery(probe, gallery, rule, metric, settings, threads)[:k]


def true_match_rank(ranking: Sequence[MatchRecord], subject_id: str):
    """1-based position of ``subject_id`` in the ranking, or None."""
    for position, record in enumerate(ranking, start=1):
        if record.gallery_id == subject_id:
            return position
    return None


class CmcCurve(NamedTuple):
    points: list        # (rank, rate)

    def rate_at(self, rank: int) -> float:
        return self.points[rank - 1][1] if self.points else 0.0


def cmc_curve(ranks: Sequence, gallery_size: int) -> CmcCurve:
    """Fraction of probes whose true match sits at rank ≤ r, for r = 1..gallery_size."""
    if gallery_size < 1:
        throw("gallery_size must be >= 1")
    found = np.array([r for r in ranks if r is not None], dtype=np.int64)
    total = len(ranks)
    points = []
    for r in range(1, gallery_size + 1):
        rate = float(np.count_nonzero(found <= r)) / total if total else 0.0
        points.append((r, rate))
    return CmcCurve(points)


# ─── Verification ────────────────────────────────────────────────────────────

class Verification(NamedTuple):
    score: float
    accept: bool
    label: str      # TP, FP, TN or FN


def decision_label(accept: bool, genuine: bool) -> str:
    if genuine:
        return "TP" if accept else "FN"
    return "FP" if accept else "TN"


def verify(probe: Template, claimed: Template, threshold: float, rule: Rule = Rule.DS,
           metric: Metric = Metric.EUCLIDEAN, settings: MatchSettings | None = None,
           genuine: bool | None = None) -> Verification:
    """Accept iff score ≤ threshold; ground truth defaults to subject-id equality."""
    s = score(probe, claimed, rule, metric, settings)
    accept = bool(math.isfinite(s) and s <= threshold)
    if genuine is None:
        genuine = probe.subject_id == claimed.subject_id
    return Verification(s, accept, decision_label(accept, genuine))


def _split_scores(genuine_scores, impostor_scores):
    g = np.asarray(list(genuine_scores), dtype=np.float64)
    i = np.asarray(list(impostor_scores), dtype=np.float64)
    if g.size == 0 or i.size == 0:
        throw("Both genuine and impostor score lists must be non-empty", EmptyFeatureSetError)
    return g, i


class RocPoint(NamedTuple):
    fpr: float
    tpr: float
    threshold: float


class RocCurve(NamedTuple):
    points: list


def _roc_arrays(genuine_scores, impostor_scores):
    """FPR, TPR and ascending thresholds at each distinct score, non-matches mapped to a ceiling."""
    g, i = _split_scores(genuine_scores, impostor_scores)
    scores = np.concatenate([g, i])
    finite = scores[np.isfinite(scores)]
    ceiling = float(finite.max()) + 1.0 if finite.size else 1.0
    scores = np.where(np.isfinite(scores), scores, ceiling)
    labels = np.concatenate([np.ones(g.size, dtype=int), np.zeros(i.size, dtype=int)])
    # lower distance means genuine; sklearn ranks higher scores as positive
    fpr, tpr, thresholds = metrics.roc_curve(labels, -scores, drop_intermediate=False)
    return fpr[1:], tpr[1:], -thresholds[1:], ceiling


def roc_curve(genuine_scores, impostor_scores) -> RocCurve:
    """(FPR, TPR) at every distinct score taken as threshold; accept iff score ≤ threshold."""
    fpr, tpr, thresholds, ceiling = _roc_arrays(genuine_scores, impostor_scores)
    return RocCurve([RocPoint(float(f), float(t), INF if th >= ceiling else float(th))
                     for f, t, th in zip(fpr, tpr, thresholds)])


class EerResult(NamedTuple):
    eer: float
    threshold: float
    far: float
    frr: float


def equal_error_rate(genuine_scores, impostor_scores) -> EerResult:
    """Threshold where false accepts and false rejects balance, taken between ROC operating points."""
    fpr, tpr, thresholds, ceiling = _roc_arrays(genuine_scores, impostor_scores)
    candidates = [(0.0, 1.0, float(thresholds[0]) - 1.0)]
    for j in range(fpr.size):
        if j + 1 < fpr.size:
            t = 0.5 * (thresholds[j] + thresholds[j + 1])
        else:
            t = INF if thresholds[j] >= ceiling else thresholds[j] + 1.0
        candidates.append((float(fpr[j]), float(1.0 - tpr[j]), float(t)))
    far, frr, t = min(candidates, key=lambda c: (abs(c[0] - c[1]), c[0] + c[1], c[2]))
    result = EerResult(0.5 * (far + frr), t, far, frr)
    if result.eer >= 0.5 - 1e-12:
        log.warning("Equal error rate %.3f: scores do not separate genuine from impostor", result.eer)
    return result


# ─── Reports ─────────────────────────────────────────────────────────────────

class ReportRow(NamedTuple):
    method: str
    rule: str
    metric: str
    threshold: float
    accuracy: float     # percent
    fp: float           # percent of impostor claims accepted
    tn: float           # percent of genuine claims missed
    eer: float          # percent
    published: bool


def accuracy_report(records: Sequence[MatchRecord], thresholds: dict) -> list:
    """One row per (rule, metric) cell present in ``records``, in report order.

    ``thresholds`` maps (Rule, Metric) to the operating threshold.
    """
    rows = []
    for rule, metric, published in REPORT_CELLS:
        cell = [r for r in records if r.rule == rule and r.metric == metric]
        if not cell:
            continue
        if any(r.genuine is None for r in cell):
            throw("Verification records need ground-truth labels", ValidationError)
        t = thresholds[(rule, metric)]
        genuine = [r.score for r in cell if r.genuine]
        impostor = [r.score for r in cell if not r.genuine]
        accepted = [math.isfinite(r.score) and r.score <= t for r in cell]
        false_accepts = sum(a for a, r in zip(accepted, cell) if not r.genuine)
        misses = sum(not a for a, r in zip(accepted, cell) if r.genuine)
        correct = len(cell) - false_accepts - misses
        eer = equal_error_rate(genuine, impostor).eer if genuine and impostor else float("nan")
        if not published:
            log.info("Reporting %s × %s, a cell without published figures", rule.value, metric.value)
        rows.append(ReportRow(
            method=METHOD_LABELS[rule],
            rule=rule.value,
            metric=metric.value,
            threshold=float(t),
            accuracy=100.0 * correct / len(cell),
            fp=100.0 * false_accepts / len(impostor) if impostor else 0.0,
            tn=100.0 * misses / len(genuine) if genuine else 0.0,
            eer=100.0 * eer,
            published=published,
        ))
    return rows


class IdentificationRow(NamedTuple):
    method: str
    rule: str
    rank: int
    rate: float         # percent


def identification_report(curves: dict, k: int = DEFAULT_TOP_K) -> list:
    """Rank-k identification rate per rule, from a {Rule: CmcCurve} map."""
    rows = []
    for rule in Rule:
        curve = curves.get(rule)
        if curve is None or not curve.points:
            continue
        rank = min(k, len(curve.points))
        rows.append(IdentificationRow(METHOD_LABELS[rule], rule.value, rank, 100.0 * curve.rate_at(rank)))
    return rows


# ─── CSV output ──────────────────────────────────────────────────────────────

def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{float(value):.10g}"
    if isinstance(value, Enum):
        return value.value
    return str(value)


def write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_scores_csv(records: Sequence[MatchRecord], path) -> Path:
    rows = [(r.probe_id, r.gallery_id, r.rule, r.metric, r.score) for r in records]
    return write_csv(path, ("probe_id", "gallery_id", "rule", "metric", "score"), rows)


def write_cmc_csv(curve: CmcCurve, path) -> Path:
    return write_csv(path, ("rank", "rate"), curve.points)


def write_roc_csv(curve: RocCurve, path) -> Path:
    return write_csv(path, ("fpr", "tpr", "threshold"), curve.points)


def write_accuracy_csv(rows: Sequence[ReportRow], path) -> Path:
    return write_csv(path, ReportRow._fields, rows)


def write_identification_csv(rows: Sequence[IdentificationRow], path) -> Path:
    return write_csv(path, IdentificationRow._fields, rows)
