# -*- coding: utf-8 -*-
"""Colour mixture models: Gaussian densities, codebook initialization, EM, MDL order selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from earlock.earlock.exceptions import DimensionMismatchError, FitError, ValidationError
from earlock.earlock.utils import logger, ordered_map, throw

log = logger(__name__)

MAX_COMPONENTS = 16
SYMMETRY_TOL = 1e-9
WEIGHT_TOL = 1e-9
DEFAULT_MDL_RANGE = (3, 6)
KMEANS_ITERATIONS = 50
SERIAL_HEADER = "GMM v1"


# ─── Components ──────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            throw(f"Covariance shape {cov.shape} does not fit mean of dimension {d}",
                  DimensionMismatchError)
        if not np.allclose(cov, cov.T, atol=SYMMETRY_TOL, rtol=0.0):
            throw("Covariance must be symmetric")
        cov = 0.5 * (cov + cov.T)
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def cholesky(self):
        try:
            return linalg.cho_factor(self.covariance, lower=True)
        except linalg.LinAlgError:
            throw("Covariance is singular or not positive definite", FitError)

    def logpdf(self, x) -> np.ndarray:
        """Log density at each row of ``x`` (or at a single vector)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            throw(f"Point dimension {x.shape[1]} differs from model dimension {self.dim}",
                  DimensionMismatchError)
        c, lower = self.cholesky()
        diff = x - self.mean
        z = linalg.solve_triangular(c, diff.T, lower=lower)
        maha = np.sum(z * z, axis=0)
        log_det = 2.0 * np.sum(np.log(np.diag(c)))
        out = -0.5 * (maha + log_det + self.dim * math.log(2.0 * math.pi))
        return out[0] if single else out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        c, _ = self.cholesky()
        lower = np.tril(c)
        return self.mean + rng.standard_normal((n, self.dim)) @ lower.T


def gaussian_pdf(g: Gaussian, x) -> float:
    """exp(-½(x−m)ᵀΣ⁻¹(x−m)) / ((2π)^{p/2}|Σ|^{1/2})."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        throw("gaussian_pdf takes a single vector", DimensionMismatchError)
    return float(np.exp(g.logpdf(x)))


# ─── Mixtures ────────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class GMM:
    weights: np.ndarray
    gaussians: tuple

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        gaussians = tuple(self.gaussians)
        k = len(gaussians)
        if not 1 <= k <= MAX_COMPONENTS:
            throw(f"Component count must be in [1, {MAX_COMPONENTS}], got {k}")
        if weights.shape[0] != k:
            throw(f"{weights.shape[0]} weights for {k} components")
        if np.any(weights <= 0.0) or np.any(weights > 1.0 + WEIGHT_TOL):
            throw("Mixture weights must lie in (0, 1]")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            throw(f"Mixture weights sum to {weights.sum():.12g}, not 1")
        dims = {g.dim for g in gaussians}
        if len(dims) != 1:
            throw("Mixture components disagree on dimension", DimensionMismatchError)
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "gaussians", gaussians)

    @property
    def k(self) -> int:
        return len(self.gaussians)

    @property
    def dim(self) -> int:
        return self.gaussians[0].dim

    @property
    def components(self):
        return list(zip(self.weights.tolist(), self.gaussians))

    @property
    def means(self) -> np.ndarray:
        return np.stack([g.mean for g in self.gaussians])

    @property
    def covariances(self) -> np.ndarray:
        return np.stack([g.covariance for g in self.gaussians])

    def component_logpdf(self, x) -> np.ndarray:
        """(n, k) matrix of log Pᵢ + log f(x|i)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            throw(f"Point dimension {x.shape[1]} differs from model dimension {self.dim}",
                  DimensionMismatchError)
        return np.column_stack([math.log(w) + g.logpdf(x) for w, g in self.components])

    def logpdf(self, x) -> np.ndarray:
        return logsumexp(self.component_logpdf(x), axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        counts = rng.multinomial(n, self.weights)
        parts = [g.sample(rng, int(c)) for g, c in zip(self.gaussians, counts) if c > 0]
        return np.concatenate(parts, axis=0)


def gmm_pdf(model: GMM, x) -> float:
    """f(x) = Σ Pᵢ f(x|i)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        throw("gmm_pdf takes a single vector", DimensionMismatchError)
    return float(np.exp(model.logpdf(x)[0]))


# ─── Fitting ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 200
    tolerance: float = 1e-6            # per-pixel log-likelihood change
    covariance_floor: float = 1.0      # ε, squared 8-bit colour units
    seed: int = 0
    stride: int = 1

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            throw(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not self.tolerance > 0:
            throw(f"tolerance must be > 0, got {self.tolerance}")
        if not self.covariance_floor > 0:
            throw(f"covariance_floor must be > 0, got {self.covariance_floor}")
        if int(self.stride) < 1:
            throw(f"stride must be >= 1, got {self.stride}")


class EmResult(NamedTuple):
    model: GMM
    log_likelihood: float
    iterations: int
    history: tuple


def _as_pixels(pixels) -> np.ndarray:
    x = np.asarray(pixels, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        throw("Pixel set is empty", ValidationError)
    return x


def floor_covariance(cov: np.ndarray, floor: float) -> np.ndarray:
    """Clip eigenvalues at ``floor``: the closest covariance whose spectrum respects ε."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return 0.5 * (out + out.T)


def vq_initialize(pixels, k: int, seed: int = 0, covariance_floor: float = 1.0) -> GMM:
    """Seeded k-means++ codebook turned into a mixture (weights = cluster fractions)."""
    x = _as_pixels(pixels)
    if k < 1:
        throw(f"Component count must be >= 1, got {k}")
    distinct = np.unique(x, axis=0)
    if distinct.shape[0] < k:
        throw(f"{distinct.shape[0]} distinct pixels cannot seed {k} codewords", FitError)
    # an empty cell keeps its previous codeword
    codebook, codes = kmeans2(x, k, iter=KMEANS_ITERATIONS, minit="++",
                              missing="warn", seed=np.random.default_rng(seed))
    counts = np.bincount(codes, minlength=k).astype(np.float64)
    gaussians = []
    for j in range(k):
        members = x[codes == j]
        if members.shape[0] > 1:
            scatter = np.atleast_2d(np.cov(members, rowvar=False, bias=True))
        else:
            scatter = np.zeros((x.shape[1], x.shape[1]))
        gaussians.append(Gaussian(codebook[j], floor_covariance(scatter, covariance_floor)))
    counts = np.maximum(counts, 1e-12)
    return GMM(counts / counts.sum(), gaussians)


def _m_step(x, resp, floor):
    n, d = x.shape
    nk = resp.sum(axis=0)
    gaussians = []
    for j in range(resp.shape[1]):
        mean = resp[:, j] @ x / nk[j]
        diff = x - mean
        scatter = (resp[:, j, None] * diff).T @ diff / nk[j]
        gaussians.append(Gaussian(mean, floor_covariance(scatter, floor)))
    weights = nk / n
    return weights, gaussians


def em_fit(pixels, k: int, config: FitConfig | None = None) -> EmResult:
    """Fit a k-component mixture by EM starting from the seeded codebook."""
    config = config or FitConfig()
    x = _as_pixels(pixels)[::config.stride]
    if k < 1:
        throw(f"Component count must be >= 1, got {k}")
    n = x.shape[0]
    if n < k:
        throw(f"{n} pixels cannot support {k} components", FitError)

    model = vq_initialize(x, k, seed=config.seed, covariance_floor=config.covariance_floor)
    history = []
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        joint = model.component_logpdf(x)
        totals = logsumexp(joint, axis=1)
        ll = float(totals.sum())
        history.append(ll)
        if len(history) > 1 and abs(history[-1] - history[-2]) < config.tolerance * n:
            break
        resp = np.exp(joint - totals[:, None])
        nk = resp.sum(axis=0)
        collapsed = np.flatnonzero(nk < 1e-8 * n)
        weights, gaussians = _m_step(x, np.maximum(resp, 1e-300), config.covariance_floor)
        for j in collapsed:
            # re-seed at the pixel the model explains worst
            worst = int(np.argmin(totals))
            log.debug("Re-seeding collapsed component %d at pixel %d", j, worst)
            gaussians[j] = Gaussian(x[worst], np.eye(x.shape[1]) * config.covariance_floor)
            totals[worst] = np.inf
        weights = np.maximum(weights, 1e-12)
        model = GMM(weights / weights.sum(), gaussians)
    else:
        final = float(logsumexp(model.component_logpdf(x), axis=1).sum())
        history.append(final)

    log.debug("EM k=%d converged after %d iterations, log-likelihood %.6f",
              k, iterations, history[-1])
    return EmResult(model, history[-1], iterations, tuple(history))


# ─── Order selection ─────────────────────────────────────────────────────────

def free_parameters(k: int, d: int) -> int:
    return (k - 1) + k * d + k * d * (d + 1) // 2


def mdl_score(log_likelihood: float, k: int, d: int, n: int) -> float:
    """Two-part code length: −log L + ½·P·log n."""
    return -log_likelihood + 0.5 * free_parameters(k, d) * math.log(n)


class MdlCandidate(NamedTuple):
    k: int
    score: float
    fit: EmResult


def mdl_search(pixels, k_range: Sequence[int] = DEFAULT_MDL_RANGE,
               config: FitConfig | None = None, threads: int = 1) -> list:
    """Fit every order in the inclusive range and score it."""
    config = config or FitConfig()
    lo, hi = int(k_range[0]), int(k_range[1])
    if not 1 <= lo <= hi <= MAX_COMPONENTS:
        throw(f"MDL range must satisfy 1 <= lo <= hi <= {MAX_COMPONENTS}, got {k_range}")
    x = _as_pixels(pixels)
    if x[::config.stride].shape[0] < hi:
        throw(f"{x.shape[0]} pixels cannot support {hi} components", FitError)

    def fit_one(k):
        result = em_fit(x, k, config)
        n = x[::config.stride].shape[0]
        score = mdl_score(result.log_likelihood, k, x.shape[1], n)
        log.debug("MDL k=%d score %.3f", k, score)
        return MdlCandidate(k, score, result)

    return ordered_map(fit_one, range(lo, hi + 1), threads)


def mdl_select(pixels, k_range: Sequence[int] = DEFAULT_MDL_RANGE,
               config: FitConfig | None = None, threads: int = 1) -> GMM:
    """Model with the smallest MDL score; ties go to the smaller order."""
    candidates = mdl_search(pixels, k_range, config, threads)
    best = min(candidates, key=lambda c: (c.score, c.k))
    log.info("MDL selected k=%d among %s", best.k, [c.k for c in candidates])
    return best.fit.model


# ─── Serialization ───────────────────────────────────────────────────────────

def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def dumps_gmm(model: GMM) -> str:
    lines = [f"{SERIAL_HEADER} d={model.dim} k={model.k}"]
    for w, g in model.components:
        fields = [w, *g.mean.tolist(), *g.covariance.ravel().tolist()]
        lines.append(" ".join(_fmt(v) for v in fields))
    return "\n".join(lines) + "\n"


def loads_gmm(text: str) -> GMM:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(SERIAL_HEADER + " "):
        throw("Not a GMM v1 block")
    try:
        header = dict(part.split("=") for part in lines[0].split()[2:])
        d, k = int(header["d"]), int(header["k"])
    except (KeyError, ValueError):
        throw(f"Malformed GMM header: {lines[0]!r}")
    if len(lines) != k + 1:
        throw(f"GMM header announces {k} components, found {len(lines) - 1}")
    weights, gaussians = [], []
    for line in lines[1:]:
        values = [float(v) for v in line.split()]
        if len(values) != 1 + d + d * d:
            throw(f"GMM component line has {len(values)} fields, expected {1 + d + d * d}")
        weights.append(values[0])
        gaussians.append(Gaussian(values[1:1 + d], np.reshape(values[1 + d:], (d, d))))
    return GMM(np.array(weights), gaussians)
