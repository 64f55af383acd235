# -*- coding: utf-8 -*-
"""K-L divergence between Gaussians (closed form) and between colour mixtures (matching approximation)."""
from __future__ import annotations

import numpy as np
from scipy import linalg

from earlock.earlock.exceptions import DimensionMismatchError
from earlock.earlock.gmm import GMM, Gaussian
from earlock.earlock.utils import throw

# Divergences are plain non-negative floats measured in nats
DivergenceScore = float


def gaussian_kl(p: Gaussian, q: Gaussian) -> DivergenceScore:
    """KL(p‖q) = ½[log(|Σq|/|Σp|) + Tr(Σq⁻¹Σp) − d + (μp−μq)ᵀΣq⁻¹(μp−μq)]."""
    if p.dim != q.dim:
        throw(f"Gaussians of dimension {p.dim} and {q.dim}", DimensionMismatchError)
    cq = q.cholesky()
    cp = p.cholesky()
    log_det_q = 2.0 * np.sum(np.log(np.diag(cq[0])))
    log_det_p = 2.0 * np.sum(np.log(np.diag(cp[0])))
    trace = np.trace(linalg.cho_solve(cq, p.covariance))
    diff = p.mean - q.mean
    maha = float(diff @ linalg.cho_solve(cq, diff))
    value = 0.5 * (log_det_q - log_det_p + trace - p.dim + maha)
    return max(0.0, float(value))


def symmetric_gaussian_kl(p: Gaussian, q: Gaussian) -> DivergenceScore:
    return 0.5 * (gaussian_kl(p, q) + gaussian_kl(q, p))


def _check_mixtures(p: GMM, q: GMM):
    if p.dim != q.dim:
        throw(f"Mixtures of dimension {p.dim} and {q.dim}", DimensionMismatchError)


def gmm_kl_approx(p: GMM, q: GMM) -> DivergenceScore:
    """Matching-based approximation: Σᵢ Pᵢ minⱼ [KL(fᵢ‖gⱼ) + log(Pᵢ/ωⱼ)], floored at 0."""
    _check_mixtures(p, q)
    total = 0.0
    for pi, fi in p.components:
        total += pi * min(gaussian_kl(fi, gj) + np.log(pi / wj) for wj, gj in q.components)
    return max(0.0, float(total))


def kl_monte_carlo(p: GMM, q: GMM, samples: int = 100_000, seed: int = 0) -> DivergenceScore:
    """Sample mean of log p(x) − log q(x) over draws from p.

    Not floored: the estimate is an oracle and may dip below zero by noise.
    """
    _check_mixtures(p, q)
    if samples < 1:
        throw(f"samples must be >= 1, got {samples}")
    rng = np.random.default_rng(seed)
    x = p.sample(rng, int(samples))
    return float(np.mean(p.logpdf(x) - q.logpdf(x)))


def color_similarity(reference: GMM, probe: GMM) -> float:
    """Symmetrized mixture divergence; lower means more similar colour models."""
    _check_mixtures(reference, probe)
    return 0.5 * (gmm_kl_approx(reference, probe) + gmm_kl_approx(probe, reference))
