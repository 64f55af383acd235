# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from earlock.earlock.divergence import (
    color_similarity,
    gaussian_kl,
    gmm_kl_approx,
    kl_monte_carlo,
    symmetric_gaussian_kl,
)
from earlock.earlock.exceptions import DimensionMismatchError
from earlock.earlock.gmm import GMM, FitConfig, Gaussian, em_fit
from earlock.earlock.imaging import apply_mask
from earlock.earlock.synthetic import subject_instance

from conftest import random_gmm


def _random_spd(rng, d, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return q @ np.diag(rng.uniform(lo, hi, d)) @ q.T


def _numeric_kl(p: Gaussian, q: Gaussian, half_width=10.0, points=2001) -> float:
    axis = np.linspace(-half_width, half_width, points)
    if p.dim == 1:
        x = axis[:, None]
        lp, lq = p.logpdf(x), q.logpdf(x)
        return float(trapezoid(np.exp(lp) * (lp - lq), axis))
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    x = np.column_stack([gx.ravel(), gy.ravel()])
    lp, lq = p.logpdf(x), q.logpdf(x)
    integrand = (np.exp(lp) * (lp - lq)).reshape(points, points)
    return float(trapezoid(trapezoid(integrand, axis, axis=1), axis))


def test_closed_form_values():
    n01 = Gaussian([0.0], [[1.0]])
    assert gaussian_kl(n01, n01) == pytest.approx(0.0, abs=1e-9)
    assert gaussian_kl(n01, Gaussian([1.0], [[1.0]])) == pytest.approx(0.5, abs=1e-12)
    expected = 0.5 * (math.log(4.0) + 0.25 - 1.0)
    assert gaussian_kl(n01, Gaussian([0.0], [[4.0]])) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.31815, abs=1e-5)


def test_closed_form_matches_numerical_integration():
    rng = np.random.default_rng(21)
    for _ in range(50):
        p = Gaussian(rng.normal(0, 1, 1), [[rng.uniform(0.5, 2.0)]])
        q = Gaussian(rng.normal(0, 1, 1), [[rng.uniform(0.5, 2.0)]])
        assert gaussian_kl(p, q) == pytest.approx(_numeric_kl(p, q), abs=1e-4)
    for _ in range(10):
        p = Gaussian(rng.normal(0, 1, 2), _random_spd(rng, 2))
        q = Gaussian(rng.normal(0, 1, 2), _random_spd(rng, 2))
        assert gaussian_kl(p, q) == pytest.approx(_numeric_kl(p, q, points=801), abs=1e-4)


def test_non_negative_and_asymmetric():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        p = Gaussian(rng.normal(0, 3, 3), _random_spd(rng, 3, 0.1, 10.0))
        q = Gaussian(rng.normal(0, 3, 3), _random_spd(rng, 3, 0.1, 10.0))
        assert gaussian_kl(p, q) >= 0.0
    a, b = Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[4.0]])
    assert gaussian_kl(a, b) != pytest.approx(gaussian_kl(b, a))
    assert symmetric_gaussian_kl(a, b) == symmetric_gaussian_kl(b, a)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        gaussian_kl(Gaussian([0.0], [[1.0]]), Gaussian([0.0, 0.0], np.eye(2)))


def test_mixture_approximation_reductions(rng):
    p = random_gmm(rng)
    assert gmm_kl_approx(p, p) == pytest.approx(0.0, abs=1e-12)
    f, g = Gaussian([0.0, 1.0], np.eye(2)), Gaussian([1.0, 0.0], 2 * np.eye(2))
    assert gmm_kl_approx(GMM([1.0], [f]), GMM([1.0], [g])) == gaussian_kl(f, g)


@pytest.mark.slow
def test_mixture_approximation_tracks_monte_carlo():
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        p, q = random_gmm(rng), random_gmm(rng)
        estimate = kl_monte_carlo(p, q, samples=1_000_000, seed=seed)
        assert gmm_kl_approx(p, q) == pytest.approx(estimate, rel=0.2)


def test_monte_carlo_oracle():
    n01, n11 = Gaussian([0.0], [[1.0]]), Gaussian([1.0], [[1.0]])
    p, q = GMM([1.0], [n01]), GMM([1.0], [n11])
    assert abs(kl_monte_carlo(p, p, 100_000)) < 0.01
    assert kl_monte_carlo(p, q, 100_000) == pytest.approx(0.5, abs=0.02)
    wide = GMM([1.0], [Gaussian([0.0], [[4.0]])])
    assert kl_monte_carlo(p, wide, 100_000) != pytest.approx(kl_monte_carlo(wide, p, 100_000), abs=0.1)
    assert kl_monte_carlo(p, q, 1000, seed=3) == kl_monte_carlo(p, q, 1000, seed=3)


def test_color_similarity_symmetric(rng):
    a, b = random_gmm(rng), random_gmm(rng)
    assert color_similarity(a, a) == pytest.approx(0.0, abs=1e-12)
    assert color_similarity(a, b) == color_similarity(b, a)


def _colour_model(seed, subject, instance):
    img, mask = subject_instance(seed, subject, instance, width=64, height=80)
    return em_fit(apply_mask(img, mask).astype(float), 4, FitConfig(seed=0, stride=2)).model


def test_same_subject_scores_lower():
    reference = _colour_model(2, 0, 0)
    same = _colour_model(2, 0, 1)
    other = _colour_model(2, 1, 1)
    assert color_similarity(reference, same) < color_similarity(reference, other)
