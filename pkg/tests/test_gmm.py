# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from conftest import random_gmm
from earlock.earlock.exceptions import FitError, ValidationError
from earlock.earlock.gmm import (
    GMM,
    FitConfig,
    Gaussian,
    dumps_gmm,
    em_fit,
    floor_covariance,
    free_parameters,
    gaussian_pdf,
    gmm_pdf,
    loads_gmm,
    mdl_search,
    mdl_select,
    vq_initialize,
)


def _mixture_sample(rng, means, sigma, n):
    labels = rng.integers(len(means), size=n)
    return np.asarray(means)[labels] + rng.normal(0, sigma, (n, len(means[0])))


# ─── Densities ───────────────────────────────────────────────────────────────

def test_standard_normal_density():
    g = Gaussian([0.0], [[1.0]])
    assert gaussian_pdf(g, [0.0]) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-12)
    assert gaussian_pdf(g, [0.0]) > gaussian_pdf(g, [3.0])


def test_two_dimensional_identity_density():
    g = Gaussian(np.zeros(2), np.eye(2))
    assert gaussian_pdf(g, [0.0, 0.0]) == pytest.approx(1 / (2 * math.pi), rel=1e-12)


def test_gmm_pdf_reductions():
    g = Gaussian([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    x = [0.5, 1.5]
    assert gmm_pdf(GMM([1.0], [g]), x) == pytest.approx(gaussian_pdf(g, x), rel=1e-12)
    assert gmm_pdf(GMM([0.5, 0.5], [g, g]), x) == pytest.approx(gaussian_pdf(g, x), rel=1e-12)


def test_gmm_pdf_weighted_sum():
    a, b = Gaussian([0.0], [[1.0]]), Gaussian([2.0], [[4.0]])
    expected = 0.3 * gaussian_pdf(a, [1.0]) + 0.7 * gaussian_pdf(b, [1.0])
    assert gmm_pdf(GMM([0.3, 0.7], [a, b]), [1.0]) == pytest.approx(expected, rel=1e-12)


@pytest.mark.slow
def test_gmm_pdf_integrates_to_one():
    rng = np.random.default_rng(21)
    model = random_gmm(rng)
    wide = GMM(model.weights, [Gaussian(g.mean, 2.0 * g.covariance) for g in model.gaussians])
    x = wide.sample(rng, 40_000)
    mass = float(np.mean(np.exp(model.logpdf(x) - wide.logpdf(x))))
    assert mass == pytest.approx(1.0, abs=0.02)
    for point in x[:5]:
        assert gmm_pdf(model, point) == pytest.approx(math.exp(model.logpdf(point[None, :])[0]),
                                                      rel=1e-9)


def test_invalid_models_are_rejected():
    with pytest.raises(ValidationError):
        Gaussian([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        GMM([0.6, 0.6], [Gaussian([0.0], [[1.0]])] * 2)
    with pytest.raises(FitError):
        Gaussian([0.0, 0.0], np.zeros((2, 2))).logpdf([0.0, 0.0])


# ─── Codebook ────────────────────────────────────────────────────────────────

def test_vq_two_colour_blobs(rng):
    pixels = _mixture_sample(rng, [(200, 20, 20), (20, 20, 200)], 4.0, 2000)
    model = vq_initialize(pixels, 2, seed=0)
    centres = sorted(model.means.tolist())
    assert np.allclose(centres[0], (20, 20, 200), atol=5)
    assert np.allclose(centres[1], (200, 20, 20), atol=5)


def test_vq_identical_pixels_give_floor_covariance():
    model = vq_initialize(np.tile([10.0, 20.0, 30.0], (50, 1)), 1, covariance_floor=1.0)
    assert np.allclose(model.gaussians[0].mean, (10, 20, 30))
    assert np.allclose(model.gaussians[0].covariance, np.eye(3))


def test_vq_needs_enough_distinct_pixels():
    with pytest.raises(FitError):
        vq_initialize(np.tile([1.0, 2.0, 3.0], (10, 1)), 2)


def test_vq_is_deterministic(rng):
    pixels = _mixture_sample(rng, [(0, 0, 0), (50, 50, 50), (100, 0, 100)], 5.0, 600)
    a, b = vq_initialize(pixels, 3, seed=4), vq_initialize(pixels, 3, seed=4)
    assert np.array_equal(a.means, b.means)


def test_floor_covariance_clips_spectrum():
    out = floor_covariance(np.diag([0.0, 5.0]), 1.0)
    assert np.allclose(np.linalg.eigvalsh(out), [1.0, 5.0])


# ─── EM ──────────────────────────────────────────────────────────────────────

def _assert_monotone(history):
    for before, after in zip(history, history[1:]):
        assert after >= before - 1e-9 * abs(before)


@pytest.mark.slow
def test_em_recovers_separated_means():
    sigma = 3.0
    truth = np.array([(30.0, 30.0, 30.0), (120.0, 40.0, 60.0), (60.0, 150.0, 200.0)])
    successes = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        pixels = _mixture_sample(rng, truth, sigma, 5000)
        fit = em_fit(pixels, 3, FitConfig(seed=seed))
        _assert_monotone(fit.history)
        cost = np.linalg.norm(truth[:, None, :] - fit.model.means[None, :, :], axis=2)
        rows, cols = linear_sum_assignment(cost)
        successes += bool(np.all(cost[rows, cols] <= 0.5 * sigma))
    assert successes >= 19


def test_em_single_component_matches_moments(rng):
    pixels = rng.normal((100, 50, 20), (10, 5, 3), (800, 3))
    fit = em_fit(pixels, 1, FitConfig(covariance_floor=1e-6))
    assert np.allclose(fit.model.means[0], pixels.mean(axis=0))
    assert np.allclose(fit.model.covariances[0], np.cov(pixels, rowvar=False, bias=True))


def test_em_config_validation():
    with pytest.raises(ValidationError):
        FitConfig(max_iterations=0)
    with pytest.raises(ValidationError):
        FitConfig(covariance_floor=0.0)


def test_em_monotone_with_collapsing_data(rng):
    pixels = np.vstack([np.tile([5.0, 5.0, 5.0], (200, 1)), rng.normal(100, 10, (200, 3))])
    fit = em_fit(pixels, 4, FitConfig(seed=1))
    _assert_monotone(fit.history)
    assert all(np.all(np.linalg.eigvalsh(c) >= 1.0 - 1e-9) for c in fit.model.covariances)


# ─── MDL ─────────────────────────────────────────────────────────────────────

def test_free_parameter_count():
    assert free_parameters(3, 3) == 2 + 9 + 18


@pytest.mark.slow
def test_mdl_picks_four_components():
    truth = [(20, 20, 20), (200, 30, 30), (30, 200, 30), (30, 30, 200)]
    hits = 0
    for seed in range(50):
        rng = np.random.default_rng(100 + seed)
        pixels = _mixture_sample(rng, truth, 6.0, 1200)
        hits += mdl_select(pixels, (3, 6), FitConfig(seed=seed, max_iterations=100)).k == 4
    assert hits >= 40


def test_mdl_single_blob_takes_range_minimum(rng):
    pixels = rng.normal((120, 90, 60), 8.0, (1500, 3))
    assert mdl_select(pixels, (3, 6), FitConfig(max_iterations=60)).k == 3


def test_mdl_search_scores_every_order(rng):
    pixels = rng.normal(0, 10, (300, 3))
    candidates = mdl_search(pixels, (3, 5), FitConfig(max_iterations=20))
    assert [c.k for c in candidates] == [3, 4, 5]
    with pytest.raises(ValidationError):
        mdl_search(pixels, (0, 3))


def test_gmm_text_round_trip_is_exact(rng):
    model = em_fit(rng.normal(0, 20, (400, 3)), 3, FitConfig(max_iterations=10)).model
    again = loads_gmm(dumps_gmm(model))
    assert np.array_equal(again.weights, model.weights)
    assert np.array_equal(again.covariances, model.covariances)
