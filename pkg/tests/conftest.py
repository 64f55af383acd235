# -*- coding: utf-8 -*-
import numpy as np
import pytest

from earlock.earlock.config import RunConfig
from earlock.earlock.gmm import GMM, Gaussian
from earlock.earlock.imaging import ColorImage
from earlock.earlock.synthetic import generate_dataset, synthetic_texture

# keeps EM cheap enough for the end-to-end runs
FAST_CONFIG = dict(stride=3, max_iterations=80, tolerance=1e-5)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def fast_config():
    return RunConfig(**FAST_CONFIG)


@pytest.fixture(scope="session")
def texture():
    return synthetic_texture(seed=7, width=128, height=128)


@pytest.fixture
def two_blob_image():
    """Left half reddish, right half bluish, with a little seeded noise."""
    rng = np.random.default_rng(3)
    px = np.zeros((40, 40, 3))
    px[:, :20] = (200, 20, 20)
    px[:, 20:] = (20, 20, 200)
    px += rng.normal(0, 3, px.shape)
    return ColorImage(np.clip(np.round(px), 0, 255).astype(np.uint8))


def random_gmm(rng, k=3, d=3, spread=40.0, scale=3.0) -> GMM:
    """Well-separated random mixture for oracle comparisons."""
    gaussians = []
    for j in range(k):
        a = rng.normal(0, 1, (d, d))
        cov = scale ** 2 * (a @ a.T / d + np.eye(d))
        gaussians.append(Gaussian(rng.normal(0, 1, d) + spread * j * np.ones(d) / np.sqrt(d), cov))
    weights = rng.dirichlet(np.full(k, 5.0))
    return GMM(weights, gaussians)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ears")
    generate_dataset(root, subjects=4, seed=11)
    return root
