import numpy as np
import pytest

from ellest.ellitope import Ellitope, UnitBox, make_euclidean_ball
from ellest.design import DesignSpec


def random_psd_forms(n, K, rng, rank=None):
    forms = []
    for _ in range(K):
        G = rng.standard_normal((n, rank or max(1, n // 2)))
        forms.append(G @ G.T / n)
    forms[0] = forms[0] + 0.1 * np.eye(n)
    return forms


def random_ellitope(n, K, rng):
    return Ellitope(forms=random_psd_forms(n, K, rng), params=UnitBox(K))


def random_spec(n, nu, K, L, rng, sigma=0.2, eps=0.05):
    A = rng.standard_normal((n, n)) + 3.0 * np.eye(n)
    B = rng.standard_normal((nu, n))
    return DesignSpec(A, B, sigma, eps, random_ellitope(n, K, rng),
                      random_ellitope(nu, L, rng))


def l2_spec(n, nu, K, rng, sigma=0.2, eps=0.05):
    """Spec whose norm polar is the single-form Euclidean ball (the shape
    required by the reduced chain)."""
    A = rng.standard_normal((n, n)) + 3.0 * np.eye(n)
    B = rng.standard_normal((nu, n)) if nu != n else np.eye(n)
    return DesignSpec(A, B, sigma, eps, random_ellitope(n, K, rng),
                      make_euclidean_ball(nu))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
