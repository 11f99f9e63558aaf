import numpy as np
import pytest
from sklearn.base import clone

from ellest.estimators import MinimaxLinearEstimator, PolyhedralEstimator
from ellest.ellitope import make_block_weighted
from ellest.harness import ExperimentConfig, gen_instance


@pytest.fixture(scope="module")
def problem():
    cfg = ExperimentConfig(n=12, K=3, sigma=0.1, eps=0.05, seed=2,
                           rho=3, tau=4, max_calls=400)
    spec = gen_instance(cfg)
    return spec, make_block_weighted(12, 3, 1.0)


class TestSklearnApi:
    def test_get_set_params(self, problem):
        _, X = problem
        est = PolyhedralEstimator(signal_set=X, rho=5)
        params = est.get_params()
        assert params["rho"] == 5
        est.set_params(tau=7)
        assert est.tau == 7

    def test_clone(self, problem):
        _, X = problem
        est = PolyhedralEstimator(signal_set=X, rho=5, tau=3)
        est2 = clone(est)
        assert est2.rho == 5 and est2.tau == 3

    def test_unfitted_predict_raises(self, problem):
        _, X = problem
        with pytest.raises(Exception):
            PolyhedralEstimator(signal_set=X).predict(np.zeros((1, 12)))


class TestPolyhedral:
    def test_fit_predict(self, problem):
        spec, X = problem
        est = PolyhedralEstimator(signal_set=X, sigma=0.1, eps=0.05,
                                  rho=3, tau=4, max_calls=400)
        est.fit(spec.A)
        assert est.contrast_.shape == (12, 12)
        assert est.risk_bound_ >= est.risk_lower_ > 0
        rng = np.random.default_rng(0)
        u = rng.standard_normal(12)
        x0 = 0.9 * u / np.sqrt(X.quad_values(u).max())
        Omega = (spec.A @ x0)[None, :]
        W = est.predict(Omega)
        assert W.shape == (1, 12)
        assert np.linalg.norm(W[0] - x0) <= 0.15

    def test_signal_set_dict_accepted(self, problem):
        spec, X = problem
        est = PolyhedralEstimator(signal_set=X.to_dict(), rho=2, tau=3,
                                  max_calls=400)
        est.fit(spec.A)
        assert hasattr(est, "contrast_")

    def test_requires_square_A(self, problem):
        _, X = problem
        with pytest.raises(ValueError):
            PolyhedralEstimator(signal_set=X).fit(np.ones((3, 4)))

    def test_predict_dim_checked(self, problem):
        spec, X = problem
        est = PolyhedralEstimator(signal_set=X, rho=2, tau=3,
                                  max_calls=400).fit(spec.A)
        with pytest.raises(ValueError):
            est.predict(np.zeros((2, 5)))


class TestLinear:
    def test_fit_predict_matches_contrast(self, problem):
        spec, X = problem
        est = MinimaxLinearEstimator(signal_set=X, sigma=0.1, eps=0.05,
                                     rho=3, tau=4, max_calls=400)
        est.fit(spec.A)
        assert est.contrast_.shape == (12, 12)
        assert est.risk_bound_ > 0
        rng = np.random.default_rng(1)
        Omega = rng.standard_normal((5, 12))
        np.testing.assert_allclose(est.predict(Omega),
                                   Omega @ est.contrast_)

    def test_linear_bound_looser_than_polyhedral(self, problem):
        # the conversion gives up at most a factor on the certified bound;
        # both must still be positive and finite
        spec, X = problem
        p = PolyhedralEstimator(signal_set=X, rho=3, tau=4,
                                max_calls=400).fit(spec.A)
        l = MinimaxLinearEstimator(signal_set=X, rho=3, tau=4,
                                   max_calls=400).fit(spec.A)
        assert np.isfinite(l.risk_bound_) and l.risk_bound_ > 0
        assert np.isfinite(p.risk_bound_) and p.risk_bound_ > 0
