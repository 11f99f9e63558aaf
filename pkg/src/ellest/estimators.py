"""Scikit-learn style front end.

`fit` consumes the forward operator and designs the contrast matrix (the
expensive optimization); `predict` applies the resulting estimator to a
batch of observations.  Hyperparameters (oracle complexity, bundle size,
target ratio, ...) are ordinary constructor parameters, so the estimators
compose with model-selection tooling via get_params/set_params.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .ctl import CtlParams, make_setup, run_ctl
from .design import (DesignSpec, extract_contrast, poly_to_linear,
                     reduced_ctl_problem, reduced_solution_lift)
from .ellitope import Ellitope, make_euclidean_ball
from .recover import polyhedral_apply_batch


def _as_ellitope(obj):
    if isinstance(obj, Ellitope):
        return obj
    if isinstance(obj, dict):
        return Ellitope.from_dict(obj)
    raise TypeError("signal_set must be an Ellitope or its dict form")


class _DesignMixin:
    def _design(self, A):
        A = check_array(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square (nonsingular observation map)")
        X = _as_ellitope(self.signal_set)
        B = np.eye(A.shape[0]) if self.linear_image is None else \
            check_array(self.linear_image, dtype=float)
        spec = DesignSpec(A, B, self.sigma, self.eps, X,
                          make_euclidean_ball(B.shape[0]))
        objective, poly = reduced_ctl_problem(spec, rho=self.rho)
        params = CtlParams(tau=self.tau, rho=self.rho,
                           target_ratio=self.target_ratio,
                           max_calls=self.max_calls)
        res = run_ctl(objective, poly, params=params,
                      setup=make_setup(self.proximal_setup, poly.dim))
        point, Theta, _ = reduced_solution_lift(res.x_hat, spec)
        return spec, res, point, Theta

    def get_metadata_routing(self):  # pragma: no cover - sklearn >= 1.3 hook
        raise NotImplementedError


class PolyhedralEstimator(BaseEstimator, _DesignMixin):
    """Polyhedral estimate with a near-optimal contrast matrix.

    Parameters
    ----------
    signal_set : Ellitope (or its dict form) the unknown signal belongs to.
    sigma : float, noise level of the observation model.
    eps : float, reliability tolerance of the certified risk bound.
    linear_image : optional (nu, n) array; identity recovers the signal itself.
    rho, tau : oracle complexity and bundle size of the design solver.
    proximal_setup : "euclid" or "l1l2".
    target_ratio : certified upper/lower ratio at which the design stops.
    max_calls : oracle budget of the design solver.

    Attributes (after fit): spec_, contrast_, risk_bound_, risk_lower_,
    solver_result_.
    """

    def __init__(self, signal_set=None, sigma=0.1, eps=0.05,
                 linear_image=None, rho=10, tau=10, proximal_setup="euclid",
                 target_ratio=1.1, max_calls=1000):
        self.signal_set = signal_set
        self.sigma = sigma
        self.eps = eps
        self.linear_image = linear_image
        self.rho = rho
        self.tau = tau
        self.proximal_setup = proximal_setup
        self.target_ratio = target_ratio
        self.max_calls = max_calls

    def fit(self, A, y=None):
        spec, res, _, Theta = self._design(A)
        H, _ = extract_contrast(Theta, spec)
        self.spec_ = spec
        self.contrast_ = H
        self.risk_bound_ = 4.0 * math.sqrt(res.upper)
        self.risk_lower_ = 4.0 * math.sqrt(max(res.lower, 0.0))
        self.solver_result_ = res
        return self

    def predict(self, Omega):
        check_is_fitted(self, "contrast_")
        Omega = check_array(np.atleast_2d(Omega), dtype=float)
        spec = self.spec_
        if Omega.shape[1] != spec.m:
            raise ValueError("observation dimension mismatch")
        _, W, _ = polyhedral_apply_batch(self.contrast_, Omega, spec.X,
                                         spec.A, B=spec.B)
        return W


class MinimaxLinearEstimator(BaseEstimator, _DesignMixin):
    """Linear estimate obtained by converting the polyhedral design.

    Shares the constructor parameters of PolyhedralEstimator; after fit the
    contrast_ attribute holds the (m, nu) linear contrast and risk_bound_
    the certified eps-risk of the linear estimate.
    """

    def __init__(self, signal_set=None, sigma=0.1, eps=0.05,
                 linear_image=None, rho=10, tau=10, proximal_setup="euclid",
                 target_ratio=1.1, max_calls=1000):
        self.signal_set = signal_set
        self.sigma = sigma
        self.eps = eps
        self.linear_image = linear_image
        self.rho = rho
        self.tau = tau
        self.proximal_setup = proximal_setup
        self.target_ratio = target_ratio
        self.max_calls = max_calls

    def fit(self, A, y=None):
        spec, res, point, Theta = self._design(A)
        point2, H, Theta, _ = poly_to_linear(point, Theta, spec)
        kappa = 1.0 + math.sqrt(2.0 * math.log(1.0 / spec.eps))
        bound = (spec.Bstar.support(point2.lam) + spec.X.support(point2.mu)
                 + spec.sigma ** 2 * kappa ** 2 * float(np.trace(Theta)))
        self.spec_ = spec
        self.contrast_ = H
        self.risk_bound_ = float(bound)
        self.solver_result_ = res
        return self

    def predict(self, Omega):
        check_is_fitted(self, "contrast_")
        Omega = check_array(np.atleast_2d(Omega), dtype=float)
        if Omega.shape[1] != self.contrast_.shape[0]:
            raise ValueError("observation dimension mismatch")
        return Omega @ self.contrast_
