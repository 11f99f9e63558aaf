"""Estimate-design problem data and the matrix-variable-free objective:
partial minimization over the Gram variable, contrast extraction,
polyhedral-to-linear conversion, quantile bounds for Gaussian quadratic
forms, the Euclidean-norm reduction chain and the singular-forward-map
variant."""

import math
from collections import namedtuple

import numpy as np

from .symlin import (assemble_linear_lmi, eig_sorted, min_eig, polar,
                     pos_part, sqrt_psd, trace_pos)


class DegeneratePointError(RuntimeError):
    """Raised when the norm-side weight matrix is numerically singular."""


class ZNotNegativeDefiniteError(RuntimeError):
    """Raised by the singular-map objective when the trailing block is not
    negative definite; the caller must increase the signal-side weights."""


def chi_factor(eps, m):
    """Normalization factor chi = sqrt(2 ln(2m/eps)) making
    Prob{sigma ||H^T xi||_inf > 1} <= eps for unit-norm columns of sigma*H."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if m < 1:
        raise ValueError("m must be >= 1")
    return math.sqrt(2.0 * math.log(2.0 * m / eps))


class DualPoint:
    """Pair of dual weight vectors (lam for the norm side, mu for the
    signal side)."""

    __slots__ = ("lam", "mu")

    def __init__(self, lam, mu):
        self.lam = np.atleast_1d(np.asarray(lam, dtype=float))
        self.mu = np.atleast_1d(np.asarray(mu, dtype=float))

    @property
    def z(self):
        return np.concatenate([self.lam, self.mu])

    @classmethod
    def from_z(cls, z, nlam):
        z = np.asarray(z, dtype=float)
        return cls(z[:nlam], z[nlam:])

    def __repr__(self):
        return f"DualPoint(lam={self.lam!r}, mu={self.mu!r})"


class DesignSpec:
    """Immutable problem data for contrast design.

    A must be square and invertible (the singular case goes through
    SvdDesignSpec).  chi and gamma = sigma^2 chi^2 are derived once.
    """

    def __init__(self, A, B, sigma, eps, X, Bstar, cond_limit=1e10):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square (nonsingular observation map)")
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        n = A.shape[0]
        if B.shape[1] != n:
            raise ValueError("B column count must match the signal dimension")
        if X.dim != n:
            raise ValueError("signal ellitope dimension mismatch")
        if Bstar.dim != B.shape[0]:
            raise ValueError("norm-polar ellitope dimension mismatch")
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] <= 0 or sv[0] / sv[-1] > cond_limit:
            raise ValueError(
                f"A is too ill-conditioned (cond ~ {sv[0] / max(sv[-1], 1e-300):.3e})")
        self.A = A
        self.Ainv = np.linalg.inv(A)
        self.condA = float(sv[0] / sv[-1])
        self.B = B
        self.sigma = float(sigma)
        self.eps = float(eps)
        self.X = X
        self.Bstar = Bstar
        self.chi = chi_factor(eps, n)
        self.gamma = self.sigma ** 2 * self.chi ** 2

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def nu(self):
        return self.B.shape[0]

    @property
    def K(self):
        return self.X.nforms

    @property
    def L(self):
        return self.Bstar.nforms


def _lam_weight_matrix(lam, spec):
    Lam = spec.Bstar.weighted_sum(lam)
    vals = np.linalg.eigvalsh(Lam)
    if vals[0] <= 0 or vals[-1] / vals[0] > 1e12:
        raise DegeneratePointError(
            "norm-side weight matrix is numerically singular; "
            "increase the lower bound on lam")
    return Lam


def frak_t(point, spec):
    """The matrix whose positive eigenvalues drive the design objective:
    A^{-T} [ B^T (sum_l lam_l S_l)^{-1} B / 4 - sum_k mu_k T_k ] A^{-1}."""
    Lam = _lam_weight_matrix(point.lam, spec)
    inner = 0.25 * spec.B.T @ np.linalg.solve(Lam, spec.B)
    inner -= spec.X.weighted_sum(point.mu)
    M = spec.Ainv.T @ inner @ spec.Ainv
    return 0.5 * (M + M.T)


def upsilon(point, spec):
    """Full design objective: support terms plus the weighted sum of
    positive eigenvalues."""
    val = spec.Bstar.support(point.lam) + spec.X.support(point.mu)
    return val + spec.gamma * trace_pos(frak_t(point, spec))


def recover_theta(point, spec):
    """Optimal Gram variable for a given dual point: the spectral positive
    part, which is the trace-minimal matrix dominating both 0 and the
    design matrix."""
    return pos_part(frak_t(point, spec))


def extract_contrast(Theta, spec):
    """Contrast matrix from the Gram variable: columns are the (scaled)
    eigenvectors, so every column has norm exactly 1/(sigma*chi)."""
    Theta = 0.5 * (np.asarray(Theta, dtype=float) + np.asarray(Theta, dtype=float).T)
    scale = np.abs(Theta).max() if Theta.size else 0.0
    if min_eig(Theta) < -1e-8 * max(scale, 1.0):
        raise ValueError("Theta must be positive semidefinite")
    U, v = eig_sorted(Theta)
    sc = spec.sigma * spec.chi
    H = U / sc
    ups = sc ** 2 * np.maximum(v, 0.0)
    return H, ups


def poly_to_linear(point, Theta, spec, bump_tol=1e-8):
    """Convert a feasible polyhedral design (lam, mu, Theta) into a feasible
    linear design (2*lam, mu, H, Theta).

    Zero entries of mu are bumped to a tiny positive value first (this
    preserves feasibility).  Raises DegeneratePointError when the weight
    matrices still fail to be positive definite.
    """
    lam = np.asarray(point.lam, dtype=float)
    mu = np.asarray(point.mu, dtype=float).copy()
    if np.any(mu <= 0.0):
        bump = bump_tol * max(mu.max(), 1.0)
        mu[mu <= 0.0] = bump
    Lam = spec.Bstar.weighted_sum(lam)
    Xi = spec.X.weighted_sum(mu)
    for Mname, M in (("lam", Lam), ("mu", Xi)):
        if np.linalg.eigvalsh(M)[0] <= 0:
            raise DegeneratePointError(
                f"weight matrix for {Mname} is not positive definite; "
                "regularize the dual point before converting")
    Theta = 0.5 * (np.asarray(Theta, dtype=float) + np.asarray(Theta, dtype=float).T)
    Th_half = sqrt_psd(Theta)

    Ux, wx = eig_sorted(Xi)
    Xi_mhalf = (Ux / np.sqrt(wx)) @ Ux.T
    Ul, wl = eig_sorted(Lam)
    Lam_half = (Ul * np.sqrt(wl)) @ Ul.T
    Lam_mhalf = (Ul / np.sqrt(wl)) @ Ul.T

    F = Th_half @ spec.A @ Xi_mhalf
    U, S = polar(F)
    W = 0.5 * Lam_mhalf @ spec.B @ Xi_mhalf
    Q = W @ np.linalg.inv(S + np.eye(S.shape[0]))
    H = 2.0 * Th_half @ U @ Q.T @ Lam_half
    return DualPoint(2.0 * lam, mu), H, Theta, Q


def scale_for_eps_risk(point, Theta, eps):
    """Rescale a feasible linear design so its objective certifies the
    eps-risk: (kappa*lam, mu/kappa, Theta/kappa) with
    kappa = 1 + sqrt(2 ln(1/eps))."""
    kappa = 1.0 + math.sqrt(2.0 * math.log(1.0 / eps))
    return DualPoint(kappa * point.lam, point.mu / kappa), Theta / kappa, kappa


def _golden_min(fun, lo, hi, reltol=1e-8):
    # golden section on the log-scaled bracket; fun assumed unimodal there
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(math.exp(c)), fun(math.exp(d))
    while (b - a) > reltol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(math.exp(d))
    xm = math.exp(0.5 * (a + b))
    return xm, fun(xm)

QuantileBounds = namedtuple("QuantileBounds", "psi psi_prime psi_tilde psi_bar")


def quantile_bounds(Theta, eps):
    """Four nested upper bounds on the (1-eps)-quantile of the Gaussian
    quadratic form xi^T Theta xi, from tightest (log-det Chernoff) to
    loosest (kappa^2 trace)."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    Theta = 0.5 * (np.asarray(Theta, dtype=float) + np.asarray(Theta, dtype=float).T)
    v = np.linalg.eigvalsh(Theta)
    scale = max(np.abs(v).max() if v.size else 0.0, 1.0)
    if v.min() < -1e-9 * scale:
        raise ValueError("Theta must be positive semidefinite")
    v = np.maximum(v, 0.0)
    tr = float(v.sum())
    lmax = float(v.max()) if v.size else 0.0
    fro = float(np.sqrt((v ** 2).sum()))
    lninv = math.log(1.0 / eps)
    kappa = 1.0 + math.sqrt(2.0 * lninv)
    psi_bar = kappa ** 2 * tr
    psi_tilde = tr + 2.0 * fro * math.sqrt(lninv) + 2.0 * lmax * lninv
    if tr <= 0.0:
        return QuantileBounds(0.0, 0.0, 0.0, 0.0)

    def f_psi(a):
        return -0.5 * a * float(np.log1p(-2.0 * v / a).sum()) + a * lninv

    def f_psip(a):
        return tr + float((v ** 2 / (a - 2.0 * v)).sum()) + a * lninv

    lo = 2.0 * lmax * (1.0 + 1e-9)
    hi = 2.0 * lmax + 2.0 * tr * lninv * 1e3
    a_p, _ = _golden_min(f_psip, lo, hi)
    a_0, _ = _golden_min(f_psi, lo, hi)
    # closed-form candidate that realizes the Frobenius-norm bound; keeps
    # the nesting exact even with inexact 1-D minimization
    a_t = max(2.0 * lmax + fro / math.sqrt(lninv), lo)
    psi_prime = min(f_psip(a_p), f_psip(a_t))
    psi_val = min(f_psi(a_0), f_psi(a_p), f_psi(a_t))
    tol = 1e-9 * max(psi_bar, 1.0)
    if not (psi_val <= psi_prime + tol
            and psi_prime <= psi_tilde + tol
            and psi_tilde <= psi_bar + tol):
        raise AssertionError("quantile bound ordering violated")
    return QuantileBounds(psi_val, psi_prime, psi_tilde, psi_bar)


# ---------------------------------------------------------------------------
# Euclidean-norm reduction chain
# ---------------------------------------------------------------------------

def _check_l2_chain(spec):
    if spec.L != 1 or spec.Bstar.params.kind != "unit_box":
        raise ValueError("the reduced chain needs a single-form norm polar "
                         "with box parameters (Euclidean-type error norm)")


def reduced_frak_t(mu_bar, spec):
    """Matrix inside the reduced objective:
    A^{-T} [ B^T S_1^{-1} B - sum_k mu_k T_k ] A^{-1}."""
    _check_l2_chain(spec)
    S1 = spec.Bstar.form(0)
    mu_bar = np.asarray(mu_bar, dtype=float)
    inner = spec.B.T @ np.linalg.solve(S1, spec.B) - spec.X.weighted_sum(mu_bar)
    M = spec.Ainv.T @ inner @ spec.Ainv
    return 0.5 * (M + M.T)


def reduced_l2_objective(mu_bar, spec):
    """Objective of the Euclidean-case scalar-free problem:
    sum_k mu_k + gamma * sum_i pos(eigenvalues of reduced matrix)."""
    mu_bar = np.asarray(mu_bar, dtype=float)
    return float(spec.X.support(mu_bar)
                 + spec.gamma * trace_pos(reduced_frak_t(mu_bar, spec)))


def l2_lift(mu_bar, Theta_bar, spec):
    """Lift a feasible point of the scale-normalized Euclidean problem to a
    feasible triple of the full polyhedral design problem.

    Returns (lam_vec, mu, Theta, objective) with objective = 4 sqrt(F)."""
    _check_l2_chain(spec)
    mu_bar = np.asarray(mu_bar, dtype=float)
    F = float(spec.X.support(mu_bar) + spec.gamma * np.trace(Theta_bar))
    if F <= 0.0:
        raise ValueError("lift undefined for a nonpositive objective value")
    lam = math.sqrt(F)
    return (np.array([lam]), mu_bar / lam, np.asarray(Theta_bar) / lam,
            4.0 * math.sqrt(F))


def reduced_solution_lift(mu_red, spec):
    """From a point of the reduced problem to a feasible polyhedral triple.

    The reduced problem carries a factor 4 relative to the normalized
    problem (its weights are 4x and its optimum 4x), so divide by 4 before
    rebuilding the Gram variable and lifting.
    """
    mu2 = np.asarray(mu_red, dtype=float) / 4.0
    Theta2 = pos_part(0.25 * reduced_frak_t(mu_red, spec))
    lam_vec, mu, Theta, obj = l2_lift(mu2, Theta2, spec)
    return DualPoint(lam_vec, mu), Theta, obj


# ---------------------------------------------------------------------------
# Singular observation map
# ---------------------------------------------------------------------------

class SvdDesignSpec:
    """Design data for a possibly rank-deficient forward map A (m x n,
    m <= n, full row rank).  Carries the full SVD A = U diag(s) V^T."""

    def __init__(self, A, B, sigma, eps, X, Bstar):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        m, n = A.shape
        if m > n:
            raise ValueError("expected m <= n (project observations first)")
        U, s, Vt = np.linalg.svd(A, full_matrices=True)
        if s[-1] <= 1e-12 * max(s[0], 1.0):
            raise ValueError("A must have full row rank")
        self.A, self.B = A, B
        self.U, self.svals, self.V = U, s, Vt.T
        self.X, self.Bstar = X, Bstar
        self.sigma, self.eps = float(sigma), float(eps)
        self.chi = chi_factor(eps, m)
        self.gamma = self.sigma ** 2 * self.chi ** 2
        self.m, self.n = m, n
        self.d = n - m


def singular_objective(point, sspec, tol=1e-12):
    """Design objective for a singular forward map, via the Schur
    complement of the trailing block of the rotated design matrix."""
    Lam = sspec.Bstar.weighted_sum(point.lam)
    vals = np.linalg.eigvalsh(Lam)
    if vals[0] <= 0:
        raise DegeneratePointError("norm-side weight matrix must be positive definite")
    inner = 0.25 * sspec.B.T @ np.linalg.solve(Lam, sspec.B)
    inner -= sspec.X.weighted_sum(point.mu)
    scaling = np.concatenate([1.0 / sspec.svals, np.ones(sspec.d)])
    C = scaling[:, None] * (sspec.V.T @ inner @ sspec.V) * scaling[None, :]
    C = 0.5 * (C + C.T)
    m, d = sspec.m, sspec.d
    Xb = C[:m, :m]
    if d > 0:
        Y = C[:m, m:]
        Z = C[m:, m:]
        zmax = np.linalg.eigvalsh(Z)[-1]
        if zmax >= -tol * max(1.0, np.abs(C).max()):
            raise ZNotNegativeDefiniteError(
                "trailing block is not negative definite; increase mu")
        W = Xb + Y @ np.linalg.solve(Z, Y.T)
        W = 0.5 * (W + W.T)
    else:
        W = Xb
    return float(sspec.Bstar.support(point.lam) + sspec.X.support(point.mu)
                 + sspec.gamma * trace_pos(W))


# ---------------------------------------------------------------------------
# CTL problem factories
# ---------------------------------------------------------------------------

def _cross_sum_forms(forms_a, forms_b, dim_a, dim_b):
    out = []
    for ca, ba in forms_a:
        for cb, bb in forms_b:
            c = np.concatenate([ca, cb])
            out.append((c, ba + bb))
    assert all(f[0].shape == (dim_a + dim_b,) for f in out)
    return out


def full_ctl_problem(spec, rho, delta=1e-6, R=None):
    """Bundle-solver data (objective, feasible polytope) for the full
    design problem over stacked weights [lam; mu]."""
    from .ctl import CompositeObjective
    from .oracle import build_model, true_f
    from .subsolve import Polytope

    psi_S = spec.Bstar.params.affine_support_forms()
    psi_T = spec.X.params.affine_support_forms()
    if psi_S is None or psi_T is None:
        raise ValueError("parameter set has no affine support representation; "
                         "solver path unavailable")
    L, K = spec.L, spec.K
    psi_forms = _cross_sum_forms(psi_S, psi_T, L, K)
    if R is None:
        p0 = DualPoint(np.ones(L), np.ones(K))
        R = 10.0 * upsilon(p0, spec) / min(1.0, spec.gamma)

    def oracle_fn(z):
        return build_model(DualPoint.from_z(z, L), rho, spec)

    def true_f_fn(z):
        return true_f(DualPoint.from_z(z, L), spec)

    objective = CompositeObjective(psi_forms, oracle_fn, true_f_fn)
    lower = np.concatenate([np.full(L, delta), np.zeros(K)])
    return objective, Polytope(lower, R)


def reduced_ctl_problem(spec, rho, R=None):
    """Bundle-solver data for the Euclidean-case reduced problem over the
    signal-side weights only."""
    from .ctl import CompositeObjective
    from .oracle import build_reduced_model, reduced_true_f
    from .subsolve import Polytope

    _check_l2_chain(spec)
    psi_T = spec.X.params.affine_support_forms()
    if psi_T is None:
        raise ValueError("signal parameter set has no affine support "
                         "representation; solver path unavailable")
    K = spec.K
    if R is None:
        R = 10.0 * reduced_l2_objective(np.ones(K), spec) / min(1.0, spec.gamma)

    def oracle_fn(z):
        return build_reduced_model(z, rho, spec)

    def true_f_fn(z):
        return reduced_true_f(z, spec)

    objective = CompositeObjective(psi_T, oracle_fn, true_f_fn)
    return objective, Polytope(np.zeros(K), R)
