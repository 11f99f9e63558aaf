"""Spectral oracle: at a query point, builds a piecewise-linear minorant of
the sum-of-positive-eigenvalues term that is exact at the query point.

The construction linearizes the inverse-weight term at the query point
(matrix-convexity makes the linearization a semidefinite underestimate),
rotates into the eigenbasis of the design matrix at the anchor, and keeps
the diagonal, which majorizes every symmetric convex function of the
spectrum from below.  The rho leading diagonal entries become individual
affine pieces; the tail is collapsed into one aggregated piece.
"""

import numpy as np

from .design import DualPoint, frak_t, reduced_frak_t, _lam_weight_matrix
from .symlin import eig_sorted, trace_pos


class AffineForm:
    """alpha(lam, mu) = coeff_lam . lam + coeff_mu . mu + constant."""

    __slots__ = ("coeff_lam", "coeff_mu", "constant")

    def __init__(self, coeff_lam, coeff_mu, constant):
        self.coeff_lam = np.asarray(coeff_lam, dtype=float)
        self.coeff_mu = np.asarray(coeff_mu, dtype=float)
        self.constant = float(constant)
        if not (np.all(np.isfinite(self.coeff_lam))
                and np.all(np.isfinite(self.coeff_mu))
                and np.isfinite(self.constant)):
            raise ValueError("affine form has non-finite entries")

    @property
    def coeff_z(self):
        return np.concatenate([self.coeff_lam, self.coeff_mu])

    def value_z(self, z):
        return float(self.coeff_z @ z + self.constant)


class PiecewiseModel:
    """scale * sum_i max(alpha_i(x), 0) anchored at a query point where it
    reproduces the true spectral term."""

    def __init__(self, forms, scale, anchor_z, anchor_value):
        self.forms = list(forms)
        self.scale = float(scale)
        self.anchor_z = np.asarray(anchor_z, dtype=float)
        self.anchor_value = float(anchor_value)
        if self.forms:
            self._C = np.array([f.coeff_z for f in self.forms])
            self._c0 = np.array([f.constant for f in self.forms])
        else:
            self._C = np.zeros((0, self.anchor_z.shape[0]))
            self._c0 = np.zeros(0)

    def value_z(self, z):
        vals = self._C @ np.asarray(z, dtype=float) + self._c0
        return self.scale * float(np.maximum(vals, 0.0).sum())

    def value(self, point):
        return self.value_z(point.z)

    def coeff_dual_norms(self, ord=2):
        """Per-form dual norms of the coefficient vectors (for Lipschitz
        estimates)."""
        if len(self.forms) == 0:
            return np.zeros(0)
        return np.linalg.norm(self._C, ord=ord, axis=1)


def eval_model(model, point):
    """Model value at a dual point (exact arithmetic over stored forms)."""
    if isinstance(point, DualPoint):
        return model.value_z(point.z)
    return model.value_z(np.asarray(point, dtype=float))


def true_f(point, spec):
    """Reference value of the spectral term, via a fresh eigendecomposition."""
    return spec.gamma * trace_pos(frak_t(point, spec))


def reduced_true_f(mu_bar, spec):
    return spec.gamma * trace_pos(reduced_frak_t(mu_bar, spec))


def _group_forms(d_forms, anchor_vals, rho):
    """Step-3 grouping: keep the leading rho-1 diagonal forms, aggregate the
    tail keeping only forms nonnegative at the anchor."""
    n = len(d_forms)
    rho = max(1, min(int(rho), n))
    kept = list(d_forms[:rho - 1])
    tail_cl = np.zeros_like(d_forms[0].coeff_lam)
    tail_cm = np.zeros_like(d_forms[0].coeff_mu)
    tail_c0 = 0.0
    for i in range(rho - 1, n):
        if anchor_vals[i] >= 0.0:
            tail_cl = tail_cl + d_forms[i].coeff_lam
            tail_cm = tail_cm + d_forms[i].coeff_mu
            tail_c0 += d_forms[i].constant
    kept.append(AffineForm(tail_cl, tail_cm, tail_c0))
    return kept


def _finalize_model(forms, scale, anchor_z, vals, check_tol=1e-7):
    f_value = scale * float(np.maximum(vals, 0.0).sum())
    model = PiecewiseModel(forms, scale, anchor_z, f_value)
    tol = check_tol * max(1.0, scale * np.abs(vals).sum())
    got = model.value_z(anchor_z)
    if abs(got - f_value) > tol:
        raise AssertionError(
            f"oracle model is inexact at its anchor: {got} vs {f_value}")
    return f_value, model


def build_model(point, rho, spec):
    """Oracle for the full design objective over (lam, mu).

    Returns (true spectral value at the point, minorant model).
    """
    lam_bar, mu_bar = point.lam, point.mu
    Lam = _lam_weight_matrix(lam_bar, spec)
    Tfrak = frak_t(point, spec)
    Ubar, vals = eig_sorted(Tfrak)

    M = spec.Ainv @ Ubar                       # columns m_i
    N = np.linalg.solve(Lam, spec.B @ M)       # columns n_i
    n = spec.n

    # constant_i = n_i^T Lam n_i / 2, lam coeff = -n_i^T S_l n_i / 4,
    # mu coeff = -m_i^T T_k m_i
    const = 0.5 * np.einsum("ij,ij->j", N, Lam @ N)
    lam_coeff = -0.25 * spec.Bstar.quad_values(N)      # (L, n)
    mu_coeff = -spec.X.quad_values(M)                  # (K, n)

    d_forms = [AffineForm(lam_coeff[:, i], mu_coeff[:, i], const[i])
               for i in range(n)]

    tol = 1e-7 * max(1.0, np.abs(vals).sum())
    anchor_diag = lam_coeff.T @ lam_bar + mu_coeff.T @ mu_bar + const
    if np.abs(anchor_diag - vals).max() > tol:
        raise AssertionError("diagonal forms disagree with the eigenvalues "
                             "at the query point")

    forms = _group_forms(d_forms, vals, rho)
    return _finalize_model(forms, spec.gamma, point.z, vals)


def build_reduced_model(mu_bar, rho, spec):
    """Oracle for the Euclidean-case reduced objective over mu only.  The
    matrix map is affine in mu, so no linearization step is needed."""
    mu_bar = np.asarray(mu_bar, dtype=float)
    Tred = reduced_frak_t(mu_bar, spec)
    Ubar, vals = eig_sorted(Tred)

    M = spec.Ainv @ Ubar
    BM = spec.B @ M
    S1 = spec.Bstar.form(0)
    const = np.einsum("ij,ij->j", BM, np.linalg.solve(S1, BM))
    mu_coeff = -spec.X.quad_values(M)

    d_forms = [AffineForm(np.zeros(0), mu_coeff[:, i], const[i])
               for i in range(spec.n)]

    tol = 1e-7 * max(1.0, np.abs(vals).sum())
    anchor_diag = mu_coeff.T @ mu_bar + const
    if np.abs(anchor_diag - vals).max() > tol:
        raise AssertionError("diagonal forms disagree with the eigenvalues "
                             "at the query point")

    forms = _group_forms(d_forms, vals, rho)
    return _finalize_model(forms, spec.gamma, mu_bar, vals)
