"""Symmetric-matrix utilities: ordered eigendecomposition, spectral positive
parts, PSD square roots, polar factorization and the block LMI used to
certify linear-estimate feasibility."""

import numpy as np

SYM_TOL = 1e-12


def symmetrize(M, tol=SYM_TOL):
    """Validate near-symmetry and return (M + M^T)/2."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.T).max() > tol * scale * 10:
        raise ValueError("matrix is not symmetric within tolerance")
    return 0.5 * (M + M.T)


def eig_sorted(M):
    """Eigendecomposition of a symmetric matrix with eigenvalues in
    nonincreasing order.  Returns (U, v) with M = U diag(v) U^T."""
    M = 0.5 * (np.asarray(M, dtype=float) + np.asarray(M, dtype=float).T)
    try:
        vals, vecs = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"symmetric eigensolver failed on a {M.shape[0]}x{M.shape[0]} "
            f"matrix: {exc}") from exc
    order = np.arange(len(vals) - 1, -1, -1)
    return vecs[:, order], vals[order]


def min_eig(M):
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def trace_pos(M):
    """Sum of the positive eigenvalues of a symmetric matrix."""
    _, v = eig_sorted(M)
    return float(np.maximum(v, 0.0).sum())


def pos_part(M):
    """Spectral positive part: eigenvalues replaced by max(., 0)."""
    U, v = eig_sorted(M)
    vp = np.maximum(v, 0.0)
    return (U * vp) @ U.T


def sqrt_psd(M):
    """PSD square root of the positive part of M (small negative
    eigenvalues are clamped to zero)."""
    U, v = eig_sorted(M)
    r = np.sqrt(np.maximum(v, 0.0))
    return (U * r) @ U.T


def polar(F):
    """Polar factorization F = U S with U orthogonal and S PSD.

    Rank-deficient F is handled through the full SVD, which always
    supplies a complete orthogonal factor.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("polar factorization implemented for square matrices")
    W, sv, Vt = np.linalg.svd(F)
    U = W @ Vt
    S = (Vt.T * sv) @ Vt
    return U, 0.5 * (S + S.T)


def assemble_linear_lmi(lam, mu, H, Theta, spec):
    """The 3x3 symmetric block matrix whose positive semidefiniteness
    certifies that (lam, mu, H, Theta) is feasible for the linear-estimate
    design problem:

        [ sum_l lam_l S_l   (B - H^T A)/2   H^T/2 ]
        [      .            sum_k mu_k T_k    0   ]
        [      .                 .          Theta ]

    Block sizes are (nu, n, m).
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    H = np.asarray(H, dtype=float)
    Theta = np.asarray(Theta, dtype=float)
    nu, n, m = spec.nu, spec.n, spec.m
    if H.shape != (m, nu):
        raise ValueError(f"H must be {m}x{nu}, got {H.shape}")
    if Theta.shape != (m, m):
        raise ValueError(f"Theta must be {m}x{m}, got {Theta.shape}")
    Lam = spec.Bstar.weighted_sum(lam)
    Xi = spec.X.weighted_sum(mu)
    top_mid = 0.5 * (spec.B - H.T @ spec.A)
    top_right = 0.5 * H.T
    out = np.zeros((nu + n + m, nu + n + m))
    out[:nu, :nu] = Lam
    out[:nu, nu:nu + n] = top_mid
    out[nu:nu + n, :nu] = top_mid.T
    out[:nu, nu + n:] = top_right
    out[nu + n:, :nu] = top_right.T
    out[nu:nu + n, nu:nu + n] = Xi
    out[nu + n:, nu + n:] = Theta
    return out
