"""Applying designed estimators to observations.

The linear estimate is a matrix-vector product.  The polyhedral estimate
needs an inner convex solve (min of the sup-norm fitting criterion over
the signal ellitope), done by projected subgradient with adaptive
Polyak-type steps; projections onto the ellitope go through Dykstra's
alternating method over the component ellipsoids.

All inner routines have batched variants so a Monte-Carlo harness can
drive thousands of observations at once.
"""

import numpy as np

DYKSTRA_CAP = 10_000
POLY_CAP = 50_000


def linear_apply(H_lin, omega):
    """Linear estimate H^T omega."""
    H_lin = np.asarray(H_lin, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1] != H_lin.shape[0]:
        raise ValueError("observation dimension mismatch")
    return omega @ H_lin


def _secular_multiplier(Y, d, newton_iters=60, tol=1e-13):
    """Rowwise root of sum_i d_i y_i^2 / (1 + nu d_i)^2 = 1 over nu >= 0
    for rows known to violate the constraint (safeguarded Newton).  d may
    be shared (n,) or per-row (B, n)."""
    dy2 = (Y * Y) * d
    lo = np.zeros(Y.shape[0])
    hi = np.ones(Y.shape[0])

    def phi(nu):
        denom = 1.0 + nu[:, None] * d
        return (dy2 / (denom * denom)).sum(axis=1)

    for _ in range(80):
        too_big = phi(hi) > 1.0
        if not np.any(too_big):
            break
        hi[too_big] *= 2.0
    nu = 0.5 * (lo + hi)
    for _ in range(newton_iters):
        denom = 1.0 + nu[:, None] * d
        f = (dy2 / (denom * denom)).sum(axis=1)
        if np.abs(f - 1.0).max() <= tol:
            break
        df = -2.0 * (dy2 * d / (denom * denom * denom)).sum(axis=1)
        above = f > 1.0
        lo = np.where(above, nu, lo)
        hi = np.where(above, hi, nu)
        step = np.where(df != 0.0, (f - 1.0) / df, 0.0)
        cand = nu - step
        inside = (cand > lo) & (cand < hi)
        nu = np.where(inside, cand, 0.5 * (lo + hi))
    return nu


def _project_diag_batch(X, d):
    """Rowwise projection of X (B, n) onto {y : sum_i d_i y_i^2 <= 1}."""
    X = np.asarray(X, dtype=float)
    d = np.asarray(d, dtype=float)
    q = (X * X) @ d
    mask = q > 1.0
    if not np.any(mask):
        return X
    Y = X[mask]
    nu = _secular_multiplier(Y, d)
    out = X.copy()
    out[mask] = Y / (1.0 + np.outer(nu, d))
    return out


def project_ellipsoid(x, T):
    """Euclidean projection onto {y : y^T T y <= 1} for PSD T != 0, via the
    secular equation in T's eigenbasis."""
    x = np.asarray(x, dtype=float)
    T = np.asarray(T, dtype=float)
    if float(x @ (T @ x)) <= 1.0:
        return x.copy()
    vals, vecs = np.linalg.eigh(0.5 * (T + T.T))
    vals = np.maximum(vals, 0.0)
    u = vecs.T @ x
    y = _project_diag_batch(u[None, :], vals)[0]
    return vecs @ y


def _dykstra_diag_batch(X, diag_forms, tol=1e-8, cap=DYKSTRA_CAP):
    """Batched Dykstra over ellipsoids with diagonal quadratic forms."""
    X = np.asarray(X, dtype=float).copy()
    K = diag_forms.shape[0]
    incs = [np.zeros_like(X) for _ in range(K)]
    for sweep in range(cap):
        shift = 0.0
        for k in range(K):
            Y = X + incs[k]
            Xn = _project_diag_batch(Y, diag_forms[k])
            incs[k] = Y - Xn
            shift = max(shift, float(np.abs(Xn - X).max()))
            X = Xn
        if shift <= tol:
            return X
    raise RuntimeError(f"Dykstra did not reach a fixed point in {cap} sweeps")


def project_intersection(x, ellitope, tol=1e-8, cap=DYKSTRA_CAP):
    """Projection onto an ellitope with box parameters (an intersection of
    centered ellipsoids), by Dykstra's alternating projections."""
    if ellitope.params.kind != "unit_box":
        raise ValueError("projection implemented for box-parameter ellitopes")
    x = np.asarray(x, dtype=float)
    if ellitope.is_diagonal:
        return _dykstra_diag_batch(x[None, :], ellitope._diag, tol=tol, cap=cap)[0]
    forms = ellitope.forms_dense()
    cur = x.copy()
    incs = [np.zeros_like(x) for _ in forms]
    for sweep in range(cap):
        shift = 0.0
        for k, T in enumerate(forms):
            y = cur + incs[k]
            xn = project_ellipsoid(y, T)
            incs[k] = y - xn
            shift = max(shift, float(np.abs(xn - cur).max()))
            cur = xn
        if shift <= tol:
            return cur
    raise RuntimeError(f"Dykstra did not reach a fixed point in {cap} sweeps")


def _diag_supports_disjoint(diag):
    return bool(((diag != 0.0).sum(axis=0) <= 1).all())


class _DisjointDiagProjector:
    """Exact batched projector onto an intersection of ellipsoids with
    diagonal forms of pairwise disjoint support: the projection separates
    per form, and all (row, form) secular equations are solved in one
    padded Newton sweep."""

    def __init__(self, diag):
        K, n = diag.shape
        supports = [np.flatnonzero(diag[k]) for k in range(K)]
        width = max(len(s) for s in supports)
        self.idx = np.full((K, width), n, dtype=int)     # n = padding slot
        self.dpad = np.zeros((K, width))
        for k, sup in enumerate(supports):
            self.idx[k, :len(sup)] = sup
            self.dpad[k, :len(sup)] = diag[k, sup]
        self.n = n

    def __call__(self, X):
        B = X.shape[0]
        Xp = np.concatenate([X, np.zeros((B, 1))], axis=1)
        blocks = Xp[:, self.idx]                          # (B, K, width)
        q = (blocks * blocks * self.dpad).sum(axis=2)
        bi, ki = np.nonzero(q > 1.0)
        if bi.size == 0:
            return X
        Y = blocks[bi, ki]
        dm = self.dpad[ki]
        nu = _secular_multiplier(Y, dm)
        Xp[bi[:, None], self.idx[ki]] = Y / (1.0 + nu[:, None] * dm)
        return Xp[:, :self.n]


def make_batch_projector(ellitope):
    """Rowwise projector X (B, n) -> member rows, picked by structure."""
    if ellitope.params.kind != "unit_box":
        raise ValueError("projection implemented for box-parameter ellitopes")
    if ellitope.is_diagonal:
        if _diag_supports_disjoint(ellitope._diag):
            return _DisjointDiagProjector(ellitope._diag)
        return lambda X: _dykstra_diag_batch(X, ellitope._diag)
    return lambda X: np.vstack([project_intersection(row, ellitope)[None, :]
                                for row in X])


def polyhedral_apply_batch(H, Omegas, X, A, B=None, tol_rel=1e-4,
                           max_iter=POLY_CAP, keep_history=False):
    """Solve min_x ||H^T(omega - A x)||_inf over the ellitope for a batch
    of observations.

    Projected subgradient with Polyak-type steps: the target is the
    running best value minus an adaptive slack that halves whenever the
    best value plateaus.  The slack doubles as the reported optimality
    gap.  Returns (X_bar, w_hat, info).
    """
    H = np.asarray(H, dtype=float)
    Omegas = np.atleast_2d(np.asarray(Omegas, dtype=float))
    A = np.asarray(A, dtype=float)
    nb, m = Omegas.shape
    n = A.shape[1]
    PA = A.T @ H                      # columns are the subgradient atoms
    OH = Omegas @ H
    rows = np.arange(nb)
    gn2_cols = np.maximum((PA * PA).sum(axis=0), 1e-300)

    project = make_batch_projector(X)
    # start at the projected pullback of the observations: optimal in the
    # noiseless case and near-optimal under small noise (the origin is the
    # fallback for singular A)
    try:
        xcur = project(np.linalg.solve(A, Omegas.T).T)
    except np.linalg.LinAlgError:
        xcur = np.zeros((nb, n))
    tol = tol_rel * (1.0 + np.abs(OH).max(axis=1))
    travel_budget = 2.0 * X.norm_bound()

    fbest = np.abs(OH - xcur @ PA).max(axis=1)
    xbest = xcur.copy()
    delta = np.maximum(0.5 * fbest, tol)
    marker = fbest.copy()
    travel = np.zeros(nb)
    iters_done = max_iter
    history = []
    for it in range(max_iter):
        V = OH - xcur @ PA
        av = np.abs(V)
        j = av.argmax(axis=1)
        fcur = av[rows, j]
        improved = fcur < fbest
        if np.any(improved):
            fbest = np.where(improved, fcur, fbest)
            xbest[improved] = xcur[improved]
        if keep_history:
            history.append(fbest.copy())
        # level control: real descent resets the travel budget; a level
        # whose budget is spent without descent was too ambitious.  The
        # slack never needs to exceed fbest itself (zero is always a valid
        # lower bound on the optimum of a norm).
        descended = fbest <= marker - 0.5 * delta
        exhausted = travel > travel_budget
        halve = exhausted & ~descended
        delta = np.where(halve, 0.5 * delta, delta)
        delta = np.minimum(delta, np.maximum(fbest, 0.25 * tol))
        reset = descended | exhausted
        marker = np.where(reset, fbest, marker)
        travel = np.where(reset, 0.0, travel)
        done = delta <= 0.25 * tol
        if np.all(done):
            iters_done = it + 1
            break
        target = np.maximum(fbest - delta, 0.0)
        gnorm2 = gn2_cols[j]
        step = np.maximum(fcur - target, 0.0) / gnorm2
        step = np.where(done, 0.0, step)
        travel = travel + step * np.sqrt(gnorm2)
        coef = step * np.sign(V[rows, j])
        xcur = xcur + coef[:, None] * PA[:, j].T
        xcur = project(xcur)

    w = xbest if B is None else xbest @ np.asarray(B, dtype=float).T
    info = {
        "objective": fbest,
        "gap": delta,
        "iterations": iters_done,
        "converged": bool(np.all(delta <= 0.25 * tol)),
    }
    if keep_history:
        info["history"] = np.array(history)
    return xbest, w, info


def polyhedral_apply(H, omega, X, A, B=None, tol_rel=1e-4, max_iter=POLY_CAP):
    """Single-observation polyhedral estimate.  Returns (x_bar, w_hat, info)."""
    xb, w, info = polyhedral_apply_batch(H, np.asarray(omega)[None, :], X, A,
                                         B=B, tol_rel=tol_rel,
                                         max_iter=max_iter)
    info = dict(info, objective=float(info["objective"][0]),
                gap=float(info["gap"][0]))
    return xb[0], w[0], info
