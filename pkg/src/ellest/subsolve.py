"""Auxiliary problems of the bundle solver: the level lower-bound LP and
the Euclidean projection QP, both after epigraph reformulation of the
positive-part pieces, plus a conditional-gradient path for non-Euclidean
proximal setups.

Both problems are small and dense, and are solved by an internal
Mehrotra-style predictor-corrector interior-point method; no external
solver is involved.  Polytope nonemptiness is certified by a Chebyshev
center LP.
"""

import math
from collections import namedtuple

import numpy as np

IPM_TOL = 1e-9
IPM_MAXITER = 200


class SubsolverError(RuntimeError):
    """Internal solver contract violation (with diagnostics attached)."""


IpmResult = namedtuple("IpmResult", "z w s status iterations pres dres gap")


def _polish_candidate(P, q, Gs, hs, active):
    d = Gs.shape[1]
    na = active.size
    KKT = np.zeros((d + na, d + na))
    if P is not None:
        KKT[:d, :d] = P
    if na:
        GA = Gs[active]
        KKT[:d, d:] = GA.T
        KKT[d:, :d] = GA
        rhs = np.concatenate([-q, hs[active]])
    else:
        rhs = -q
    try:
        sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
    except np.linalg.LinAlgError:
        return None
    z_new = sol[:d]
    w_new = np.zeros(Gs.shape[0])
    w_new[active] = sol[d:]
    s_new = hs - Gs @ z_new
    htol = 1e-10 * (1.0 + np.abs(hs).max())
    if s_new.min() < -htol or w_new.min() < -1e-9 * (1.0 + np.abs(w_new).max()):
        return None
    return z_new, np.maximum(w_new, 0.0), np.maximum(s_new, 0.0)


def _ipm_polish(P, q, Gs, hs, z, w, s):
    """Active-set polish: solve the equality-constrained KKT system on the
    constraints the interior point identifies as tight, and accept the
    result only when it is primal/dual feasible.  Turns the usual 1e-8
    interior-point wobble into near machine precision.  Several candidate
    active sets are tried (multiplier-dominant and geometrically tight)."""
    htol = 1e-7 * (1.0 + np.abs(hs).max())
    candidates = []
    seen = set()
    for active in (np.flatnonzero(s <= w),
                   np.flatnonzero(s <= htol),
                   np.flatnonzero((s <= w) | (s <= htol))):
        key = active.tobytes()
        if key not in seen:
            seen.add(key)
            candidates.append(active)
    best, best_score = None, np.inf
    for active in candidates:
        out = _polish_candidate(P, q, Gs, hs, active)
        if out is None:
            continue
        z_new, w_new, s_new = out
        rd = q + Gs.T @ w_new + (P @ z_new if P is not None else 0.0)
        score = max(float(np.abs(rd).max()), float(s_new @ w_new))
        if score < best_score:
            best, best_score = out, score
    return best


def _ipm_solve(P, q, G, h, z0=None, tol=IPM_TOL, maxiter=IPM_MAXITER):
    """Primal-dual interior point for  min 1/2 z'Pz + q'z  s.t.  Gz <= h.

    P may be None (LP) or a PSD matrix.  Mehrotra predictor-corrector with
    a single common step length and static Tikhonov regularization of the
    normal equations.  Returns original-space multipliers.
    """
    G = np.ascontiguousarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    q = np.asarray(q, dtype=float)
    nrows, d = G.shape
    if nrows == 0:
        raise ValueError("constraint matrix must have at least one row")

    rs = np.maximum(np.abs(G).max(axis=1), 1e-12)
    Gs = G / rs[:, None]
    hs = h / rs
    quad = P is not None

    z = np.zeros(d) if z0 is None else np.asarray(z0, dtype=float).copy()
    s_raw = hs - Gs @ z
    shift = max(0.0, -1.5 * s_raw.min()) + 0.1 * max(1.0, float(np.abs(hs).mean()))
    s = s_raw + shift
    w = np.ones(nrows)

    hscale = 1.0 + np.abs(hs).max()
    qscale = 1.0 + np.abs(q).max()
    if quad:
        qscale += np.abs(P).max()

    def residuals(z_, w_, s_):
        rd_ = q + Gs.T @ w_
        if quad:
            rd_ = rd_ + P @ z_
        rp_ = Gs @ z_ + s_ - hs
        obj_ = float(q @ z_) + (0.5 * float(z_ @ (P @ z_)) if quad else 0.0)
        pres_ = float(np.abs(rp_).max()) / hscale
        dres_ = float(np.abs(rd_).max()) / qscale
        gap_ = float(s_ @ w_) / (1.0 + abs(obj_))
        return pres_, dres_, gap_

    def finish(z_, w_, s_, it_, status_):
        polished = _ipm_polish(P, q, Gs, hs, z_, w_, s_)
        pres_, dres_, gap_ = residuals(z_, w_, s_)
        if polished is not None:
            pp, pd, pg = residuals(*polished)
            if max(pp, pd, pg) <= max(pres_, dres_, gap_):
                z_, w_, s_ = polished
                pres_, dres_, gap_ = pp, pd, pg
        if status_ != "optimal" and max(pres_, dres_, gap_) <= tol:
            status_ = "optimal"
        return IpmResult(z_, w_ / rs, s_ * rs, status_, it_, pres_, dres_, gap_)

    best = None
    for it in range(maxiter):
        rd = q + Gs.T @ w
        if quad:
            rd = rd + P @ z
        rp = Gs @ z + s - hs
        comp = float(s @ w)
        mu = comp / nrows
        obj = float(q @ z) + (0.5 * float(z @ (P @ z)) if quad else 0.0)
        pres = float(np.abs(rp).max()) / hscale
        dres = float(np.abs(rd).max()) / qscale
        gap = comp / (1.0 + abs(obj))
        score = max(pres, dres, gap)
        if best is None or score < best[0]:
            best = (score, z.copy(), w.copy(), s.copy(), it, pres, dres, gap)
        if pres <= tol and dres <= tol and gap <= tol:
            return finish(z, w, s, it, "optimal")

        Dw = w / np.maximum(s, 1e-280)
        K = Gs.T @ (Dw[:, None] * Gs)
        if quad:
            K = K + P
        base = max(np.abs(np.diag(K)).max(), 1.0)
        chol = None
        reg = 0.0
        for reg_try in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
            try:
                chol = np.linalg.cholesky(K + (reg_try * base) * np.eye(d))
                reg = reg_try
                break
            except np.linalg.LinAlgError:
                continue
        if chol is None:
            break

        def kkt_solve(rc):
            rhs = -rd + Gs.T @ ((rc - w * rp) / s)
            dz = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
            ds = -rp - Gs @ dz
            dw = (-rc - w * ds) / s
            return dz, ds, dw

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return min(1.0, float(np.min(-v[neg] / dv[neg])))

        # predictor
        dz_a, ds_a, dw_a = kkt_solve(s * w)
        alpha_a = min(max_step(s, ds_a), max_step(w, dw_a))
        mu_aff = float((s + alpha_a * ds_a) @ (w + alpha_a * dw_a)) / nrows
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        rc = s * w - sigma * mu + ds_a * dw_a
        dz, ds, dw = kkt_solve(rc)
        eta = 0.999 if mu < 1e-8 else 0.99
        alpha = eta * min(max_step(s, ds), max_step(w, dw))
        alpha = min(1.0, alpha)
        z = z + alpha * dz
        s = s + alpha * ds
        w = w + alpha * dw

    score, z, w, s, it, pres, dres, gap = best
    status = "optimal" if score <= 100 * tol else "stalled"
    return finish(z, w, s, it, status)


def chebyshev_center(G, h, tol=IPM_TOL):
    """Largest inscribed-ball center of {z : Gz <= h}.  The optimal radius
    is negative exactly when the polytope is empty."""
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    norms = np.linalg.norm(G, axis=1)
    Gc = np.hstack([G, norms[:, None]])
    c = np.zeros(G.shape[1] + 1)
    c[-1] = -1.0
    res = _ipm_solve(None, c, Gc, h, tol=tol)
    return res.z[:-1], float(res.z[-1])


class Polytope:
    """Feasible set {z : z >= lower, sum(z) <= radius} with optional extra
    affine inequality rows (a . z <= b)."""

    def __init__(self, lower, radius, extra_A=None, extra_b=None, check=True):
        self.lower = np.asarray(lower, dtype=float)
        self.radius = float(radius)
        if self.lower.ndim != 1:
            raise ValueError("lower must be a vector")
        if self.radius <= self.lower.sum():
            raise ValueError("empty polytope: radius below the box corner")
        if extra_A is None:
            self.extra_A = np.zeros((0, self.dim))
            self.extra_b = np.zeros(0)
        else:
            self.extra_A = np.atleast_2d(np.asarray(extra_A, dtype=float))
            self.extra_b = np.atleast_1d(np.asarray(extra_b, dtype=float))
            if check:
                G, h = self.rows()
                _, r = chebyshev_center(G, h)
                if r < -1e-9 * (1.0 + np.abs(h).max()):
                    raise ValueError("empty polytope (certified by Chebyshev LP)")

    @property
    def dim(self):
        return self.lower.shape[0]

    def rows(self):
        d = self.dim
        G = np.vstack([-np.eye(d), np.ones((1, d)), self.extra_A])
        h = np.concatenate([-self.lower, [self.radius], self.extra_b])
        return G, h

    def contains(self, z, tol=1e-9):
        z = np.asarray(z, dtype=float)
        sc = 1.0 + max(abs(self.radius), np.abs(self.lower).max(initial=0.0))
        if np.any(z < self.lower - tol * sc):
            return False
        if z.sum() > self.radius + tol * sc:
            return False
        if self.extra_A.shape[0]:
            if np.any(self.extra_A @ z > self.extra_b
                      + tol * (1.0 + np.abs(self.extra_b))):
                return False
        return True

    def center(self):
        d = self.dim
        return self.lower + (self.radius - self.lower.sum()) / (2.0 * d)

    def diameter(self):
        """Euclidean diameter (exact for the box-simplex set, ignoring
        extra rows, which can only shrink it)."""
        span = self.radius - self.lower.sum()
        return span * (math.sqrt(2.0) if self.dim >= 2 else 1.0)


def dedupe_bundle(bundle, rtol=1e-12):
    """Drop numerically identical pieces."""
    keep = []
    for m in bundle:
        dup = False
        for other in keep:
            if (m._C.shape == other._C.shape
                    and m.scale == other.scale
                    and np.allclose(m._C, other._C, rtol=rtol, atol=1e-14)
                    and np.allclose(m._c0, other._c0, rtol=rtol, atol=1e-14)):
                dup = True
                break
        if not dup:
            keep.append(m)
    return keep


def _assemble(bundle, psi_forms, poly, cut, level=None):
    """Rows of the lifted feasible set over variables [y; s; (t)].

    With level=None an epigraph variable t is appended and each piece row
    reads  psi_form(y) + scale * sum(s_piece) - t <= 0; otherwise the rows
    are capped at the given level.  Slack rows enforce s >= 0 and
    s_j >= alpha_j(y).
    """
    bundle = dedupe_bundle(bundle)
    d = poly.dim
    counts = [len(m.forms) for m in bundle]
    T = int(np.sum(counts))
    epi = level is None
    N = d + T + (1 if epi else 0)

    Gp, hp = poly.rows()
    rows = [np.hstack([Gp, np.zeros((Gp.shape[0], N - d))])]
    rhs = [hp]
    if cut is not None:
        a, b = cut
        row = np.zeros((1, N))
        row[0, :d] = a
        rows.append(row)
        rhs.append(np.array([b]))

    # slack rows
    offset = d
    for m in bundle:
        k = len(m.forms)
        blk = np.zeros((k, N))
        blk[:, :d] = m._C
        blk[:, offset:offset + k] = -np.eye(k)
        rows.append(blk)
        rhs.append(-m._c0)
        neg = np.zeros((k, N))
        neg[:, offset:offset + k] = -np.eye(k)
        rows.append(neg)
        rhs.append(np.zeros(k))
        offset += k

    # piece rows
    offset = d
    for m in bundle:
        k = len(m.forms)
        for a, b in psi_forms:
            row = np.zeros((1, N))
            row[0, :d] = a
            row[0, offset:offset + k] = m.scale
            if epi:
                row[0, -1] = -1.0
                rows.append(row)
                rhs.append(np.array([-b]))
            else:
                rows.append(row)
                rhs.append(np.array([level - b]))
        offset += k

    return np.vstack(rows), np.concatenate(rhs), bundle, N, d


def piecewise_max_value(bundle, psi_forms, y):
    """Direct evaluation of max over pieces of psi(y) + piece(y)."""
    psi = max(float(a @ y + b) for a, b in psi_forms)
    return max(psi + m.value_z(y) for m in bundle)


LevelLpResult = namedtuple("LevelLpResult", "value y t info")


def solve_level_lp(bundle, psi_forms, poly, cut=None, feasible_hint=None,
                   tol=IPM_TOL):
    """Minimum of the bundle model over the polytope intersected with the
    optional cut.  Returns +inf when that intersection is empty.

    `value` is a slightly deflated certified lower bound on the true
    minimum (interior-point optima can overshoot by the solve tolerance);
    `t` is the raw primal optimum.
    """
    if cut is not None:
        hint_ok = False
        if feasible_hint is not None:
            a, b = cut
            y0 = np.asarray(feasible_hint, dtype=float)
            hint_ok = poly.contains(y0) and float(a @ y0) <= b + 1e-12 * (1 + abs(b))
        if not hint_ok:
            Gp, hp = poly.rows()
            Gc = np.vstack([Gp, cut[0][None, :]])
            hc = np.concatenate([hp, [cut[1]]])
            _, r = chebyshev_center(Gc, hc)
            if r < -1e-9 * (1.0 + np.abs(hc).max()):
                return LevelLpResult(np.inf, None, np.inf, None)

    G, h, bundle, N, d = _assemble(bundle, psi_forms, poly, cut, level=None)
    c = np.zeros(N)
    c[-1] = 1.0
    res = _ipm_solve(None, c, G, h, tol=tol)
    if res.status != "optimal":
        raise SubsolverError(
            f"level LP failed to converge: status={res.status} "
            f"pres={res.pres:.2e} dres={res.dres:.2e} gap={res.gap:.2e}")
    y = res.z[:d]
    t = float(res.z[-1])
    value = t - 10.0 * tol * (1.0 + abs(t))
    return LevelLpResult(value, y, t, res)


def solve_projection_qp(center, bundle, psi_forms, level, poly, cut=None,
                        warm=None, tol=IPM_TOL):
    """Euclidean projection of the prox center onto the polytope cut down
    by the bundle level set (and the optional affine cut)."""
    G, h, bundle, N, d = _assemble(bundle, psi_forms, poly, cut, level=level)
    P = np.zeros((N, N))
    P[:d, :d] = np.eye(d)
    q = np.zeros(N)
    q[:d] = -np.asarray(center, dtype=float)
    z0 = None
    if warm is not None:
        z0 = np.zeros(N)
        z0[:d] = warm
        off = d
        for m in bundle:
            vals = m._C @ np.asarray(warm, dtype=float) + m._c0
            z0[off:off + len(m.forms)] = np.maximum(vals, 0.0)
            off += len(m.forms)
    res = _ipm_solve(P, q, G, h, z0=z0, tol=tol)
    if res.status != "optimal":
        raise SubsolverError(
            f"projection QP failed to converge (the caller guarantees "
            f"feasibility, so this is a contract violation): "
            f"status={res.status} pres={res.pres:.2e} dres={res.dres:.2e} "
            f"gap={res.gap:.2e}")
    return res.z[:d]


def _golden_unit(fun, tol=1e-10):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = fun(c), fun(e)
    while (b - a) > tol:
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = fun(e)
    return 0.5 * (a + b)


def solve_projection_mirror(setup, center, bundle, psi_forms, level, poly,
                            cut=None, warm=None, gap_tol=1e-7, maxiter=5000,
                            return_gaps=False):
    """Bregman projection for a non-Euclidean proximal setup, by
    conditional gradient with pairwise steps over the lifted polytope.

    Each inner step is one linear minimization (an LP of the same shape as
    the level problem); pairwise steps shift weight from the worst active
    vertex to the newest one, which avoids the zigzagging of the plain
    method near faces.  The reported duality gap is the running minimum of
    the conditional-gradient gaps, which certifies suboptimality.
    """
    G, h, bundle, N, d = _assemble(bundle, psi_forms, poly, cut, level=level)
    g0 = setup.grad_omega(np.asarray(center, dtype=float))

    def objective(y):
        return setup.omega(y) - float(g0 @ y)

    def lmo(grad):
        res = _ipm_solve(None, grad, G, h, tol=IPM_TOL)
        if res.status != "optimal":
            raise SubsolverError("linear minimization inside the mirror "
                                 f"projection failed: {res.status}")
        return res.z

    start_grad = np.zeros(N)
    if warm is not None:
        start_grad[:d] = setup.grad_omega(np.asarray(warm, dtype=float)) - g0
    v0 = lmo(start_grad)
    verts = [v0]
    weights = [1.0]
    z = v0.copy()

    reported = np.inf
    gaps = []
    for it in range(maxiter):
        y = z[:d]
        grad = np.zeros(N)
        grad[:d] = setup.grad_omega(y) - g0
        v_fw = lmo(grad)
        gap = float(grad @ (z - v_fw))
        reported = min(reported, gap)
        gaps.append(reported)
        if reported <= gap_tol * (1.0 + abs(objective(y))):
            return (y, gaps) if return_gaps else y

        scores = [float(grad @ v) for v in verts]
        i_away = int(np.argmax(scores))
        diff = v_fw - verts[i_away]
        if np.abs(diff).max() <= 1e-12 * (1.0 + np.abs(v_fw).max()):
            continue
        gamma_max = weights[i_away]

        def line(t):
            return objective(z[:d] + t * diff[:d])

        step = gamma_max * _golden_unit(lambda t: line(gamma_max * t))
        if step <= 0.0:
            step = min(gamma_max, 1.0 / (it + 2.0))
        z = z + step * diff
        weights[i_away] -= step
        matched = False
        for i, v in enumerate(verts):
            if np.allclose(v, v_fw, rtol=0.0, atol=1e-10 * (1.0 + np.abs(v).max())):
                weights[i] += step
                matched = True
                break
        if not matched:
            verts.append(v_fw)
            weights.append(step)
        if weights[i_away] <= 1e-14 and len(verts) > 1:
            verts.pop(i_away)
            weights.pop(i_away)
    raise SubsolverError(
        f"mirror projection exceeded {maxiter} conditional-gradient "
        f"iterations; final certified gap {reported:.3e}")
