"""Basic ellitopes: sets {x : exists t in T, x^T T_k x <= t_k for all k}
with a monotone compact parameter set T, plus the standard constructors
(blocks of weighted coordinates, l_p balls, Euclidean ball).

An ellitope is used both for the signal set and for the polar of the
error-norm unit ball.  Forms are symmetric PSD; their sum must be
positive definite so the set is bounded.
"""

import numpy as np

PSD_TOL = 1e-10       # relative slack when validating form positivity
MEMBER_TOL = 1e-9     # boundary points count as members


class UnitBox:
    """Parameter set {t in R^K_+ : t_k <= 1 for all k}."""

    kind = "unit_box"

    def __init__(self, dim):
        if dim < 1:
            raise ValueError("parameter set dimension must be >= 1")
        self.dim = int(dim)

    def support(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got {g.shape}")
        return float(np.maximum(g, 0.0).sum())

    def contains(self, t, tol=MEMBER_TOL):
        t = np.asarray(t, dtype=float)
        return bool(np.all(t <= 1.0 + tol))

    def affine_support_forms(self):
        # On the nonnegative orthant the support function is the single
        # linear form sum(g); valid because queries come from dual points >= 0.
        return [(np.ones(self.dim), 0.0)]

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim}

    def __repr__(self):
        return f"UnitBox(dim={self.dim})"


class LqBall:
    """Parameter set {t in R^K_+ : ||t||_q <= 1} with q >= 1."""

    kind = "lq_ball"

    def __init__(self, dim, q):
        if dim < 1:
            raise ValueError("parameter set dimension must be >= 1")
        if q < 1:
            raise ValueError("exponent q must be >= 1")
        self.dim = int(dim)
        self.q = float(q)

    def support(self, g):
        g = np.asarray(g, dtype=float)
        if g.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got {g.shape}")
        gp = np.maximum(g, 0.0)
        if self.q == 1.0:
            return float(gp.max())
        qd = self.q / (self.q - 1.0)
        return float(np.sum(gp ** qd) ** (1.0 / qd))

    def contains(self, t, tol=MEMBER_TOL):
        t = np.asarray(t, dtype=float)
        return bool(np.sum(np.abs(t) ** self.q) ** (1.0 / self.q) <= 1.0 + tol)

    def affine_support_forms(self):
        # max_k g_k on the nonnegative orthant; other exponents have no
        # finite affine-max representation and are excluded from the
        # solver path (evaluation-only).
        if self.q == 1.0:
            forms = [(np.zeros(self.dim), 0.0)]
            for k in range(self.dim):
                e = np.zeros(self.dim)
                e[k] = 1.0
                forms.append((e, 0.0))
            return forms
        return None

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "q": self.q}

    def __repr__(self):
        return f"LqBall(dim={self.dim}, q={self.q})"


def param_set_from_dict(d):
    kind = d["kind"]
    if kind == UnitBox.kind:
        return UnitBox(d["dim"])
    if kind == LqBall.kind:
        return LqBall(d["dim"], d["q"])
    raise ValueError(f"unknown parameter set kind {kind!r}")


class Ellitope:
    """Ellitope of dimension n defined by K PSD forms and a parameter set.

    Forms are stored either as dense symmetric matrices or, when all of
    them are diagonal, as a (K, n) array of diagonals (fast path used by
    the large experiments).
    """

    def __init__(self, forms=None, params=None, diag_forms=None):
        if params is None:
            raise ValueError("params is required")
        self.params = params
        if (forms is None) == (diag_forms is None):
            raise ValueError("provide exactly one of forms / diag_forms")
        if diag_forms is not None:
            D = np.asarray(diag_forms, dtype=float)
            if D.ndim != 2:
                raise ValueError("diag_forms must be a (K, n) array")
            self._diag = D
            self._dense = None
            self.dim = D.shape[1]
            self.nforms = D.shape[0]
        else:
            dense = [np.asarray(F, dtype=float) for F in forms]
            n = dense[0].shape[0]
            for F in dense:
                if F.shape != (n, n):
                    raise ValueError("all forms must be square of equal order")
            self._dense = [0.5 * (F + F.T) for F in dense]
            self._diag = None
            self.dim = n
            self.nforms = len(dense)
        if self.params.dim != self.nforms:
            raise ValueError("parameter set dimension must equal the number of forms")
        self._validate()

    def _validate(self):
        if self._diag is not None:
            scale = max(np.abs(self._diag).max(), 1.0)
            if self._diag.min() < -PSD_TOL * scale:
                raise ValueError("diagonal form has a negative entry")
            total = self._diag.sum(axis=0)
            if total.min() <= 0:
                raise ValueError("sum of forms is not positive definite")
        else:
            for F in self._dense:
                scale = max(np.abs(F).max(), 1.0)
                if np.linalg.eigvalsh(F).min() < -PSD_TOL * scale:
                    raise ValueError("form has a negative eigenvalue")
            total = np.sum(self._dense, axis=0)
            if np.linalg.eigvalsh(total).min() <= 0:
                raise ValueError("sum of forms is not positive definite")

    @property
    def is_diagonal(self):
        return self._diag is not None

    def form(self, k):
        if self._diag is not None:
            return np.diag(self._diag[k])
        return self._dense[k]

    def forms_dense(self):
        return [self.form(k) for k in range(self.nforms)]

    def weighted_sum(self, w):
        """sum_k w_k T_k as a dense symmetric matrix."""
        w = np.asarray(w, dtype=float)
        if w.shape != (self.nforms,):
            raise ValueError("weight vector length mismatch")
        if self._diag is not None:
            return np.diag(w @ self._diag)
        out = np.zeros((self.dim, self.dim))
        for wk, F in zip(w, self._dense):
            if wk != 0.0:
                out += wk * F
        return out

    def quad_values(self, X):
        """Columnwise quadratic forms: returns (K, ncols) with x_j^T T_k x_j."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[:, None]
        if X.shape[0] != self.dim:
            raise ValueError("dimension mismatch")
        if self._diag is not None:
            out = self._diag @ (X * X)
        else:
            out = np.empty((self.nforms, X.shape[1]))
            for k, F in enumerate(self._dense):
                out[k] = np.einsum("ij,ik,kj->j", X, F, X)
        return out[:, 0] if single else out

    def member(self, x, tol=MEMBER_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got {x.shape}")
        return self.params.contains(self.quad_values(x), tol)

    def support(self, g):
        """Support function of the parameter set at g."""
        return self.params.support(g)

    def norm_bound(self):
        """Upper bound on max ||x||_2 over the set (both parameter kinds
        keep every t_k <= 1, so x^T (sum T_k) x <= K)."""
        if self._diag is not None:
            lmin = float(self._diag.sum(axis=0).min())
        else:
            lmin = float(np.linalg.eigvalsh(np.sum(self._dense, axis=0))[0])
        return float(np.sqrt(self.nforms / lmin))

    def to_dict(self):
        if self._diag is not None:
            forms = [{"diag": row.tolist()} for row in self._diag]
        else:
            forms = [{"dense": F.tolist()} for F in self._dense]
        return {"dim": self.dim, "forms": forms, "params": self.params.to_dict()}

    @classmethod
    def from_dict(cls, d):
        params = param_set_from_dict(d["params"])
        forms = d["forms"]
        if all("diag" in f for f in forms):
            return cls(diag_forms=np.array([f["diag"] for f in forms]), params=params)
        dense = []
        for f in forms:
            if "diag" in f:
                dense.append(np.diag(np.asarray(f["diag"], dtype=float)))
            else:
                dense.append(np.asarray(f["dense"], dtype=float))
        return cls(forms=dense, params=params)

    def __repr__(self):
        return (f"Ellitope(dim={self.dim}, nforms={self.nforms}, "
                f"params={self.params!r})")


def make_block_weighted(n, K, alpha):
    """Signal set {x : sum_{i in I_k} i^alpha x_i^2 <= 1, k <= K} with the
    index range split into K consecutive segments of equal length."""
    if n % K != 0:
        raise ValueError(f"K={K} does not divide n={n}")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    seg = n // K
    weights = (np.arange(1, n + 1, dtype=float)) ** alpha
    D = np.zeros((K, n))
    for k in range(K):
        D[k, k * seg:(k + 1) * seg] = weights[k * seg:(k + 1) * seg]
    return Ellitope(diag_forms=D, params=UnitBox(K))


def make_lp_ball(n, p):
    """The unit ||.||_p ball, p in [2, inf], as an ellitope with n rank-one
    coordinate forms."""
    if p < 2:
        raise ValueError("p must be >= 2")
    D = np.eye(n)
    if np.isinf(p):
        return Ellitope(diag_forms=D, params=UnitBox(n))
    return Ellitope(diag_forms=D, params=LqBall(n, p / 2.0))


def make_euclidean_ball(n):
    """Unit Euclidean ball as the single-form ellitope {x : x^T x <= t, t <= 1}."""
    return Ellitope(diag_forms=np.ones((1, n)), params=UnitBox(1))
