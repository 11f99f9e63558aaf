"""Composite truncated level method: phase-structured level-bundle
iterations with upper/lower bound maintenance and gap-based termination.

Each phase fixes a prox center and a level between the current bounds.
Iterations call the piecewise-linear spectral oracle, update the bounds,
and move the query point by projecting the prox center onto the bundle's
level set, restricted by a single supporting cut that keeps the level
relation valid across iterations.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .subsolve import (Polytope, solve_level_lp, solve_projection_mirror,
                       solve_projection_qp)


class CompositeObjective:
    """Simple part (max of affine forms) + spectral part learned via the
    oracle.  `query` returns the exact objective value and a minorant
    piece; `phi` re-evaluates the objective independently for audits."""

    def __init__(self, psi_forms, oracle, true_f=None):
        self.psi_forms = [(np.asarray(a, dtype=float), float(b))
                          for a, b in psi_forms]
        self._oracle = oracle
        self._true_f = true_f

    def psi(self, z):
        z = np.asarray(z, dtype=float)
        return max(float(a @ z + b) for a, b in self.psi_forms)

    def query(self, z):
        f_val, piece = self._oracle(np.asarray(z, dtype=float))
        return self.psi(z) + f_val, piece

    def phi(self, z):
        if self._true_f is None:
            raise ValueError("no independent objective evaluator configured")
        return self.psi(z) + self._true_f(np.asarray(z, dtype=float))


class EuclideanSetup:
    """Proximal setup with omega = ||.||_2^2 / 2; projections are QPs."""

    name = "euclid"
    dual_ord = 2

    def omega(self, z):
        return 0.5 * float(z @ z)

    def grad_omega(self, z):
        return np.asarray(z, dtype=float)

    def project(self, center, bundle, psi_forms, level, poly, cut, warm):
        return solve_projection_qp(center, bundle, psi_forms, level, poly,
                                   cut=cut, warm=warm)

    def bregman_diameter(self, poly):
        return poly.diameter()


class L1L2Setup:
    """Power-of-p-norm setup with convexity modulus 1 w.r.t. ||.||_1 on the
    nonnegative box-simplex domain (p = 1 + 1/ln d, capped at 2)."""

    name = "l1l2"
    dual_ord = np.inf

    def __init__(self, dim):
        if dim < 2:
            raise ValueError("the l1/l2 setup needs dimension >= 2")
        self.p = min(2.0, 1.0 + 1.0 / math.log(dim))
        # norm equivalence d^{1/p-1}||.||_1 <= ||.||_p combined with the
        # (p-1)-strong convexity of ||.||_p^2/2 in ||.||_p
        self.kappa = 1.0 / (2.0 * (self.p - 1.0)
                            * dim ** (2.0 * (1.0 / self.p - 1.0)))

    def omega(self, z):
        z = np.asarray(z, dtype=float)
        return self.kappa * float(np.sum(np.abs(z) ** self.p) ** (2.0 / self.p))

    def grad_omega(self, z):
        z = np.asarray(z, dtype=float)
        nrm = float(np.sum(np.abs(z) ** self.p) ** (1.0 / self.p))
        if nrm == 0.0:
            return np.zeros_like(z)
        return (2.0 * self.kappa * nrm ** (2.0 - self.p)
                * np.sign(z) * np.abs(z) ** (self.p - 1.0))

    def project(self, center, bundle, psi_forms, level, poly, cut, warm):
        return solve_projection_mirror(self, center, bundle, psi_forms,
                                       level, poly, cut=cut, warm=warm)

    def bregman_diameter(self, poly):
        # V <= max omega + max ||grad omega||_inf * ||y-x||_1 <= 5 kappa R^2
        return math.sqrt(10.0 * self.kappa) * poly.radius


def make_setup(name, dim):
    if name == "euclid":
        return EuclideanSetup()
    if name == "l1l2":
        return L1L2Setup(dim)
    raise ValueError(f"unknown proximal setup {name!r}")


@dataclass
class CtlParams:
    lam_level: float = 0.5
    theta_up: float = 0.5
    theta_low: float = 0.5
    tau: int = 10
    rho: int = 10
    target_ratio: float = 1.1
    abs_gap_tol: float = 1e-9
    max_calls: int = 1000

    def __post_init__(self):
        for name in ("lam_level", "theta_up", "theta_low"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.tau < 1 or self.rho < 1:
            raise ValueError("tau and rho must be >= 1")
        if self.target_ratio < 1.0:
            raise ValueError("target_ratio must be >= 1")


def contraction_factor(params):
    """Per-phase gap contraction guaranteed by the termination rules."""
    return max(1.0 - params.lam_level * params.theta_up,
               params.theta_low + params.lam_level * (1.0 - params.theta_low))


def iteration_bound(L_phi, omega_diam, gap, params):
    """Worst-case iteration count of a phase with the given gap."""
    if L_phi <= 0 or omega_diam <= 0 or gap <= 0:
        raise ValueError("iteration bound needs positive inputs")
    ratio = L_phi * omega_diam / (params.theta_up * params.lam_level * gap)
    return int(math.ceil(ratio ** 2))


@dataclass
class CallRecord:
    call: int
    phase: int
    upper: float
    lower: float
    gap: float
    wall_ms: float


@dataclass
class PhaseRecord:
    phase: int
    start_gap: float
    end_gap: float
    iterations: int
    level: float
    lipschitz_est: float
    outcome: str


@dataclass
class CtlTrace:
    calls: list = field(default_factory=list)
    phases: list = field(default_factory=list)
    relation_log: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("call,phase,upper,lower,gap,wall_ms\n")
            for r in self.calls:
                fh.write(f"{r.call},{r.phase},{r.upper:.17g},{r.lower:.17g},"
                         f"{r.gap:.17g},{r.wall_ms:.3f}\n")


@dataclass
class CtlResult:
    x_hat: np.ndarray
    upper: float
    lower: float
    status: str
    calls: int
    phases: int
    wall_time: float
    trace: CtlTrace

    @property
    def gap(self):
        return self.upper - self.lower


class CtlEngine:
    """One solve of min over the polytope of psi + f via truncated level
    bundle iterations.  `run` drives whole phases; `phase_step` performs a
    single oracle call plus the bookkeeping of one iteration and is
    exposed for tests."""

    def __init__(self, objective, polytope, params=None, setup=None,
                 record_points=False):
        self.objective = objective
        self.polytope = polytope
        self.params = params if params is not None else CtlParams()
        self.setup = setup if setup is not None else EuclideanSetup()
        self.record_points = record_points
        self.trace = CtlTrace()
        self.calls = 0
        self.phase_count = 0
        self.bundle = []
        self._births = []
        self._birth_counter = 0
        self._lipschitz_running = 0.0
        self._psi_lip = max(
            np.linalg.norm(a, ord=self.setup.dual_ord)
            for a, _ in objective.psi_forms)
        self.status = None
        self._t0 = None

    # -- bookkeeping ------------------------------------------------------

    def _record_call(self):
        ms = (time.perf_counter() - self._t0) * 1e3
        self.trace.calls.append(CallRecord(
            self.calls, self.phase_count, self.upper, self.lower,
            self.upper - self.lower, ms))

    def _piece_lipschitz(self, piece):
        return (self._psi_lip + piece.scale
                * float(piece.coeff_dual_norms(self.setup.dual_ord).sum()))

    def _push_piece(self, piece):
        self._lipschitz_running = max(self._lipschitz_running,
                                      self._piece_lipschitz(piece))
        for i, other in enumerate(self.bundle):
            if (other._C.shape == piece._C.shape
                    and np.array_equal(other._C, piece._C)
                    and np.array_equal(other._c0, piece._c0)):
                self._births[i] = self._birth_counter   # refresh, don't grow
                self._birth_counter += 1
                return
        self.bundle.append(piece)
        self._births.append(self._birth_counter)
        self._birth_counter += 1
        if len(self.bundle) <= self.params.tau:
            return
        # the fresh piece always stays; among the old ones, evict the
        # oldest that is not anchored at the incumbent (falling back to the
        # oldest overall)
        order = [int(i) for i in np.argsort(self._births[:-1])]
        for idx in order:
            if not np.array_equal(self.bundle[idx].anchor_z, self.x_hat):
                self.bundle.pop(idx)
                self._births.pop(idx)
                return
        self.bundle.pop(order[0])
        self._births.pop(order[0])

    def _converged(self):
        slack = self.params.abs_gap_tol * (1.0 + abs(self.upper))
        if self.upper - self.lower <= slack:
            return True
        return (self.lower > 0.0
                and self.upper <= self.params.target_ratio * self.lower)

    # -- phases -----------------------------------------------------------

    def _initialize(self):
        self._t0 = time.perf_counter()
        x0 = self.polytope.center()
        phi0, piece = self.objective.query(x0)
        self.calls = 1
        self.upper = phi0
        self.x_hat = x0.copy()
        self.lower = -np.inf
        self._push_piece(piece)
        lp = solve_level_lp(self.bundle, self.objective.psi_forms,
                            self.polytope, cut=None)
        self.lower = float(lp.value)
        self._record_call()

    def _start_phase(self):
        self.phase_count += 1
        p = self.params
        self.prox_center = self.x_hat.copy()
        self.query = self.prox_center.copy()
        self.level = p.lam_level * self.lower + (1.0 - p.lam_level) * self.upper
        self.delta_up = self.upper - self.level
        self.delta_low = self.level - self.lower
        self._phase_start_gap = self.upper - self.lower
        self._phase_iters = 0
        self._first_iter = True

    def phase_step(self):
        """One iteration of the current phase.  Returns one of
        'continue', 'upper_exit', 'lower_exit', 'converged', 'budget'."""
        p = self.params
        if self.calls >= p.max_calls:
            return "budget"
        x = self.query
        phi_x, piece = self.objective.query(x)
        self.calls += 1
        self._phase_iters += 1
        if phi_x < self.upper:
            self.upper = phi_x
            self.x_hat = x.copy()
        self._push_piece(piece)
        self._record_call()
        if self._converged():
            return "converged"

        slack = 1e-12 * (1.0 + abs(self.level))
        if phi_x - self.level <= p.theta_up * self.delta_up + slack:
            return "upper_exit"

        cut = None
        if not self._first_iter:
            g = self.setup.grad_omega(x) - self.setup.grad_omega(self.prox_center)
            gn = np.abs(g).max()
            if gn > 1e-14 * (1.0 + np.abs(x).max()):
                cut = (-g, -float(g @ x))
        if self.record_points and cut is not None:
            self.trace.relation_log.append(
                (self.prox_center.copy(), x.copy(), self.level))

        lp = solve_level_lp(self.bundle, self.objective.psi_forms,
                            self.polytope, cut=cut, feasible_hint=x)
        self.lower = max(self.lower, min(float(lp.value), self.level))
        self.trace.calls[-1].lower = self.lower
        self.trace.calls[-1].gap = self.upper - self.lower
        if self._converged():
            return "converged"
        if self.level - self.lower <= p.theta_low * self.delta_low + slack:
            return "lower_exit"

        self.query = self.setup.project(
            self.prox_center, self.bundle, self.objective.psi_forms,
            self.level, self.polytope, cut, lp.y)
        self._first_iter = False
        return "continue"

    def _finish_phase(self, outcome):
        self.trace.phases.append(PhaseRecord(
            self.phase_count, self._phase_start_gap, self.upper - self.lower,
            self._phase_iters, self.level, self._lipschitz_running, outcome))

    def run(self):
        self._initialize()
        status = "converged" if self._converged() else None
        while status is None:
            self._start_phase()
            while True:
                outcome = self.phase_step()
                if outcome != "continue":
                    break
            self._finish_phase(outcome)
            if outcome in ("converged", "budget"):
                status = outcome
        wall = time.perf_counter() - self._t0
        self.status = status
        if self.objective._true_f is not None:
            recomputed = self.objective.phi(self.x_hat)
            if abs(recomputed - self.upper) > 1e-9 * (1.0 + abs(self.upper)):
                raise AssertionError(
                    f"incumbent objective drifted: recorded {self.upper}, "
                    f"recomputed {recomputed}")
        return CtlResult(self.x_hat.copy(), self.upper, self.lower, status,
                         self.calls, self.phase_count, wall, self.trace)


def run_ctl(objective, polytope, params=None, setup=None, record_points=False):
    """Convenience wrapper: build an engine and run it to termination."""
    engine = CtlEngine(objective, polytope, params=params, setup=setup,
                       record_points=record_points)
    return engine.run()
