"""Experiment harness: instance generation, end-to-end design runs,
Monte-Carlo risk verification and report serialization.

Reproducibility contract: all randomness flows through Philox counter
streams keyed by SeedSequence([seed, lane, index]); lane 0 draws
instances, lane 1 draws Monte-Carlo trials.  Identical configs therefore
give bit-identical artifacts on any platform (wall-time fields aside).
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .ctl import CtlParams, make_setup, run_ctl
from .design import (DesignSpec, extract_contrast, reduced_ctl_problem,
                     reduced_solution_lift)
from .ellitope import Ellitope, make_block_weighted, make_euclidean_ball
from .recover import polyhedral_apply_batch

logger = logging.getLogger(__name__)

COND_LIMIT = 1e8
MAX_REGEN = 10


def substream(seed, lane, index=0):
    """Philox generator on the documented (seed, lane, index) key."""
    ss = np.random.SeedSequence([int(seed), int(lane), int(index)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class ExperimentConfig:
    n: int
    K: int
    alpha: float = 1.0
    sigma: float = 0.1
    eps: float = 0.05
    seed: int = 0
    rho: int = 10
    tau: int = 10
    setup: str = "euclid"
    target_ratio: float = 1.1
    trials: int = 2000
    max_calls: int = 1000
    boundary_sampling: bool = True
    out: str = ""

    def __post_init__(self):
        if self.n < 1 or self.K < 1 or self.n % self.K != 0:
            raise ValueError("K must divide n")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def gen_instance(config):
    """Random instance of the benchmark family: iid Gaussian square A,
    identity image map, block-weighted signal ellitope, Euclidean error
    norm.  Ill-conditioned draws are rejected and regenerated."""
    n = config.n
    for attempt in range(MAX_REGEN):
        rng = substream(config.seed, 0, attempt)
        A = rng.standard_normal((n, n))
        sv = np.linalg.svd(A, compute_uv=False)
        if sv[-1] > 0 and sv[0] / sv[-1] <= COND_LIMIT:
            if attempt:
                logger.info("regenerated A %d time(s) for conditioning", attempt)
            break
    else:
        raise RuntimeError(f"no acceptably conditioned A in {MAX_REGEN} draws")
    X = make_block_weighted(n, config.K, config.alpha)
    Bstar = make_euclidean_ball(n)
    return DesignSpec(A, np.eye(n), config.sigma, config.eps, X, Bstar)


@dataclass
class DesignResult:
    lam: np.ndarray
    mu: np.ndarray
    Theta: np.ndarray
    H: np.ndarray
    bound: float
    lower: float
    ctl: object

    def to_dict(self):
        from .symlin import eig_sorted
        U, v = eig_sorted(self.Theta)
        return {
            "lam": self.lam.tolist(),
            "mu": self.mu.tolist(),
            "theta_eigvals": v.tolist(),
            "theta_eigvecs": U.tolist(),
            "H": self.H.tolist(),
            "bound": self.bound,
            "lower": self.lower,
            "trace": {
                "calls": self.ctl.calls,
                "phases": self.ctl.phases,
                "status": self.ctl.status,
                "upper": self.ctl.upper,
                "lower": self.ctl.lower,
                "wall_time": self.ctl.wall_time,
            },
        }


@dataclass
class Report:
    bound: float
    lower: float
    calls: int
    phases: int
    wall_time: float
    risk_quantile: float = math.nan
    risk_mean: float = math.nan
    trials: int = 0
    errors: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["errors"] = list(map(float, self.errors))
        return d


def run_design(spec, config):
    """Solve the reduced design problem, lift and extract the polyhedral
    contrast.  Returns (DesignResult, Report)."""
    objective, poly = reduced_ctl_problem(spec, rho=config.rho)
    params = CtlParams(tau=config.tau, rho=config.rho,
                       target_ratio=config.target_ratio,
                       max_calls=config.max_calls)
    setup = make_setup(config.setup, poly.dim)
    res = run_ctl(objective, poly, params=params, setup=setup)
    if res.x_hat.sum() > 0.99 * poly.radius:
        logger.warning("solution within 1%% of the feasible-box boundary; "
                       "the automatic radius may be too small")
    point, Theta, _ = reduced_solution_lift(res.x_hat, spec)
    H, _ = extract_contrast(Theta, spec)
    bound = 4.0 * math.sqrt(res.upper)
    lower = 4.0 * math.sqrt(max(res.lower, 0.0))
    result = DesignResult(point.lam, point.mu, Theta, H, bound, lower, res)
    report = Report(bound, lower, res.calls, res.phases, res.wall_time)
    return result, report


def sample_signals(spec, trials, seed, boundary=True):
    """Signals for risk trials: random directions scaled to the ellitope
    boundary by bisection on membership (or uniformly shrunk inside)."""
    n = spec.n
    U = np.empty((trials, n))
    interior = np.empty(trials)
    for t in range(trials):
        rng = substream(seed, 1, t)
        U[t] = rng.standard_normal(n)
        interior[t] = rng.uniform()
    Q = spec.X.quad_values(U.T)            # (K, trials); scales as c^2

    def member(c):
        return _contains_batch(spec.X.params, (c * c)[None, :] * Q)

    hi = np.ones(trials)
    for _ in range(80):
        inside = member(hi)
        if not np.any(inside):
            break
        hi[inside] *= 2.0
    lo = np.zeros(trials)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = member(mid)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    c = lo
    if not boundary:
        c = c * interior
    return c[:, None] * U


def _contains_batch(params, Q):
    if params.kind == "unit_box":
        return (Q <= 1.0 + 1e-12).all(axis=0)
    return np.sum(Q ** params.q, axis=0) ** (1.0 / params.q) <= 1.0 + 1e-12


def sample_noise(spec, trials, seed):
    Xi = np.empty((trials, spec.m))
    for t in range(trials):
        rng = substream(seed, 2, t)
        Xi[t] = rng.standard_normal(spec.m)
    return Xi


@dataclass
class RiskSummary:
    quantile: float
    mean: float
    trials: int
    eps: float
    errors: np.ndarray

    def to_dict(self):
        return {"quantile": self.quantile, "mean": self.mean,
                "trials": self.trials, "eps": self.eps,
                "errors": self.errors.tolist()}


def monte_carlo_risk(spec, H, trials, seed, estimator="poly", boundary=True,
                     tol_rel=1e-3, max_iter=2000, noise_scale=None):
    """Empirical risk of an estimator over random boundary signals.

    estimator="poly" treats H as a polyhedral contrast; "linear" treats it
    as a linear contrast applied by transposition.  The default inner
    tolerances are looser than the single-shot solver's: risk summaries
    compare error norms, which saturate well before full convergence.
    noise_scale overrides the spec's sigma (e.g. 0 for noiseless checks).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    sigma = spec.sigma if noise_scale is None else float(noise_scale)
    Xs = sample_signals(spec, trials, seed, boundary=boundary)
    Xi = sample_noise(spec, trials, seed)
    Omegas = Xs @ spec.A.T + sigma * Xi
    W_true = Xs @ spec.B.T
    if estimator == "poly":
        _, W, _ = polyhedral_apply_batch(H, Omegas, spec.X, spec.A, B=spec.B,
                                         tol_rel=tol_rel, max_iter=max_iter)
    elif estimator == "linear":
        W = Omegas @ H
    else:
        raise ValueError(f"unknown estimator kind {estimator!r}")
    errors = np.linalg.norm(W - W_true, axis=1)
    q = float(np.quantile(errors, 1.0 - spec.eps))
    return RiskSummary(q, float(errors.mean()), trials, spec.eps, errors)


def run_sweep(config, rhos, taus):
    """Grid of design runs over oracle complexity x bundle size.  Cells are
    independent and merged by key."""
    spec = gen_instance(config)

    def cell(args):
        rho, tau = args
        cfg = ExperimentConfig(**{**config.to_dict(), "rho": rho, "tau": tau})
        t0 = time.perf_counter()
        _, report = run_design(spec, cfg)
        elapsed = time.perf_counter() - t0
        return (rho, tau), {"calls": report.calls, "phases": report.phases,
                            "wall_time": report.wall_time,
                            "cell_time": elapsed, "bound": report.bound}

    grid = [(r, t) for t in taus for r in rhos]
    with ThreadPoolExecutor(max_workers=min(4, len(grid))) as pool:
        results = dict(pool.map(cell, grid))
    return results


def sweep_table(results, rhos, taus):
    """Text table of calls/phases/seconds mirroring the benchmark layout."""
    lines = ["tau\\rho | " + " | ".join(f"rho={r}" for r in rhos)]
    for t in taus:
        cells = []
        for r in rhos:
            c = results[(r, t)]
            cells.append(f"{c['calls']}/{c['phases']}/{c['wall_time']:.2f}s")
        lines.append(f"tau={t} | " + " | ".join(cells))
    return "\n".join(lines)


def save_design(path, config, result, report):
    payload = {"config": config.to_dict(), "result": result.to_dict(),
               "report": report.to_dict()}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def load_design(path):
    with open(path) as fh:
        payload = json.load(fh)
    config = ExperimentConfig.from_dict(payload["config"])
    return config, payload["result"], payload.get("report")


def save_errors_csv(path, errors):
    with open(path, "w") as fh:
        fh.write("trial,error\n")
        for i, e in enumerate(errors):
            fh.write(f"{i},{float(e):.17g}\n")
