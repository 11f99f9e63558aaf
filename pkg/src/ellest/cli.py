"""Command line interface.

Subcommands: design (one experiment), risk (Monte-Carlo verification of a
saved design), sweep (grid over oracle complexity x bundle size), convert
(polyhedral-to-linear contrast conversion of a saved design).

Configuration comes from a flat JSON file (--config) whose keys mirror
ExperimentConfig; explicit flags override file values.  Exit codes:
0 ok, 1 configuration error, 2 solver budget exhausted, 3 failed check
in --check mode.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BUDGET = 2
EXIT_CHECK = 3


class ConfigError(Exception):
    pass


def _parse_int_list(text):
    return [int(tok) for tok in str(text).split(",") if tok != ""]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ellest",
        description="first-order design of linear and polyhedral estimates")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--n", type=int)
        p.add_argument("--K", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--rho", type=int)
        p.add_argument("--tau", type=int)
        p.add_argument("--setup", choices=["euclid", "l1l2"])
        p.add_argument("--ratio", type=float, dest="target_ratio")
        p.add_argument("--trials", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--max-calls", type=int, dest="max_calls")
        p.add_argument("--out", help="output directory")
        p.add_argument("--check", action="store_true",
                       help="exit 3 when post-checks fail")

    p_design = sub.add_parser("design", help="run one design experiment")
    add_common(p_design)

    p_risk = sub.add_parser("risk", help="Monte-Carlo risk of a saved design")
    p_risk.add_argument("--result", required=True, help="design JSON path")
    p_risk.add_argument("--trials", type=int)
    p_risk.add_argument("--seed", type=int)
    p_risk.add_argument("--interior", action="store_true",
                        help="sample signals uniformly inside instead of on "
                             "the boundary")
    p_risk.add_argument("--out")
    p_risk.add_argument("--check", action="store_true")

    p_sweep = sub.add_parser("sweep", help="grid over rho x tau")
    add_common(p_sweep)
    p_sweep.add_argument("--rhos", default=None,
                         help="comma list (overrides --rho)")
    p_sweep.add_argument("--taus", default=None,
                         help="comma list (overrides --tau)")

    p_conv = sub.add_parser("convert",
                            help="polyhedral-to-linear contrast conversion")
    p_conv.add_argument("--result", required=True)
    p_conv.add_argument("--out")
    p_conv.add_argument("--check", action="store_true")
    return parser


def load_config(args, required=("n", "K")):
    from .harness import ExperimentConfig

    file_values = {}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                file_values = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a flat JSON object")
    merged = dict(file_values)
    for name in ("n", "K", "alpha", "sigma", "eps", "rho", "tau", "setup",
                 "target_ratio", "trials", "seed", "max_calls", "out"):
        val = getattr(args, name, None)
        if val is not None:
            merged[name] = val
    for key in required:
        if key not in merged:
            raise ConfigError(f"missing config key: {key}")
    try:
        return ExperimentConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def _outdir(config_or_path):
    out = config_or_path if isinstance(config_or_path, str) else config_or_path.out
    out = out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_design(args):
    from . import harness

    config = load_config(args)
    spec = harness.gen_instance(config)
    result, report = harness.run_design(spec, config)
    out = _outdir(config)
    harness.save_design(os.path.join(out, "design.json"), config, result, report)
    result.ctl.trace.to_csv(os.path.join(out, "trace.csv"))
    print(f"certified bound {report.bound:.6g} (lower {report.lower:.6g}), "
          f"{report.calls} calls, {report.phases} phases, "
          f"{report.wall_time:.2f}s")
    if result.ctl.status == "budget":
        print("solver stopped on call budget", file=sys.stderr)
        return EXIT_BUDGET
    if args.check:
        sc = spec.sigma * spec.chi
        norms = np.linalg.norm(result.H, axis=0)
        ok = (np.allclose(norms, 1.0 / sc, rtol=1e-6)
              and report.bound <= config.target_ratio * report.lower + 1e-9
              and report.bound >= report.lower)
        if not ok:
            print("design post-checks failed", file=sys.stderr)
            return EXIT_CHECK
    return EXIT_OK


def cmd_risk(args):
    from . import harness

    if not os.path.exists(args.result):
        raise ConfigError(f"result file not found: {args.result}")
    config, result_dict, _ = harness.load_design(args.result)
    if args.trials is not None:
        config.trials = args.trials
    seed = args.seed if args.seed is not None else config.seed
    spec = harness.gen_instance(config)
    H = np.asarray(result_dict["H"], dtype=float)
    summary = harness.monte_carlo_risk(
        spec, H, config.trials, seed,
        estimator="poly", boundary=not args.interior)
    out = _outdir(args.out or config.out)
    with open(os.path.join(out, "risk.json"), "w") as fh:
        json.dump({"config": config.to_dict(), "seed": seed,
                   "bound": result_dict["bound"],
                   "summary": {k: v for k, v in summary.to_dict().items()
                               if k != "errors"}}, fh, indent=2)
    harness.save_errors_csv(os.path.join(out, "errors.csv"), summary.errors)
    print(f"empirical {1 - spec.eps:.2f}-quantile {summary.quantile:.6g}, "
          f"mean {summary.mean:.6g}, certified bound {result_dict['bound']:.6g}")
    if args.check and summary.quantile > result_dict["bound"]:
        print("empirical quantile exceeds the certified bound", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_sweep(args):
    from . import harness

    config = load_config(args)
    rhos = _parse_int_list(args.rhos) if args.rhos else [config.rho]
    taus = _parse_int_list(args.taus) if args.taus else [config.tau]
    results = harness.run_sweep(config, rhos, taus)
    table = harness.sweep_table(results, rhos, taus)
    print(table)
    out = _outdir(config)
    payload = {"config": config.to_dict(),
               "cells": [{"rho": r, "tau": t, **results[(r, t)]}
                         for (r, t) in results]}
    with open(os.path.join(out, "sweep.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
    return EXIT_OK


def cmd_convert(args):
    from . import harness
    from .design import DualPoint, poly_to_linear
    from .symlin import assemble_linear_lmi, min_eig

    if not os.path.exists(args.result):
        raise ConfigError(f"result file not found: {args.result}")
    config, result_dict, _ = harness.load_design(args.result)
    spec = harness.gen_instance(config)
    U = np.asarray(result_dict["theta_eigvecs"], dtype=float)
    v = np.asarray(result_dict["theta_eigvals"], dtype=float)
    Theta = (U * v) @ U.T
    point = DualPoint(result_dict["lam"], result_dict["mu"])
    point2, H_lin, Theta, _ = poly_to_linear(point, Theta, spec)
    lmi = assemble_linear_lmi(point2.lam, point2.mu, H_lin, Theta, spec)
    eig_floor = min_eig(lmi)
    scale = max(np.abs(lmi).max(), 1.0)
    out = _outdir(args.out or config.out)
    with open(os.path.join(out, "linear.json"), "w") as fh:
        json.dump({"lam": point2.lam.tolist(), "mu": point2.mu.tolist(),
                   "H_lin": H_lin.tolist(), "lmi_min_eig": eig_floor},
                  fh, indent=2)
    print(f"linear contrast written; certificate LMI min eig {eig_floor:.3e}")
    if args.check and eig_floor < -1e-6 * scale:
        print("feasibility certificate failed", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"design": cmd_design, "risk": cmd_risk,
                "sweep": cmd_sweep, "convert": cmd_convert}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
