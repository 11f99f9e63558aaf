import json
import math
import os

import numpy as np
import pytest

from ellest.harness import (ExperimentConfig, Report, gen_instance,
                            load_design, monte_carlo_risk, run_design,
                            run_sweep, sample_signals, save_design,
                            save_errors_csv, substream, sweep_table)


def small_config(**kw):
    base = dict(n=16, K=4, sigma=0.1, eps=0.05, seed=7, rho=4, tau=4,
                trials=50, max_calls=400)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(n=10, K=3)
        with pytest.raises(ValueError):
            ExperimentConfig(n=8, K=2, eps=2.0)
        with pytest.raises(ValueError):
            ExperimentConfig(n=8, K=2, sigma=0.0)

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            ExperimentConfig.from_dict({"n": 8, "K": 2, "bogus": 1})

    def test_roundtrip(self):
        cfg = small_config()
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


class TestGenInstance:
    def test_reproducible(self):
        cfg = small_config()
        s1 = gen_instance(cfg)
        s2 = gen_instance(cfg)
        np.testing.assert_array_equal(s1.A, s2.A)

    def test_seed_changes_instance(self):
        a = gen_instance(small_config()).A
        b = gen_instance(small_config(seed=8)).A
        assert np.abs(a - b).max() > 0.1

    def test_identity_image_map(self):
        spec = gen_instance(small_config())
        np.testing.assert_array_equal(spec.B, np.eye(16))

    def test_signal_set_shape(self):
        spec = gen_instance(small_config())
        assert spec.X.nforms == 4
        np.testing.assert_allclose(
            np.diag(spec.X.weighted_sum(np.ones(4))), np.arange(1.0, 17.0))

    def test_conditioning_enforced(self):
        spec = gen_instance(small_config())
        assert spec.condA <= 1e8


class TestSampling:
    def test_boundary_signals(self):
        spec = gen_instance(small_config())
        Xs = sample_signals(spec, 64, seed=3, boundary=True)
        Q = spec.X.quad_values(Xs.T)
        # on the boundary the binding constraint is tight
        np.testing.assert_allclose(Q.max(axis=0), 1.0, rtol=1e-9)

    def test_boundary_matches_closed_form(self):
        spec = gen_instance(small_config())
        Xs = sample_signals(spec, 16, seed=3, boundary=True)
        for t in range(16):
            u = substream(3, 1, t).standard_normal(16)
            c = 1.0 / math.sqrt(spec.X.quad_values(u).max())
            np.testing.assert_allclose(Xs[t], c * u, rtol=1e-9)

    def test_interior_sampling_inside(self):
        spec = gen_instance(small_config())
        Xs = sample_signals(spec, 64, seed=3, boundary=False)
        Q = spec.X.quad_values(Xs.T)
        assert np.all(Q.max(axis=0) <= 1.0 + 1e-9)


class TestRunDesign:
    def test_end_to_end(self):
        cfg = small_config()
        spec = gen_instance(cfg)
        result, report = run_design(spec, cfg)
        assert result.ctl.status == "converged"
        assert report.bound >= report.lower
        assert report.bound <= cfg.target_ratio * report.lower + 1e-9
        sc = spec.sigma * spec.chi
        np.testing.assert_allclose(np.linalg.norm(result.H, axis=0),
                                   1.0 / sc, rtol=1e-9)

    def test_bound_formula(self):
        cfg = small_config()
        spec = gen_instance(cfg)
        result, report = run_design(spec, cfg)
        assert report.bound == pytest.approx(
            4.0 * math.sqrt(result.ctl.upper))

    def test_deterministic_given_config(self):
        cfg = small_config()
        spec = gen_instance(cfg)
        r1, rep1 = run_design(spec, cfg)
        r2, rep2 = run_design(spec, cfg)
        assert rep1.bound == rep2.bound
        assert rep1.calls == rep2.calls
        np.testing.assert_array_equal(r1.H, r2.H)


class TestMonteCarlo:
    def test_exact_linear_recovery_zero_noise(self):
        spec = gen_instance(small_config())
        H_lin = np.linalg.solve(spec.A.T, spec.B.T)   # H^T A = B
        summary = monte_carlo_risk(spec, H_lin, trials=64, seed=5,
                                   estimator="linear", noise_scale=0.0)
        assert np.abs(summary.errors).max() <= 1e-10

    def test_quantile_below_bound(self):
        cfg = small_config(trials=100)
        spec = gen_instance(cfg)
        result, report = run_design(spec, cfg)
        summary = monte_carlo_risk(spec, result.H, trials=100, seed=11)
        assert summary.quantile <= report.bound
        assert summary.mean <= summary.errors.max()

    def test_reproducible(self):
        spec = gen_instance(small_config())
        H = np.linalg.solve(spec.A.T, spec.B.T)
        s1 = monte_carlo_risk(spec, H, 32, seed=2, estimator="linear")
        s2 = monte_carlo_risk(spec, H, 32, seed=2, estimator="linear")
        np.testing.assert_array_equal(s1.errors, s2.errors)

    def test_bootstrap_ci_shrinks(self):
        spec = gen_instance(small_config())
        H = np.linalg.solve(spec.A.T, spec.B.T)
        rng = np.random.default_rng(0)

        def ci_width(trials):
            s = monte_carlo_risk(spec, H, trials, seed=4, estimator="linear")
            boots = [np.quantile(rng.choice(s.errors, trials), 0.95)
                     for _ in range(400)]
            lo, hi = np.quantile(boots, [0.05, 0.95])
            return hi - lo

        assert ci_width(1200) < 0.85 * ci_width(300)


class TestSweep:
    def test_grid_and_table(self):
        cfg = small_config()
        results = run_sweep(cfg, rhos=[1, 4], taus=[1, 4])
        assert set(results) == {(1, 1), (1, 4), (4, 1), (4, 4)}
        table = sweep_table(results, [1, 4], [1, 4])
        assert "rho=1" in table and "tau=4" in table
        for cell in results.values():
            assert cell["calls"] >= 1

    def test_cells_reproducible(self):
        cfg = small_config()
        r1 = run_sweep(cfg, rhos=[1, 4], taus=[4])
        r2 = run_sweep(cfg, rhos=[4], taus=[4])
        assert r1[(4, 4)]["calls"] == r2[(4, 4)]["calls"]
        assert r1[(4, 4)]["bound"] == r2[(4, 4)]["bound"]


class TestSerialization:
    def test_design_roundtrip(self, tmp_path):
        cfg = small_config()
        spec = gen_instance(cfg)
        result, report = run_design(spec, cfg)
        path = tmp_path / "design.json"
        save_design(path, cfg, result, report)
        cfg2, result_dict, report_dict = load_design(path)
        assert cfg2 == cfg
        np.testing.assert_allclose(np.asarray(result_dict["H"]), result.H)
        U = np.asarray(result_dict["theta_eigvecs"])
        v = np.asarray(result_dict["theta_eigvals"])
        np.testing.assert_allclose((U * v) @ U.T, result.Theta, atol=1e-10)
        assert report_dict["bound"] == report.bound

    def test_errors_csv(self, tmp_path):
        path = tmp_path / "errors.csv"
        save_errors_csv(path, [0.5, 1.25])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "trial,error"
        assert lines[1].startswith("0,0.5")

    def test_trace_csv(self, tmp_path):
        cfg = small_config()
        spec = gen_instance(cfg)
        result, _ = run_design(spec, cfg)
        path = tmp_path / "trace.csv"
        result.ctl.trace.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "call,phase,upper,lower,gap,wall_ms"
