import json
import os

import numpy as np
import pytest

from ellest.cli import main


def run_cli(args):
    return main(args)


def base_args(outdir, extra=()):
    return ["design", "--n", "8", "--K", "2", "--rho", "2", "--tau", "3",
            "--seed", "1", "--max-calls", "300", "--out", str(outdir),
            *extra]


class TestDesign:
    def test_smoke(self, tmp_path, capsys):
        code = run_cli(base_args(tmp_path))
        assert code == 0
        out = capsys.readouterr().out
        assert "certified bound" in out
        assert (tmp_path / "design.json").exists()
        assert (tmp_path / "trace.csv").exists()
        payload = json.loads((tmp_path / "design.json").read_text())
        assert payload["report"]["bound"] >= payload["report"]["lower"]

    def test_check_mode_passes(self, tmp_path):
        assert run_cli(base_args(tmp_path, ("--check",))) == 0

    def test_missing_key_exits_one(self, capsys):
        code = run_cli(["design", "--K", "2"])
        assert code == 1
        assert "missing config key: n" in capsys.readouterr().err

    def test_bad_config_value(self, capsys):
        code = run_cli(["design", "--n", "9", "--K", "2"])
        assert code == 1

    def test_budget_exit_code(self, tmp_path, capsys):
        code = run_cli(["design", "--n", "8", "--K", "2", "--rho", "1",
                        "--tau", "1", "--max-calls", "3", "--ratio", "1.0001",
                        "--out", str(tmp_path)])
        assert code == 2


class TestConfigFile:
    def test_file_plus_override(self, tmp_path, capsys):
        cfg = {"n": 8, "K": 2, "rho": 2, "tau": 3, "seed": 1,
               "max_calls": 300, "out": str(tmp_path / "a")}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code = run_cli(["design", "--config", str(path),
                        "--out", str(tmp_path / "b")])
        assert code == 0
        assert (tmp_path / "b" / "design.json").exists()
        assert not (tmp_path / "a").exists()

    def test_missing_file(self, capsys):
        assert run_cli(["design", "--config", "/nonexistent.json"]) == 1

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        assert run_cli(["design", "--config", str(path)]) == 1

    def test_unknown_key_named(self, tmp_path, capsys):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"n": 8, "K": 2, "frobnicate": 1}))
        assert run_cli(["design", "--config", str(path)]) == 1
        assert "frobnicate" in capsys.readouterr().err


class TestRiskAndConvert:
    @pytest.fixture
    def design_dir(self, tmp_path):
        assert run_cli(base_args(tmp_path)) == 0
        return tmp_path

    def test_risk(self, design_dir, capsys):
        code = run_cli(["risk", "--result", str(design_dir / "design.json"),
                        "--trials", "40", "--out", str(design_dir),
                        "--check"])
        assert code == 0
        out = capsys.readouterr().out
        assert "quantile" in out
        assert (design_dir / "risk.json").exists()
        assert (design_dir / "errors.csv").exists()
        payload = json.loads((design_dir / "risk.json").read_text())
        assert payload["summary"]["trials"] == 40

    def test_risk_missing_result(self):
        assert run_cli(["risk", "--result", "/nope.json"]) == 1

    def test_convert(self, design_dir, capsys):
        code = run_cli(["convert", "--result",
                        str(design_dir / "design.json"),
                        "--out", str(design_dir), "--check"])
        assert code == 0
        payload = json.loads((design_dir / "linear.json").read_text())
        H = np.asarray(payload["H_lin"])
        assert H.shape == (8, 8)
        assert payload["lmi_min_eig"] >= -1e-6


class TestSweep:
    def test_sweep_table(self, tmp_path, capsys):
        code = run_cli(["sweep", "--n", "8", "--K", "2", "--seed", "1",
                        "--max-calls", "300", "--rhos", "1,2", "--taus",
                        "1,3", "--out", str(tmp_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "rho=1" in out and "tau=3" in out
        payload = json.loads((tmp_path / "sweep.json").read_text())
        assert len(payload["cells"]) == 4
