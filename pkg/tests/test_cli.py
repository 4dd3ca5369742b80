"""Exit codes, JSON/CSV emission, config files, and the env seed override."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from lrnorm_lab import adapt, harness, kernels, polyapprox
from lrnorm_lab.cli import main
from lrnorm_lab.errors import NumericalFailure


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


# ---------------------------------------------------------------------------
# small probes: approx, hermite, kernel
# ---------------------------------------------------------------------------

def test_approx_emits_contract_fields(tmp_path, capsys):
    out = tmp_path / "coeffs.json"
    assert main(["approx", "--r", "1", "--degree", "2", "--emit", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert set(payload) == {"r", "K", "coeffs", "supError", "alternationPoints"}
    assert payload["K"] == 2
    assert payload["coeffs"] == pytest.approx([0.125, 0.0, 1.0], abs=1e-12)
    assert payload["supError"] == pytest.approx(0.125, abs=1e-12)
    assert capsys.readouterr().out == ""  # emitted, not printed


def test_approx_prints_json_without_emit(capsys):
    assert main(["approx", "--r", "1.5", "--degree", "4"]) == 0
    payload = _json_out(capsys)
    assert payload["K"] == 4 and len(payload["coeffs"]) == 5


def test_hermite_prints_value(capsys):
    assert main(["hermite", "--k", "3", "--x", "2.0"]) == 0
    assert float(capsys.readouterr().out) == 2.0  # H_3(2) = 8 - 6


def test_kernel_payload(capsys):
    assert main(["kernel", "--order", "2"]) == 0
    payload = _json_out(capsys)
    assert payload["M"] == 2
    assert payload["l2Norm"] == pytest.approx(1.5, rel=1e-12)  # ||K||_2^2 = 9/4
    assert max(payload["reproductionResiduals"]) <= 1e-8


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_emits_midpoint_csv(tmp_path):
    out = tmp_path / "path.csv"
    code = main(["simulate", "--signal", "const:1.3", "--n", "100", "--sigma", "0",
                 "--m", "100", "--emit", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,dY"
    assert len(lines) == 101
    t0, dy0 = (float(v) for v in lines[1].split(","))
    assert t0 == 0.005
    assert dy0 == pytest.approx(1.3 / 100, rel=1e-12)  # noiseless cell mass


def test_simulate_multi_split_columns(capsys):
    code = main(["simulate", "--signal", "const:0.0", "--n", "100", "--splits", "2",
                 "--m", "100", "--seed", "4"])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,dY1,dY2"
    assert len(lines[1].split(",")) == 3


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

def test_estimate_noiseless_constant(capsys):
    code = main(["estimate", "--r", "1", "--signal", "const:1.3", "--n", "512",
                 "--h", "0.1", "--sigma", "0"])
    assert code == 0
    payload = _json_out(capsys)
    assert payload["mode"] == "r1"
    assert payload["mean"] == pytest.approx(1.3, abs=1e-9)
    assert payload["truth"] == 1.3
    assert payload["values"] == [payload["mean"]]


def test_estimate_auto_bandwidth_uses_schedule(capsys):
    code = main(["estimate", "--r", "1", "--signal", "const:1.3", "--n", "512",
                 "--sigma", "0", "--s", "1.5"])
    assert code == 0
    payload = _json_out(capsys)
    assert payload["h"] == pytest.approx(harness.rate_bandwidth(1.0, 1.5, 512))


def test_estimate_mode_conflict_is_parameter_error(capsys):
    code = main(["estimate", "--r", "1", "--mode", "even", "--signal", "const:1.3",
                 "--n", "512", "--h", "0.1"])
    assert code == 1
    assert "conflicts" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# adapt
# ---------------------------------------------------------------------------

def test_adapt_noiseless_constant_selects_hmax(capsys):
    code = main(["adapt", "--r", "1", "--n", "256", "--sigma", "0",
                 "--signal", "const:1.3", "--cstar", "1.0"])
    assert code == 0
    payload = _json_out(capsys)
    grid = adapt.make_bandwidth_grid(256)
    assert payload["hhat"] == pytest.approx(grid.candidates[0])
    assert payload["That"] == pytest.approx(1.3, abs=1e-9)
    assert len(payload["perCandidate"]) == len(grid.candidates)
    assert payload["cstar"] == 1.0


def test_adapt_auto_calibration(capsys):
    code = main(["adapt", "--r", "1", "--n", "256", "--seed", "3",
                 "--calibration-reps", "100"])
    assert code == 0
    payload = _json_out(capsys)
    assert payload["cstar"] > 0.01  # real noise needs a real band
    assert payload["hhat"] == pytest.approx(adapt.make_bandwidth_grid(256).candidates[0])


# ---------------------------------------------------------------------------
# rates / lowerbound / invariants
# ---------------------------------------------------------------------------

def test_rates_degenerate_run_and_artifacts(tmp_path, capsys):
    out = tmp_path / "rates"
    code = main(["rates", "--r", "1", "--signal", "const:1.3", "--sigma", "0",
                 "--n-grid", "256,512,1024", "--reps", "1", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "degenerate fit" in text and "n=256" in text
    payload = json.loads((out / "rates.json").read_text())
    assert payload["degenerateFit"] is True
    assert (out / "rates.csv").read_text().splitlines()[0].startswith("n,h,")


def test_rates_requires_signal(capsys):
    code = main(["rates", "--r", "1", "--n-grid", "256,512,1024", "--reps", "1"])
    assert code == 1
    assert "--signal" in capsys.readouterr().err


def test_lowerbound_condition_report(tmp_path):
    out = tmp_path / "priors.json"
    code = main(["lowerbound", "--r", "1", "--p", "2", "--lnN", "9",
                 "--emit", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["separation"] > 0
    assert max(payload["momentResiduals"]) <= 1e-8
    assert sum(payload["mu0"]["weights"]) == pytest.approx(1.0, abs=1e-12)
    assert payload["d"] == 1.0  # documented default


def test_invariants_pass_and_scorecard(tmp_path, capsys):
    out = tmp_path / "inv"
    assert main(["invariants", "--out", str(out)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith("PASS") for line in lines[:-1])
    assert lines[-1].endswith("invariants passed")
    scorecard = json.loads((out / "invariants.json").read_text())
    assert scorecard["allPassed"] is True


def test_invariants_failures_exit_three(monkeypatch, capsys):
    real = kernels.lambda_h
    monkeypatch.setattr(kernels, "lambda_h", lambda *a, **k: 1.01 * real(*a, **k))
    assert main(["invariants"]) == 3
    assert "FAIL kernel-interior-noise-scale" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# option resolution: config files, env seed, exit codes
# ---------------------------------------------------------------------------

def test_config_file_supplies_options(tmp_path, capsys):
    cfg = tmp_path / "approx.cfg"
    cfg.write_text("r=1.0\ndegree=2\n")
    assert main(["approx", "--config", str(cfg)]) == 0
    assert _json_out(capsys)["K"] == 2


def test_cli_flags_beat_config_file(tmp_path, capsys):
    cfg = tmp_path / "approx.cfg"
    cfg.write_text("r=1.0\ndegree=2\n")
    assert main(["approx", "--config", str(cfg), "--degree", "4"]) == 0
    assert _json_out(capsys)["K"] == 4


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "approx.cfg"
    cfg.write_text("r=1.0\ndegree=2\nbogus=1\n")
    assert main(["approx", "--config", str(cfg)]) == 1
    assert "bogus" in capsys.readouterr().err


def test_env_seed_overrides_flag_and_config(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("LRNORM_SEED", "123")
    code = main(["estimate", "--r", "1", "--signal", "const:1.3", "--n", "512",
                 "--h", "0.1", "--sigma", "0", "--seed", "7"])
    assert code == 0
    assert _json_out(capsys)["seed"] == 123


def test_env_seed_must_be_integer(monkeypatch, capsys):
    monkeypatch.setenv("LRNORM_SEED", "xyz")
    assert main(["invariants"]) == 1
    assert "LRNORM_SEED" in capsys.readouterr().err


def test_missing_required_option_exits_one(capsys):
    assert main(["approx", "--r", "1"]) == 1
    assert "missing required option --degree" in capsys.readouterr().err


def test_bad_flag_value_exits_one(capsys):
    assert main(["approx", "--r", "1", "--degree", "four"]) == 1
    assert "invalid int value" in capsys.readouterr().err


def test_numerical_failure_exits_two(monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericalFailure("injected non-convergence")

    monkeypatch.setattr(polyapprox, "best_poly_approx", boom)
    assert main(["approx", "--r", "1", "--degree", "2"]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "lrnorm_lab.cli", "hermite", "--k", "2", "--x", "0"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert float(proc.stdout) == -1.0  # H_2(0)
