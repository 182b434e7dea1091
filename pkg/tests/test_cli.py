import json
import subprocess
import sys
from pathlib import Path

import pytest

from majgn.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def kv(text):
    rows = {}
    for line in text.splitlines():
        parts = line.split(None, 1)
        if parts:
            rows[parts[0]] = parts[1].strip() if len(parts) > 1 else ""
    return rows


# -- radius ----------------------------------------------------------------------

def test_radius_holder(capsys):
    code, out, _ = run_cli(capsys, "radius", "--family", "holder", "--K", "1", "--p", "1",
                           "--omega1", "1", "--omega2", "0", "--theta", "0")
    assert code == 0
    assert kv(out)["r"] == "0.666666667"


def test_radius_smale(capsys):
    code, out, _ = run_cli(capsys, "radius", "--family", "smale", "--gamma", "1")
    assert code == 0
    assert kv(out)["r"].startswith("0.2192235")


def test_radius_invalid_rates(capsys):
    code, _, err = run_cli(capsys, "radius", "--family", "holder", "--K", "1", "--p", "1",
                           "--omega1", "1", "--omega2", "0.6", "--theta", "0.5")
    assert code == 2
    assert "ω1ϑ+ω2 ≥ 1" in err


def test_radius_json_and_kappa(capsys):
    code, out, _ = run_cli(capsys, "radius", "--family", "holder", "--K", "2", "--p", "1",
                           "--kappa", "0.1", "--json")
    d = json.loads(out)
    assert code == 0 and d["r"] == 0.1 and d["methods"]["rho"] == "closed_form"


def test_radius_glip(capsys):
    code, out, _ = run_cli(capsys, "radius", "--family", "glip", "--L-terms", "[[0.5, -0.5]]",
                           "--json")
    d = json.loads(out)
    assert code == 0
    assert d["nu"] == pytest.approx(1.0, rel=1e-9) and d["rho"] == pytest.approx(0.5625, rel=1e-8)


def test_radius_from_problem(capsys):
    code, out, _ = run_cli(capsys, "radius", "--problem", "exp2", "--json")
    d = json.loads(out)
    assert code == 0 and d["kappa"] == 2.0


def test_radius_needs_majorant(capsys):
    code, _, err = run_cli(capsys, "radius")
    assert code == 2 and "majorant" in err


def test_invalid_majorant_params(capsys):
    code, _, err = run_cli(capsys, "radius", "--family", "holder", "--K", "1", "--p", "2")
    assert code == 2 and "exponent" in err


# -- run -------------------------------------------------------------------------

def test_run_pure_gn(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "run", "--problem", "poly2", "--x0", "0.5", "--grad-tol", "1e-14",
                           "--out", str(tmp_path))
    s = kv(out)
    assert code == 0 and int(s["iterations"]) <= 6 and float(s["final_error"]) < 1e-9
    assert (tmp_path / "trace.csv").read_bytes() == (GOLDEN / "run_poly2_pure.csv").read_bytes()
    d = json.loads((tmp_path / "trace.json").read_text())
    assert d["records"][1]["x"] == [pytest.approx(0.05)]


def test_run_at_solution(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "run", "--problem", "poly2", "--x0", "0", "--out", str(tmp_path))
    s = kv(out)
    assert code == 0 and s["iterations"] == "0" and "immediately" in s["note"]


def test_run_synthetic_reports_ratio(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "run", "--problem", "poly2", "--residual", "synthetic",
                           "--theta", "0.2", "--x0", "0.5", "--seed", "7", "--out", str(tmp_path))
    s = kv(out)
    assert code == 0 and float(s["observed_ratio"]) <= 0.25
    assert float(s["order"]) == pytest.approx(1.0, abs=0.1)
    assert (tmp_path / "trace.csv").read_bytes() == (GOLDEN / "run_poly2_synthetic.csv").read_bytes()


def test_run_frozen_calibrated_golden(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "run", "--problem", "multi-nd", "--b-strategy", "frozen",
                           "--x0-fraction", "0.9", "--seed", "3", "--residual", "synthetic",
                           "--theta", "0.1", "--out", str(tmp_path))
    assert code == 0 and kv(out)["compliant"] == "true"
    assert (tmp_path / "trace.csv").read_bytes() == (GOLDEN / "run_multi_frozen.csv").read_bytes()


def test_run_solver_error_exit_3(capsys, tmp_path):
    problem = {"name": "cubic-fold", "polynomial": {"n": 1, "components": [
        [[1.0, [1]], [-1 / 3, [3]]], [[0.0, [1]]]]},
        "x_star": [0.0], "condition": {"family": "holder", "K": 2.0, "p": 1.0}}
    code, _, err = run_cli(capsys, "run", "--problem", json.dumps(problem), "--x0", "1",
                           "--out", str(tmp_path))
    assert code == 3 and "iteration 0" in err


def test_run_wrong_x0_length(capsys, tmp_path):
    code, _, err = run_cli(capsys, "run", "--problem", "multi-nd", "--x0", "1,2",
                           "--out", str(tmp_path))
    assert code == 2 and "x0" in err


def test_unknown_problem_exit_2(capsys):
    code, _, err = run_cli(capsys, "run", "--problem", "nope")
    assert code == 2 and "unknown problem" in err


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = {"problem": "poly2", "rates": {"theta": 0.2}, "residual": {"mode": "synthetic"},
           "x0": [0.5], "seed": 7, "out": str(tmp_path / "a")}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert run_cli(capsys, "run", "--config", str(path))[0] == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (GOLDEN / "run_poly2_synthetic.csv").read_bytes()
    assert run_cli(capsys, "run", "--config", str(path), "--residual", "exact",
                   "--out", str(tmp_path / "b"))[0] == 0
    assert (tmp_path / "b" / "trace.csv").read_text().splitlines()[2].startswith("1,0.05,")


def test_bad_config_file(capsys, tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json")
    assert run_cli(capsys, "run", "--config", str(path))[0] == 2


def test_seed_env_override(capsys, tmp_path, monkeypatch):
    args = ["run", "--problem", "poly2", "--residual", "synthetic", "--theta", "0.2", "--x0", "0.5"]
    monkeypatch.setenv("MAJGN_SEED", "7")
    run_cli(capsys, *args, "--out", str(tmp_path / "env"))
    monkeypatch.delenv("MAJGN_SEED")
    run_cli(capsys, *args, "--out", str(tmp_path / "dflt"))
    env = (tmp_path / "env" / "trace.csv").read_bytes()
    assert env == (GOLDEN / "run_poly2_synthetic.csv").read_bytes()
    assert env != (tmp_path / "dflt" / "trace.csv").read_bytes()


# -- certify ------------------------------------------------------------------------

def test_certify_pure_gn(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "certify", "--problem", "poly2", "--x0", "0.5", "--out", str(tmp_path))
    assert code == 0 and kv(out)["ok"] == "true"
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["ok"] and rep["bound_ok"] and rep["step_ok"]
    assert (tmp_path / "bounds.csv").read_text().startswith("k,error,t_k,slack")


def test_certify_fault_injection(capsys, tmp_path):
    code, _, err = run_cli(capsys, "certify", "--problem", "poly2", "--x0", "0.5",
                           "--inject-fault", "10", "--out", str(tmp_path))
    assert code == 4 and "bound violated" in err


def test_certify_glip_sing(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "certify", "--problem", "glip-sing", "--out", str(tmp_path))
    assert code == 0 and kv(out)["ok"] == "true"


def test_certify_outside_radius_is_config_error(capsys, tmp_path):
    code, _, err = run_cli(capsys, "certify", "--problem", "poly2", "--x0", "0.7", "--out", str(tmp_path))
    assert code == 2 and "r =" in err


# -- matrix -----------------------------------------------------------------------------

def test_matrix_single_problem(capsys, tmp_path):
    cfg = {"matrix": {"strategies": [{"kind": "exact"}, {"kind": "frozen"}],
                      "residuals": [{"mode": "synthetic", "theta": 0.1}], "fractions": [0.5]}}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(capsys, "matrix", "--config", str(path), "--problem", "poly2",
                           "--out", str(tmp_path))
    assert code == 0 and kv(out)["failed"] == "0"
    lines = (tmp_path / "matrix.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].startswith("problem,strategy,residual")


def test_matrix_parallel_matches_serial(capsys, tmp_path):
    cfg = {"matrix": {"problems": ["poly2", "exp2"], "strategies": [{"kind": "exact"}],
                      "residuals": [{"mode": "synthetic", "theta": 0.3}], "fractions": [0.5, 0.9]}}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(cfg))
    run_cli(capsys, "matrix", "--config", str(path), "--out", str(tmp_path / "s"))
    run_cli(capsys, "matrix", "--config", str(path), "--jobs", "2", "--out", str(tmp_path / "p"))
    assert (tmp_path / "s" / "matrix.csv").read_bytes() == (tmp_path / "p" / "matrix.csv").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "majgn", "radius", "--family", "smale", "--gamma", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "0.109611797" in proc.stdout
