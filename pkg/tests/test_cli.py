import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from fisherdimer.cli import EXIT_FAIL, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, ConfigError, RunConfig, main, parse_grid
from fisherdimer.lattice import ModelParams, critical_anisotropy
from fisherdimer.sampler import load_trace
from fisherdimer.validation import exact_local


def run(tmp_path, *args, sub="out"):
    out = tmp_path / sub
    code = main(list(args) + ["--out", str(out)])
    return code, out


def rows_of(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


# ---------------------------------------------------------------- config

def test_run_config_round_trip():
    cfg = RunConfig("phase", x=[0.1, 0.5], u=["u_c", 0.3], gamma=[-1.0], alpha=[0.0, 0.5], L=40, sweeps=10,
                    rows=7, seed=3, tol=1e-9, out="o", svg=True, figure="uc", quick=True)
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_json() == cfg.to_json()


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_json(json.dumps({"subcommand": "phase", "bogus": 1}))


def test_parse_grid():
    assert parse_grid("0.1,0.2") == [0.1, 0.2]
    assert parse_grid("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("u_c, 0.3,u_i") == ["u_c", 0.3, "u_i"]
    for bad in ("abc", "0:1", "1:2:x"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_config_file_overrides_flags(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"subcommand": "phase", "x": [0.5], "u": [0.3]}))
    code, out = run(tmp_path, "phase", "--x", "0.2", "--u", "0.1,0.2", "--config", str(conf))
    assert code == EXIT_OK
    rows = rows_of(out / "phase.csv")
    assert [(r["x"], r["u"]) for r in rows] == [("0.5", "0.3")]


# ---------------------------------------------------------------- exit codes

@pytest.mark.parametrize("args", [
    ["phase", "--x", "abc"],
    ["simulate", "--L", "7"],
    ["frobnicate"],
    ["phase", "--x", "1.5"],
    ["simulate", "--x", "0.1,0.2", "--u", "0.3"],
])
def test_usage_errors(tmp_path, args, capsys):
    code, _ = run(tmp_path, *args)
    assert code == EXIT_USAGE


def test_bad_config_file(tmp_path):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"subcommand": "phase", "nonsense": 1}))
    assert run(tmp_path, "phase", "--config", str(conf))[0] == EXIT_USAGE
    conf.write_text(json.dumps({"subcommand": "kernel"}))
    assert run(tmp_path, "phase", "--config", str(conf))[0] == EXIT_USAGE
    conf.write_text("{not json")
    assert run(tmp_path, "phase", "--config", str(conf))[0] == EXIT_USAGE


def test_numeric_failure_flushes_partial_csv(tmp_path):
    code, out = run(tmp_path, "phase", "--x", "0.5", "--u", "0.3,2.5")
    assert code == EXIT_NUMERIC
    text = (out / "phase.csv").read_text()
    assert text.splitlines()[0].endswith(",failure")
    rows = rows_of(out / "phase.csv")
    assert rows[0]["regime"] == "BelowCritical" and rows[0]["failure"] == ""
    assert rows[1]["regime"] == "error" and rows[1]["failure"]


def test_help_documents_defaults(capsys):
    assert main(["simulate", "--help"]) == EXIT_OK
    text = capsys.readouterr().out
    for flag in ("--seed", "--out", "--tol", "--sweeps", "default"):
        assert flag in text


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fisherdimer", "corrlen", "--gamma", "0", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.splitlines()[0] == "gamma,xi_closed,xi_fit"


# ---------------------------------------------------------------- phase

def test_phase_default_grid_identity(tmp_path):
    code, out = run(tmp_path, "phase")
    assert code == EXIT_OK
    rows = rows_of(out / "phase.csv")
    assert len(rows) == 5 * 19
    for r in rows:
        assert abs(float(r["E_Nb"]) - float(r["E_Nac"]) - 2 * float(r["E_NX"])) < 1e-8
    curves = rows_of(out / "phase_curves.csv")
    assert len(curves) == 49 and all(float(c["u_c"]) < float(c["u_i"]) for c in curves)


def test_phase_single_point(tmp_path):
    code, out = run(tmp_path, "phase", "--x", "0.3", "--u", "0.4")
    assert code == EXIT_OK and len(rows_of(out / "phase.csv")) == 1


def test_phase_regime_flips_once_across_critical(tmp_path):
    x = 0.5
    code, out = run(tmp_path, "phase", "--x", str(x), "--u", "0.40:0.52:13")
    assert code == EXIT_OK
    rows = rows_of(out / "phase.csv")
    crit = [r["regime"] != "BelowCritical" for r in rows]
    assert sum(a != b for a, b in zip(crit, crit[1:])) == 1
    first = next(float(r["u"]) for r in rows if r["regime"] != "BelowCritical")
    assert first - 0.01 < critical_anisotropy(x) <= first


def test_phase_svg(tmp_path):
    code, out = run(tmp_path, "phase", "--x", "0.3,0.6", "--u", "0.2:0.8:4", "--svg")
    assert code == EXIT_OK
    for name in ("phase_curves.svg", "phase_difference.svg"):
        text = (out / name).read_text()
        assert text.startswith("<svg") and text.rstrip().endswith("</svg>")


def test_csv_number_format(tmp_path):
    _, out = run(tmp_path, "phase", "--x", "0.3", "--u", "0.4")
    text = (out / "phase.csv").read_text()
    assert "\r" not in text and text.endswith("\n")
    for field in text.splitlines()[1].split(",")[3:]:
        mant = field.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
        assert len(mant) <= 12


# ---------------------------------------------------------------- expect

def test_expect_row(tmp_path):
    code, out = run(tmp_path, "expect", "--x", "0.1", "--u", "u_c")
    assert code == EXIT_OK
    (row,) = rows_of(out / "expect.csv")
    p = ModelParams(0.1, critical_anisotropy(0.1))
    assert float(row["particle"]) == pytest.approx(exact_local(p)["particle"], rel=1e-11)
    assert row["regime"] == "Critical"


# ---------------------------------------------------------------- kernel and corrlen

def test_kernel_critical_row(tmp_path):
    code, out = run(tmp_path, "kernel", "--gamma", "-1", "--alpha", "0,0.5")
    assert code == EXIT_OK
    rows = rows_of(out / "kernel.csv")
    r0 = rows[0]
    assert float(r0["E1"]) == pytest.approx(1.0, abs=1e-11)
    assert float(r0["E2"]) == pytest.approx(2 / math.pi, abs=1e-11)
    assert float(r0["e"]) == pytest.approx(2 / math.pi, abs=1e-11)


def test_kernel_sign_pattern(tmp_path):
    code, out = run(tmp_path, "kernel", "--gamma", "-1.5,-0.5,0.5,1,1.5", "--alpha", "0.2", "--svg")
    assert code == EXIT_OK
    rows = rows_of(out / "kernel.csv")
    assert (out / "kernel.csv").read_text().count("gamma,alpha") == 1
    for r in rows:
        g, c = float(r["gamma"]), float(r["C"])
        assert (c > 0) if g < 1 else (c == 0) if g == 1 else (c < 0)
    assert (out / "covariance.svg").read_text().startswith("<svg")


def test_corrlen_table(tmp_path):
    code, out = run(tmp_path, "corrlen")
    assert code == EXIT_OK
    rows = {float(r["gamma"]): r for r in rows_of(out / "corrlen.csv")}
    assert rows[-1.0]["xi_closed"] == "inf"
    assert float(rows[0.0]["xi_closed"]) == pytest.approx(0.853553390593, abs=1e-12)
    assert float(rows[1.0]["xi_closed"]) == 0
    assert float(rows[3.0]["xi_closed"]) == 0.25
    for g in (-2.0, -0.5, 0.0, 0.5, 3.0):
        assert float(rows[g]["xi_fit"]) == pytest.approx(float(rows[g]["xi_closed"]), rel=0.05)


# ---------------------------------------------------------------- simulate and voter

def test_simulate_outputs_and_byte_identical_rerun(tmp_path):
    args = ("simulate", "--x", "0.3", "--u", "0.45", "--L", "20", "--sweeps", "400", "--seed", "7", "--svg")
    c1, o1 = run(tmp_path, *args, sub="a")
    c2, o2 = run(tmp_path, *args, sub="b")
    assert c1 == c2 == EXIT_OK
    for name in ("trace.bin", "census.csv", "simulate.csv", "trace.svg"):
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()
    head, trace = load_trace((o1 / "trace.bin").read_bytes())
    assert head["seed"] == 7 and head["L"] == 20 and trace.occupancy.shape == (20, 20)
    assert (o1 / "census.csv").read_text().splitlines()[0] == "kind,x0,t0,bbox_w,bbox_h,lifetime"
    c3, o3 = run(tmp_path, *args[:-2], "8", sub="c")
    assert (o3 / "trace.bin").read_bytes() != (o1 / "trace.bin").read_bytes()


def test_simulate_preset_uless_loops_only(tmp_path):
    code, out = run(tmp_path, "simulate", "--figure", "uless")
    assert code == EXIT_OK
    rows = {r["observable"]: r for r in rows_of(out / "simulate.csv")}
    assert float(rows["loop_only_fraction"]["mc"]) >= 0.95
    assert abs(float(rows["particle"]["z"])) < 3


def test_simulate_preset_uc_density(tmp_path):
    code, out = run(tmp_path, "simulate", "--figure", "uc")
    assert code == EXIT_OK
    rows = {r["observable"]: r for r in rows_of(out / "simulate.csv")}
    assert abs(float(rows["particle"]["z"])) < 3, rows["particle"]


def test_voter(tmp_path):
    code, out = run(tmp_path, "voter", "--x", "0.1", "--rows", "20000", "--seed", "1")
    assert code == EXIT_OK
    rows = {r["observable"]: r for r in rows_of(out / "voter.csv")}
    assert abs(float(rows["particle"]["z"])) < 3
    assert abs(float(rows["b_left"]["z"])) < 3
    head, trace = load_trace((out / "voter_trace.bin").read_bytes())
    assert head["rows"] == 20000 and trace.occupancy.shape == (20000, 100)


# ---------------------------------------------------------------- validate

def test_validate_quick(tmp_path):
    code, out = run(tmp_path, "validate", "--quick")
    assert code == EXIT_OK
    report = json.loads((out / "validate.json").read_text())
    assert report["passed"] and report["quick"]
    assert {c["criterion"] for c in report["criteria"]} == {1, 2, 3, 6, 12}


def test_validate_injected_fault(tmp_path):
    code, out = run(tmp_path, "validate", "--quick", "--tol", "0")
    assert code == EXIT_FAIL
    report = json.loads((out / "validate.json").read_text())
    assert not report["passed"]
    assert all(not c["passed"] and c["details"] for c in report["criteria"])
