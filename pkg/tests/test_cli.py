"""Command line front end: exit codes, artifacts, certificate schema and determinism."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from evoeq import __version__
from evoeq.cli import SCHEMA, run
from evoeq.signal import WeightedSignal, load_csv, make_grid, save_csv

CERT_KEYS = {"schema", "version", "subcommand", "inputs", "values", "checks", "passed"}
CHECK_KEYS = {"name", "value", "threshold", "passed", "hypothesis"}


def certificate(out):
    return json.loads((out / "certificate.json").read_text())


def assert_schema(doc, subcommand):
    assert CERT_KEYS <= set(doc)
    assert doc["schema"] == SCHEMA
    assert doc["version"] == __version__
    assert doc["subcommand"] == subcommand
    assert isinstance(doc["checks"], list) and doc["checks"]
    for c in doc["checks"]:
        assert set(c) == CHECK_KEYS
        assert isinstance(c["passed"], bool)
        assert isinstance(c["name"], str) and c["hypothesis"]
    assert doc["passed"] == all(c["passed"] for c in doc["checks"])


# ------------------------------------------------------------- subcommands


def test_solve_heat_ivp(tmp_path):
    code = run(["solve", "--preset", "heat", "--ivp", "sin-mode", "--nu", "auto", "--out", str(tmp_path)])
    assert code == 0
    doc = certificate(tmp_path)
    assert_schema(doc, "solve")
    assert doc["passed"]
    assert doc["values"]["c"] > 0 and doc["values"]["nu"] > 0
    U = load_csv(tmp_path / "trajectory.csv")
    assert U.grid.n == 2048


def test_solve_pulse_checks_norm_bound(tmp_path):
    assert run(["solve", "--preset", "wave", "--space", "0,1,16", "--grid", "0,1/32,512",
                "--out", str(tmp_path)]) == 0
    names = {c["name"] for c in certificate(tmp_path)["checks"]}
    assert {"norm_bound", "residual", "positivity"} <= names


def test_dae_golden(tmp_path):
    assert run(["dae", "--pair", "paper-2x2", "--u0", "1,0", "--out", str(tmp_path)]) == 0
    doc = certificate(tmp_path)
    assert_schema(doc, "dae")
    assert doc["values"]["k"] == 1
    assert doc["values"]["wong_stabilization"] == 1
    U = load_csv(tmp_path / "trajectory.csv")
    t = U.times
    assert np.max(np.abs(U.values[:, 0] - np.exp(-t))) < 1e-8
    assert np.max(np.abs(U.values[:, 1])) < 1e-8


def test_dae_rlc_and_file_input(tmp_path):
    assert run(["dae", "--pair", "rlc", "--out", str(tmp_path / "rlc")]) == 0
    pair = tmp_path / "pair.json"
    pair.write_text(json.dumps({"M0": [[1, 0], [0, 0]], "M1": [[1, 0], [0, 1]]}))
    assert run(["dae", "--input", str(pair), "--out", str(tmp_path / "file")]) == 0
    assert certificate(tmp_path / "file")["values"]["k"] == 1


def test_ode(tmp_path):
    assert run(["ode", "--problem", "riccati", "--out", str(tmp_path)]) == 0
    doc = certificate(tmp_path)
    assert_schema(doc, "ode")
    assert {c["name"] for c in doc["checks"]} >= {"contraction", "exact_error"}


def test_homogenize_sin_memory(tmp_path):
    assert run(["homogenize", "--problem", "ode-sin-memory", "--n", "128", "--out", str(tmp_path)]) == 0
    doc = certificate(tmp_path)
    assert_schema(doc, "homogenize")
    rows = list(csv.reader(open(tmp_path / "errors.csv")))
    assert rows[0] == ["n", "error_bessel", "error_series"]
    assert int(rows[1][0]) == 128
    assert float(rows[1][1]) < 1e-3


def test_homogenize_cell(tmp_path):
    assert run(["homogenize", "--problem", "cell-1d", "--seed", "4", "--out", str(tmp_path)]) == 0
    assert certificate(tmp_path)["values"]["cells"] == 1024


@pytest.mark.parametrize("name", ["heat", "dpl", "counterexample"])
def test_stability(tmp_path, name):
    assert run(["stability", "--preset", name, "--out", str(tmp_path)]) == 0
    assert_schema(certificate(tmp_path), "stability")


def test_transform(tmp_path):
    grid = make_grid(-1.0, 0.01, 256)
    f = WeightedSignal(grid, 1.0, np.exp(-grid.times**2))
    save_csv(f, tmp_path / "f.csv")
    assert run(["transform", "--input", str(tmp_path / "f.csv"), "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "spectrum.csv")))
    omegas = [float(r[0]) for r in rows[1:]]
    assert omegas == sorted(omegas)
    assert len(omegas) == 256


# --------------------------------------------------------------- exit codes


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["nonsense"],
        ["solve", "--preset", "no-such-preset"],
        ["solve", "--preset", "heat", "--grid", "0,1"],
        ["solve", "--preset", "heat", "--nu", "fast"],
        ["solve", "--preset", "heat", "--ivp", "square"],
        ["dae", "--pair", "unknown"],
        ["dae", "--pair", "rlc", "--u0", "1,0"],
        ["ode", "--problem", "chaos"],
        ["homogenize", "--problem", "ode-sin-memory", "--n", "a,b"],
        ["stability", "--preset", "wave"],
        ["transform"],
        ["solve", "--unknown-flag"],
    ],
)
def test_usage_errors(tmp_path, argv, capsys):
    assert run(argv + ["--out", str(tmp_path)] if argv else argv) == 1
    assert "evoeq" in capsys.readouterr().err


def test_missing_input_file(tmp_path):
    assert run(["transform", "--input", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]) == 1
    assert run(["dae", "--input", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 1


def test_certificate_failure_exit_code(tmp_path):
    # a tolerance below rounding makes the residual check fail
    assert run(["solve", "--preset", "heat", "--space", "0,1,8", "--grid", "0,1/16,128", "--tol", "1e-30",
                "--out", str(tmp_path)]) == 2
    doc = certificate(tmp_path)
    assert not doc["passed"]
    failed = [c for c in doc["checks"] if not c["passed"]]
    assert failed and all(c["hypothesis"] for c in failed)


def test_inconsistent_initial_value_exit_code(tmp_path):
    assert run(["dae", "--pair", "paper-2x2", "--u0", "0,1", "--out", str(tmp_path)]) == 2
    doc = certificate(tmp_path)
    assert not doc["passed"]
    assert "InconsistentInitialValue" in doc["failure"]


# ---------------------------------------------------------------- config


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "heat", "space": [0, 1, 8], "grid": "0,1/16,512", "nu": 2.0}))
    assert run(["solve", "--config", str(cfg), "--nu", "3", "--out", str(tmp_path / "a")]) == 0
    doc = certificate(tmp_path / "a")
    assert doc["values"]["nu"] == 3.0
    assert doc["inputs"]["space"] == [0.0, 1.0, 8]


@pytest.mark.parametrize("text", ["{", "[1, 2]", '{"colour": "red"}'])
def test_bad_config(tmp_path, text):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(text)
    assert run(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1


# ----------------------------------------------------------- determinism


def test_byte_identical_outputs(tmp_path):
    argv = ["dae", "--pair", "rlc", "--seed", "7"]
    run(argv + ["--out", str(tmp_path / "a")])
    run(argv + ["--out", str(tmp_path / "b")])
    for name in ("certificate.json", "trajectory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    argv = ["solve", "--preset", "heat", "--space", "0,1,8", "--grid", "0,1/16,128"]
    run(argv + ["--out", str(tmp_path / "c")])
    run(argv + ["--out", str(tmp_path / "d")])
    for name in ("certificate.json", "trajectory.csv"):
        assert (tmp_path / "c" / name).read_bytes() == (tmp_path / "d" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "evoeq", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "evoeq", "ode", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "certificate.json").exists()
