import json

import numpy as np
import pytest

from cfcsr.cli import main


def _config_line(text):
    first = text.splitlines()[0]
    assert first.startswith("# config: ")
    return json.loads(first[len("# config: "):])


@pytest.fixture
def pattern_file(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "pts.csv"
    np.savetxt(path, rng.random((20, 2)), delimiter=",", header="x,y", comments="")
    return path


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["simulate", "--kind", "ssi", "--n", "20", "--param", "delta=0.05",
                     "--seed", "4", "-o", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 20


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CFCSR_SEED", "11")
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    main(["simulate", "--kind", "csr", "--n", "5", "-o", str(a)])
    main(["simulate", "--kind", "csr", "--n", "5", "--seed", "11", "-o", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_bad_seed_environment(monkeypatch, capsys):
    monkeypatch.setenv("CFCSR_SEED", "abc")
    assert main(["simulate", "--kind", "csr", "--n", "5"]) == 2


def test_test_command_json(pattern_file, tmp_path):
    out = tmp_path / "r.json"
    assert main(["test", "-i", str(pattern_file), "--rho", "1", "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["method"] == "imhof" and 0 <= rep["p_value"] <= 1
    assert rep["config"]["rho"] == 1.0 and rep["config"]["seed"] == 0


def test_omnibus_monte_carlo(pattern_file, capsys):
    assert main(["test", "-i", str(pattern_file), "--omnibus", "--method", "monte_carlo",
                 "--reps", "100", "--seed", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["components"]) == 3 and rep["seed"] == 2


def test_test_needs_rho(pattern_file):
    assert main(["test", "-i", str(pattern_file)]) == 2


def test_window_rescaling(tmp_path, capsys):
    path = tmp_path / "m.csv"
    path.write_text("1,1\n2,3\n4,4\n")
    assert main(["test", "-i", str(path), "--rho", "1", "--window", "0,0,5,5"]) == 0
    assert main(["test", "-i", str(path), "--rho", "1", "--window", "0,0,5"]) == 2
    # points outside the unit square without a window
    assert main(["test", "-i", str(path), "--rho", "1"]) == 2


@pytest.mark.parametrize(
    "argv",
    [["test", "-i", "/nonexistent.csv", "--rho", "1"],
     ["test", "--dataset", "cells", "--rho", "1"],
     ["type1", "--alpha", "1.5"],
     ["simulate", "--kind", "ssi", "--n", "5"],
     ["simulate", "--kind", "ssi", "--n", "5", "--param", "delta"]],
)
def test_input_errors_exit_two(argv, monkeypatch, tmp_path):
    monkeypatch.setenv("CFCSR_DATA_DIR", str(tmp_path))
    assert main(argv) == 2


def test_bad_pattern_file(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.1,zz\n")
    assert main(["test", "-i", str(path), "--rho", "1"]) == 2


def test_infeasible_simulation_exits_four():
    assert main(["simulate", "--kind", "ssi", "--n", "500", "--param", "delta=0.3"]) == 4


def test_envelope_csv(pattern_file, capsys):
    assert main(["envelope", "-i", str(pattern_file), "--method", "monte_carlo", "--reps", "100",
                 "--grid-size", "4"]) == 0
    text = capsys.readouterr().out
    assert _config_line(text)["grid_size"] == 4
    lines = text.splitlines()
    assert lines[1] == "rho,delta,mean,lo95,hi95,lo99,hi99"
    assert len(lines) == 6


def test_nulldist_round_trip(capsys):
    assert main(["nulldist", "--rho", "1", "--n", "25", "--p", "0.05,0.95"]) == 0
    text = capsys.readouterr().out
    rows = [line.split(",") for line in text.splitlines()[2:]]
    for p, q, back, method in rows:
        assert float(back) == pytest.approx(float(p), abs=1e-4)
        assert method == "imhof"


def test_nulldist_bad_probability():
    assert main(["nulldist", "--rho", "1", "--n", "25", "--p", "0,0.5"]) == 2


def test_type1_alpha_zero(capsys):
    assert main(["type1", "--n", "10", "--rhos", "1", "--reps", "5", "--alpha", "0"]) == 0
    text = capsys.readouterr().out
    rates = [float(line.split(",")[4]) for line in text.splitlines()[2:]]
    assert rates == [0.0, 0.0, 0.0]


def test_paper_scale_recorded_in_config(capsys):
    assert main(["type1", "--n", "10", "--rhos", "1", "--reps", "3"]) == 0
    cfg = _config_line(capsys.readouterr().out)
    assert cfg["paper_scale"] is False and cfg["reps"] == 3
