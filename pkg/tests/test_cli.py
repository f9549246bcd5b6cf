from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from config import DEFAULT_SEED, SEED_ENV_VAR
from errors import ConfigError
from main import parse_vector, resolve_seed, run
from regpoint import RegularChain
from signals import Control


def _rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


@pytest.fixture
def zero_control_file(tmp_path, zero_control):
    path = tmp_path / "control.json"
    path.write_text(json.dumps(zero_control.to_dict()), encoding="utf-8")
    return path


def test_parse_vector():
    assert parse_vector("1, 2.5,-3").tolist() == [1.0, 2.5, -3.0]
    with pytest.raises(ConfigError):
        parse_vector("1,x")
    with pytest.raises(ConfigError):
        parse_vector("1,2", length=3)
    with pytest.raises(ConfigError):
        parse_vector("1,nan")


def test_seed_resolution(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    assert resolve_seed(None) == DEFAULT_SEED
    assert resolve_seed(3) == 3
    monkeypatch.setenv(SEED_ENV_VAR, "7")
    assert resolve_seed(3) == 7
    monkeypatch.setenv(SEED_ENV_VAR, "seven")
    with pytest.raises(ConfigError):
        resolve_seed(None)


def test_anchor_command_writes_chain(tmp_path):
    out = tmp_path / "anchor.json"
    assert run(["anchor", "--system", "example11", "--out", str(out)]) == 0
    anchor = RegularChain.from_dict(json.loads(out.read_text(encoding="utf-8")))
    assert anchor.t1 == 0.5
    assert anchor.x_star[1].tolist() == [3.0]


def test_zero_length_simulation_is_one_row(tmp_path, zero_control_file):
    out = tmp_path / "traj.csv"
    code = run(["simulate", "--system", "dblint", "--control", str(zero_control_file), "--x0", "0.25,-1",
                "--t-from", "0.5", "--t-to", "0.5", "--csv", str(out)])
    assert code == 0
    rows = _rows(out)
    assert rows[0] == ["t", "x_1", "x_2", "u_1"]
    assert len(rows) == 2
    assert [float(v) for v in rows[1]] == [0.5, 0.25, -1.0, 0.0]


def test_simulate_hold_control(tmp_path, zero_control_file):
    out = tmp_path / "traj.csv"
    assert run(["simulate", "--system", "dblint", "--control", str(zero_control_file), "--x0", "0,1",
                "--csv", str(out)]) == 0
    last = [float(v) for v in _rows(out)[-1]]
    assert last[0] == 1.0
    assert last[1:3] == pytest.approx([1.0, 1.0], abs=1e-9)


def test_simulate_accepts_plan_record(tmp_path):
    ramp = Control.hermite([0.0, 1.0], [[0.0], [1.0]], [[1.0], [1.0]])
    path = tmp_path / "plan.json"
    path.write_text(json.dumps({"system": "dblint", "control": ramp.to_dict()}), encoding="utf-8")
    out = tmp_path / "traj.csv"
    assert run(["simulate", "--system", "dblint", "--control", str(path), "--x0", "0,0", "--csv", str(out)]) == 0
    # x2 = t^2 / 2, x1 = t^3 / 6
    assert [float(v) for v in _rows(out)[-1][1:3]] == pytest.approx([1.0 / 6.0, 0.5], abs=1e-9)


@pytest.mark.parametrize("argv", [
    ["plan", "--system", "dblint", "--x0", "0,0"],
    ["plan", "--system", "dblint", "--x0", "0", "--xT", "1,0"],
    ["plan", "--system", "nowhere", "--x0", "0,0", "--xT", "1,0"],
    ["sweep-continuity", "--system", "dblint", "--x0", "0,0", "--xT", "1,0", "--levels", "0"],
    ["anchor", "--system", "dblint", "--t1", "1.0"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv):
    assert run(argv) == 2


def test_bad_control_files(tmp_path):
    missing = tmp_path / "missing.json"
    assert run(["simulate", "--system", "dblint", "--control", str(missing), "--x0", "0,0"]) == 2
    wide = tmp_path / "wide.json"
    wide.write_text(json.dumps(Control.hold(0.0, 1.0, [0.0, 0.0]).to_dict()), encoding="utf-8")
    assert run(["simulate", "--system", "dblint", "--control", str(wide), "--x0", "0,0"]) == 2


def test_unknown_perturbation(tmp_path, zero_control_file):
    assert run(["simulate", "--system", "dblint", "--control", str(zero_control_file), "--x0", "0,0",
                "--perturb", "gusty"]) == 2


def test_bench_command_filters(tmp_path):
    out = tmp_path / "report.md"
    assert run(["bench", "run", "--filter", "dblint/explicit-v1-*", "--out", str(out)]) == 0
    text = out.read_text(encoding="utf-8")
    assert text.count("dblint/explicit-v1-") == 3
    assert "dblint/explicit-v2" not in text


@pytest.mark.slow
def test_plan_then_simulate_round_trip(tmp_path):
    plan_json, plan_csv, sim_csv = tmp_path / "plan.json", tmp_path / "plan.csv", tmp_path / "sim.csv"
    assert run(["plan", "--system", "dblint", "--x0", "0,0", "--xT", "1,0",
                "--out", str(plan_json), "--csv", str(plan_csv)]) == 0
    record = json.loads(plan_json.read_text(encoding="utf-8"))
    assert record["endpoint_error"] <= 1e-4
    assert run(["simulate", "--system", "dblint", "--control", str(plan_json), "--x0", "0,0",
                "--csv", str(sim_csv)]) == 0
    planned = np.array(_rows(plan_csv)[-1], dtype=float)
    simulated = np.array(_rows(sim_csv)[-1], dtype=float)
    assert np.max(np.abs(planned - simulated)) <= 1e-9
    assert simulated[1:3] == pytest.approx([1.0, 0.0], abs=1e-4)
