from __future__ import annotations

import csv
from types import SimpleNamespace

import numpy as np
import pytest

from bench import (
    CASES,
    Case,
    CaseResult,
    _run_case,
    grid_argmin,
    random_ltv,
    run_suite,
    tracker_failure,
    write_report,
)
from errors import ShootingFailed


def test_registry_ids():
    assert "dblint/explicit-v1-T0.5" in CASES
    assert "dblint/explicit-v2-T2" in CASES
    assert {"example11/plan", "example11/continuity", "example11/perturbed"} <= set(CASES)
    assert all(case.threshold > 0 for case in CASES.values())


def test_explicit_controls_pass():
    results = run_suite("dblint/explicit*")
    assert [r.case_id for r in results] == sorted(c for c in CASES if c.startswith("dblint/explicit"))
    assert len(results) == 6
    assert all(r.passed for r in results)
    assert max(r.measured for r in results) <= 1e-9


def test_unknown_filter_selects_nothing():
    assert run_suite("nothing/*") == []


def test_failures_become_results():
    def broken():
        raise ShootingFailed("no lambda")

    result = _run_case(Case("x/broken", "error", 1.0, broken))
    assert not result.passed
    assert result.measured == np.inf
    assert "ShootingFailed" in result.note


def test_threshold_is_inclusive():
    result = _run_case(Case("x/edge", "error", 0.5, lambda: (0.5, "")))
    assert result.passed


def test_strict_threshold_excludes_edge():
    result = _run_case(Case("x/edge", "ratio", 1.0, lambda: (1.0, ""), strict=True))
    assert not result.passed


def test_time_limit_enforced():
    result = _run_case(Case("x/slow", "error", 1.0, lambda: (0.0, "", 0.25), time_limit=0.1))
    assert not result.passed
    assert "limit" in result.note
    assert _run_case(Case("x/quick", "error", 1.0, lambda: (0.0, "", 0.05), time_limit=0.1)).passed


def test_explicit_cases_carry_time_limits():
    assert all(CASES[cid].time_limit == 0.1 for cid in CASES if cid.startswith("dblint/explicit"))
    assert CASES["ltv/random-basis"].time_limit == 1.0
    assert CASES["example11/plan-grid"].time_limit == 1.0
    assert CASES["example11/tracker-defect"].strict


def _outcome(max_defect, delta, sup, bound):
    control = SimpleNamespace(sup_norm=lambda: sup)
    reference = SimpleNamespace(max_defect=max_defect, delta=delta, control=control, bound=bound)
    return SimpleNamespace(p=1, reference=reference)


def test_tracker_failure_flags_defect_and_bound():
    assert tracker_failure([_outcome(0.05, 0.1, 2.0, 3.0)]) is None
    assert "reaches delta" in tracker_failure([_outcome(0.05, 0.1, 2.0, 3.0), _outcome(0.1, 0.1, 2.0, 3.0)])
    assert "exceeds its bound" in tracker_failure([_outcome(0.05, 0.1, 3.5, 3.0)])


def test_random_ltv_shape(rng):
    ltv = random_ltv(rng, 3, intervals=16)
    assert ltv.times.size == 17
    assert ltv.state_dim == 3
    assert np.all(np.abs(ltv.A[:, 0, 1]) >= 0.5)


@pytest.mark.parametrize("suffix", [".md", ".csv"])
def test_reports(tmp_path, suffix):
    results = [CaseResult("a/one", "error", 1e-10, 1e-9, True, 0.01, "ok"),
               CaseResult("b/two", "error", np.inf, 1e-9, False, 0.2, "ShootingFailed: x | y")]
    path = tmp_path / f"report{suffix}"
    write_report(results, str(path))
    text = path.read_text(encoding="utf-8")
    if suffix == ".csv":
        rows = list(csv.reader(text.splitlines()))
        assert rows[0][0] == "case"
        assert [row[4] for row in rows[1:]] == ["PASS", "FAIL"]
    else:
        assert "1/2 cases passed" in text
        assert "x / y" in text
        assert text.count("| a/one |") == 1


class _LinearMap:
    """phi_hat(lambda) = lambda + offset"""
    dim = 2

    def __init__(self, offset):
        self.offset = np.asarray(offset, dtype=float)

    def phi_hat(self, lam):
        return np.asarray(lam, dtype=float) + self.offset


def test_grid_argmin_finds_affine_root():
    smap = _LinearMap([0.1, -0.05])
    lam = grid_argmin(smap, np.array([0.3, 0.2]), 1.0)
    assert lam == pytest.approx([0.2, 0.25], abs=1e-4)
