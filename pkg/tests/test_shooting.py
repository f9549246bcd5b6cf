from __future__ import annotations

import numpy as np
import pytest

from config import PLAN_TOL
from errors import AnchorUnusable, ConfigError, ShootingFailed
from ltv_steer import basis
from ode import linearize_along, simulate
from regpoint import ImplicitSolver, RegularChain
from shooting import (
    FamilyShape,
    Planner,
    PlannerOptions,
    ShootingMap,
    base_family,
    build_stage_chain,
    calibrate_eps1,
    plan,
    select_sigma,
    solve_lambda,
)
from signals import Control
from smoother import SmoothingMode
from sysmodel import TriangularSystem
from tracker import FamilyMember


@pytest.fixture
def dblint_map(dblint):
    stage = dblint.system.stage(2)
    u = Control.hold(0.5, 0.75, [0.0])
    y_star = np.zeros(2)
    path = simulate(stage, 0.5, 0.75, y_star, u)
    ltv = linearize_along(stage, path, u, np.linspace(0.5, 0.75, 33))
    return ShootingMap(stage, y_star, 0.5, 0.75, u, basis(ltv))


def test_quadratic_family_endpoints(example11_anchor):
    family = base_family(example11_anchor, 1.0)
    member = family.member([2.0])
    assert member.state(0.5).tolist() == [0.0]
    assert member.rate(0.5)[0] == pytest.approx(example11_anchor.z_star[0][0])
    assert member.state(1.0)[0] == pytest.approx(2.0)


def test_terminal_rate_family(example11_anchor):
    family = base_family(example11_anchor, 1.0, FamilyShape.TERMINAL_RATE)
    member = family.member([2.0], end_rate=[0.3])
    assert member.state(0.5)[0] == pytest.approx(0.0, abs=1e-15)
    assert member.rate(0.5)[0] == pytest.approx(example11_anchor.z_star[0][0])
    assert member.state(1.0)[0] == pytest.approx(2.0)
    assert member.rate(1.0)[0] == pytest.approx(0.3)


def test_family_needs_room(example11_anchor):
    with pytest.raises(ConfigError):
        base_family(example11_anchor, 0.5)


def test_zero_lambda_is_reference(dblint_map):
    assert dblint_map.control(np.zeros(2)) is dblint_map.u_delta1
    assert dblint_map.phi_hat(np.zeros(2)) == pytest.approx([0.0, 0.0], abs=1e-12)


def test_linear_map_is_identity(dblint_map):
    J = dblint_map.jacobian(np.zeros(2))
    assert J == pytest.approx(np.eye(2), abs=1e-3)
    # doubling from 0.05 stops at the largest step below EPS1_MAX = 4
    assert calibrate_eps1(dblint_map) == pytest.approx(3.2)


def test_solve_lambda_on_linear_map(dblint_map):
    target = np.array([0.1, -0.2])
    report = solve_lambda(dblint_map, target, 3.2)
    assert report.endpoint_error <= 1e-8
    assert report.lambda_star == pytest.approx(target, abs=1e-6)
    assert report.jacobian_dist_to_identity < 0.8
    assert report.method == "fixed-point"
    assert report.trace[0] > report.trace[-1]


def test_solve_lambda_outside_ball(dblint_map):
    with pytest.raises(ShootingFailed):
        solve_lambda(dblint_map, np.array([1.0, 1.0]), 1e-3)


def test_first_sigma_level_on_linear_stage(dblint, dblint_anchor):
    solver = ImplicitSolver.for_stage(dblint.system, dblint_anchor, 1)
    member = base_family(dblint_anchor, 1.0).member([1.0])
    assert select_sigma(solver, member) == 0.25


def test_family_off_anchor_is_unusable(dblint, dblint_anchor):
    solver = ImplicitSolver.for_stage(dblint.system, dblint_anchor, 1)
    member = FamilyMember(np.array([1.0]), 0.5, 1.0, lambda t: np.array([t]), lambda t: np.array([1.0]))
    with pytest.raises(AnchorUnusable):
        select_sigma(solver, member)


def test_planner_checks_anchor_time(dblint, dblint_anchor):
    outside = RegularChain(2.0, dblint_anchor.x_star, dblint_anchor.z_star,
                           dblint_anchor.column_selections, dblint_anchor.rank_margins)
    with pytest.raises(ConfigError):
        Planner(dblint.system, outside)


def test_planner_rejects_invalid_system(dblint_anchor):
    broken = TriangularSystem(
        dims=(1, 1, 1),
        blocks=(lambda t, x1, x2: np.array([np.nan]), lambda t, x1, x2, u: u),
    )
    with pytest.raises(ConfigError):
        Planner(broken, dblint_anchor)


@pytest.mark.slow
def test_stage_pins_on_dblint(dblint, dblint_anchor):
    top = build_stage_chain(dblint.system, dblint_anchor, FamilyShape.TERMINAL_RATE, SmoothingMode.SPLINE)[-1]
    outcome = top.control_for([0.4, -0.3], [0.2])
    u = outcome.control
    assert u.value(1.0, "left").tolist() == [0.2]
    assert u.value(0.5).tolist() == dblint_anchor.x_star[2].tolist()
    assert u.derivative(0.5).tolist() == dblint_anchor.z_star[2].tolist()
    assert outcome.endpoint_error <= 1e-4
    assert outcome.shot.jacobian_dist_to_identity < 0.8
    assert top.control_for([0.4, -0.3], [0.2]) is outcome


@pytest.mark.slow
def test_plan_double_integrator(dblint, dblint_anchor):
    planner = Planner(dblint.system, dblint_anchor, PlannerOptions())
    result = planner.plan([0.0, 0.0], [1.0, 0.0])
    assert result.endpoint_error <= 1e-4
    u = result.control
    assert (u.start, u.end) == (0.0, 1.0)
    assert u.value(0.5, "left") == pytest.approx(u.value(0.5), abs=1e-12)
    final = simulate(dblint.system, 0.0, 1.0, [0.0, 0.0], u).final_state
    assert final == pytest.approx([1.0, 0.0], abs=1e-4)

    record = result.to_dict()
    assert record["system"] == "dblint"
    assert {"sigma", "lambda_star", "switch_times", "half"} <= set(record["stages"][0])
    assert {entry["half"] for entry in record["stages"]} == {"forward", "backward"}


@pytest.mark.slow
def test_plan_function_returns_control(dblint, dblint_anchor):
    u = plan(dblint.system, dblint_anchor, [0.0, 0.0], [0.0, 1.0])
    final = simulate(dblint.system, 0.0, 1.0, [0.0, 0.0], u).final_state
    assert final == pytest.approx([0.0, 1.0], abs=1e-4)


def _assert_tracker_bounds(result):
    for _, outcome in result.outcomes:
        ref = outcome.reference
        assert ref.max_defect < ref.delta
        assert ref.control.sup_norm() <= ref.bound


@pytest.mark.slow
def test_plan_example11_through_singular_region(example11, example11_anchor):
    planner = Planner(example11.system, example11_anchor, PlannerOptions())
    result = planner.plan([0.0, 0.0], [1.0, 2.5])
    assert result.endpoint_error <= PLAN_TOL
    # x1 only moves where g is nonzero, i.e. above x2 = 2
    assert np.any(result.trajectory.states[:, 1] > 2.0)
    final = simulate(example11.system, 0.0, 1.0, [0.0, 0.0], result.control).final_state
    assert final == pytest.approx([1.0, 2.5], abs=PLAN_TOL)
    assert all(o.shot.jacobian_dist_to_identity < 0.8 for _, o in result.outcomes)
    _assert_tracker_bounds(result)


@pytest.mark.slow
def test_plan_example11_log(example11_log, example11_log_anchor):
    planner = Planner(example11_log.system, example11_log_anchor, PlannerOptions())
    result = planner.plan([0.0, 0.0], [0.5, 2.5])
    assert result.endpoint_error <= PLAN_TOL
    assert np.any(result.trajectory.states[:, 1] > 2.0)
    _assert_tracker_bounds(result)
