from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import brentq

from config import EPS1_MAX, EPS2_RATIO
from errors import ControlDomainError, DefectUnsatisfiable, DimensionError
from regpoint import ImplicitSolver, RegularChain
from sysmodel import TriangularSystem
from systems import g_poly
from tracker import (
    FamilyMember,
    RadiusTable,
    SwitchingSchedule,
    ToleranceProfile,
    build_reference,
    select_control_value,
)


@pytest.fixture
def parabola():
    # y(t) = t^2 on [0.5, 1]
    return FamilyMember(np.array([1.0]), 0.5, 1.0, lambda t: np.array([t * t]), lambda t: np.array([2.0 * t]))


@pytest.fixture
def dblint_solver(dblint, dblint_anchor):
    return ImplicitSolver.for_stage(dblint.system, dblint_anchor, 1)


def test_radius_table_interpolates_and_shrinks():
    table = RadiusTable(1.0)
    table.shrink(1.5, 0.5)
    assert table.at(0.0) == 1.0
    assert table.at(0.5) == pytest.approx(0.75)
    assert table.at(2.3) == 0.5
    table.shrink(0.2, 2.0)
    assert table.at(0.0) == 1.0


def test_bound_table_only_rises():
    table = RadiusTable(1.0, increasing=True)
    table.record(0.0, 3.0)
    table.record(0.0, 2.0)
    assert table.at(5.0) == 3.0
    with pytest.raises(DimensionError):
        RadiusTable(0.0)


def test_tolerance_profile_defaults():
    tol = ToleranceProfile.initial(0.5)
    xi = np.array([0.3, 0.4])
    assert tol.sigma_at(xi) == 0.25
    assert tol.eps2_at(xi) == pytest.approx(EPS2_RATIO * EPS1_MAX)
    tol.record(xi, sigma=0.125, eps1=1.0)
    assert tol.sigma_at(xi) == pytest.approx(0.125)
    assert tol.eps1_at([2.0]) == 1.0
    assert set(tol.to_dict()) == {"sigma", "delta", "eps1", "bound"}


def test_switching_schedule():
    sched = SwitchingSchedule([1.0, 0.75, 0.5], [[2.0], [1.0]])
    assert sched.dwell_min == 0.25
    u = sched.to_control()
    assert u.start == 0.5 and u.end == 1.0
    assert u.value(0.6)[0] == 1.0
    assert u.value(0.9)[0] == 2.0
    with pytest.raises(DimensionError):
        SwitchingSchedule([0.5, 1.0], [[1.0]])
    with pytest.raises(DimensionError):
        SwitchingSchedule([1.0, 0.5], [[1.0], [2.0]])


def test_warm_start_kept_when_close(dblint_solver):
    v = select_control_value(dblint_solver, 0.7, [0.0], [1.0], delta=0.3, warm_start=[1.05])
    assert v.tolist() == [1.05]


def test_search_leaves_flat_region(example11, example11_anchor):
    solver = ImplicitSolver.for_stage(example11.system, example11_anchor, 1)
    v = select_control_value(solver, 0.5, [0.0], [0.5], delta=0.3, warm_start=[1.0])
    assert g_poly(v[0]) == pytest.approx(0.5, abs=0.1)
    root = brentq(lambda y: g_poly(y) - 0.5, 2.5, 3.0, xtol=1e-14)
    assert v[0] == pytest.approx(root, abs=1e-8)


def test_far_target_on_identity_block(dblint_solver):
    v = select_control_value(dblint_solver, 0.7, [0.0], [1000.0], delta=0.3)
    assert v == pytest.approx([1000.0], abs=1e-9)


def test_unreachable_rate():
    bounded = TriangularSystem(dims=(1, 1), blocks=(lambda t, x1, u: np.array([np.sin(u[0])]),),
                               jac_next=(lambda t, x1, u: np.array([[np.cos(u[0])]]),))
    anchor = RegularChain(0.5, ([0.0], [0.0]), ([0.0], [0.0]), ((0,),), (1.0,))
    solver = ImplicitSolver.for_stage(bounded, anchor, 1)
    with pytest.raises(DefectUnsatisfiable):
        select_control_value(solver, 0.5, [0.0], [5.0], delta=0.3)


def test_reference_tracks_family(dblint_solver, parabola):
    tol = ToleranceProfile.initial(0.5)
    run = build_reference(dblint_solver, parabola, 0.1, tol=tol)
    assert run.max_defect < 0.1
    assert run.trajectory.direction == -1
    assert run.trajectory.initial_state.tolist() == [1.0]
    assert run.schedule.switch_times[0] == 1.0
    assert run.schedule.switch_times[-1] == 0.5
    assert run.schedule.segments > 1
    assert run.max_drift < 0.05
    assert run.control.sup_norm() <= run.bound
    assert tol.bound_at(parabola.xi) >= run.bound
    assert tol.delta_at(parabola.xi) <= 0.1


def test_bound_covers_searched_radius(dblint_solver):
    far = FamilyMember(np.array([0.0]), 0.5, 1.0, lambda t: np.zeros(1), lambda t: np.array([300.0]))
    run = build_reference(dblint_solver, far, 0.1)
    assert run.schedule.values[:, 0] == pytest.approx(300.0, abs=0.1 / 3)
    assert run.bound >= 301.0
    assert run.control.sup_norm() <= run.bound


def test_fast_rate_fails_at_dwell_floor(dblint_solver):
    # |d/dt rate| reaches 4000, so one dwell step moves the rate by about 0.2
    wobble = FamilyMember(np.array([0.0]), 0.5, 1.0, lambda t: np.zeros(1),
                          lambda t: np.array([100.0 * np.sin(40.0 * t)]))
    with pytest.raises(DefectUnsatisfiable) as info:
        build_reference(dblint_solver, wobble, 0.1)
    assert info.value.context["defect"] >= 0.1


def test_reference_partial_window(dblint_solver, parabola):
    run = build_reference(dblint_solver, parabola, 0.1, t_stop=0.75)
    assert run.control.start == 0.75
    assert run.trajectory.t_end == 0.75


def test_reference_drift_limit(dblint_solver, parabola):
    with pytest.raises(DefectUnsatisfiable):
        build_reference(dblint_solver, parabola, 0.1, drift_limit=1e-12)


def test_reference_argument_errors(dblint_solver, parabola):
    with pytest.raises(DimensionError):
        build_reference(dblint_solver, parabola, 0.0)
    with pytest.raises(ControlDomainError):
        build_reference(dblint_solver, parabola, 0.1, t_stop=1.0)
