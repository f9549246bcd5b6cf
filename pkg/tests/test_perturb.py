from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from config import PERTURB_MAX_ROUNDS, PERTURB_TOL
from errors import ConfigError, DimensionError, ShootingFailed
from ode import simulate
from perturb import (
    PERTURBATIONS,
    Perturbation,
    PerturbedModel,
    get_perturbation,
    perturbed_planner,
    plan_perturbed,
)
from shooting import PlannerOptions
from signals import Control


class ExactPlanner:
    """Double integrator from the origin on [0, 1]: u(t) = (6a - 2b) + (6b - 12a) t reaches (a, b)"""

    def __init__(self, system, fail_after=None):
        self.system = system
        self.options = PlannerOptions()
        self.calls = 0
        self.fail_after = fail_after

    def plan(self, x0, xT):
        self.calls += 1
        if self.fail_after is not None and self.calls > self.fail_after:
            raise ShootingFailed("corrected target out of reach")
        a, b = xT
        c0, c1 = 6.0 * a - 2.0 * b, 6.0 * b - 12.0 * a
        control = Control.hermite([0.0, 1.0], [[c0], [c0 + c1]], [[c1], [c1]])
        return SimpleNamespace(control=control)


def test_registry_lookup():
    assert set(PERTURBATIONS) >= {"zero", "example11-sin", "dblint-const"}
    assert get_perturbation("example11-sin").bound == 0.1
    with pytest.raises(ConfigError):
        get_perturbation("gusty")


def test_perturbed_rhs_adds_h(dblint):
    model = PerturbedModel(dblint.system, get_perturbation("dblint-const"))
    assert model.rhs(0.3, [1.0, 2.0], [0.5]).tolist() == pytest.approx([2.0, 0.7])


def test_perturbation_shape_checked(dblint):
    wrong = Perturbation("wrong", lambda t, x, u: np.zeros(3), 0.0)
    with pytest.raises(DimensionError):
        PerturbedModel(dblint.system, wrong).rhs(0.0, [0.0, 0.0], [0.0])


def test_bounds_hold_on_samples(dblint, example11, example11_log):
    assert get_perturbation("example11-sin").check_bound(example11.system) <= 0.1
    assert get_perturbation("example11-log-sin").check_bound(example11_log.system) <= 0.12
    assert get_perturbation("dblint-const").check_bound(dblint.system) == pytest.approx(0.2)


def test_exact_planner_reaches_target(dblint):
    u = ExactPlanner(dblint.system).plan([0.0, 0.0], [1.0, 0.5]).control
    final = simulate(dblint.system, 0.0, 1.0, [0.0, 0.0], u).final_state
    assert final == pytest.approx([1.0, 0.5], abs=1e-8)


def test_constant_drift_corrected_in_one_round(dblint):
    # h = (0, 0.2) shifts the endpoint by exactly (0.1, 0.2)
    result = plan_perturbed(ExactPlanner(dblint.system), get_perturbation("dblint-const"),
                            [0.0, 0.0], [1.0, 0.5])
    assert result.converged
    assert result.rounds == 1
    assert result.history[0] == pytest.approx(np.hypot(0.1, 0.2), rel=1e-6)
    assert result.residual <= 1e-6
    final = simulate(PerturbedModel(dblint.system, get_perturbation("dblint-const")),
                     0.0, 1.0, [0.0, 0.0], result.control).final_state
    assert final == pytest.approx([1.0, 0.5], abs=1e-6)


def test_zero_perturbation_keeps_nominal_plan(dblint):
    planner = ExactPlanner(dblint.system)
    result = plan_perturbed(planner, get_perturbation("zero"), [0.0, 0.0], [1.0, 0.5])
    assert result.rounds == 0
    assert result.converged
    assert planner.calls == 1


def test_failed_rounds_are_reported_not_raised(dblint):
    planner = ExactPlanner(dblint.system, fail_after=1)
    result = plan_perturbed(planner, get_perturbation("dblint-const"), [0.0, 0.0], [1.0, 0.5], max_rounds=3)
    assert not result.converged
    assert result.rounds == 3
    assert result.history == [result.residual] * 4
    assert set(result.to_dict()) == {"rounds", "residual", "history", "converged", "control"}


@pytest.mark.slow
def test_constant_drift_with_real_planner(dblint, dblint_anchor):
    planner = perturbed_planner(dblint.system, dblint_anchor)
    pert = get_perturbation("dblint-const")
    result = plan_perturbed(planner, pert, [0.0, 0.0], [1.0, 0.0])
    assert result.converged
    assert result.residual <= PERTURB_TOL
    final = simulate(PerturbedModel(dblint.system, pert), 0.0, 1.0, [0.0, 0.0], result.control).final_state
    assert final == pytest.approx([1.0, 0.0], abs=PERTURB_TOL)


@pytest.mark.slow
def test_example11_sin_perturbation(example11, example11_anchor):
    planner = perturbed_planner(example11.system, example11_anchor)
    result = plan_perturbed(planner, get_perturbation("example11-sin"), [0.0, 0.0], [1.0, 2.5])
    assert result.converged
    assert result.rounds <= PERTURB_MAX_ROUNDS
    assert result.residual <= PERTURB_TOL
    assert result.history[-1] == result.residual


@pytest.mark.slow
def test_zero_perturbation_reproduces_real_plan(example11, example11_anchor):
    planner = perturbed_planner(example11.system, example11_anchor)
    nominal = planner.plan([0.0, 0.0], [1.0, 2.5]).control
    result = plan_perturbed(planner, get_perturbation("zero"), [0.0, 0.0], [1.0, 2.5])
    assert result.rounds == 0
    assert np.array_equal(result.control.coefficients, nominal.coefficients)


@pytest.mark.slow
def test_example11_log_perturbation(example11_log, example11_log_anchor):
    planner = perturbed_planner(example11_log.system, example11_log_anchor)
    pert = get_perturbation("example11-log-sin")
    result = plan_perturbed(planner, pert, [0.0, 0.0], [0.5, 2.5])
    assert result.converged
    final = simulate(PerturbedModel(example11_log.system, pert), 0.0, 1.0, [0.0, 0.0],
                     result.control).final_state
    assert final == pytest.approx([0.5, 2.5], abs=PERTURB_TOL)
