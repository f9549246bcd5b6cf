"""
tristeer - Perturbed Planning

Steering x' = f(t, x, u) + h(t, x, u) with a bounded perturbation h by
re-planning the nominal system toward a corrected target until the
perturbed endpoint lands on xT.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from config import PERTURB_MAX_ROUNDS, PERTURB_TOL
from errors import ConfigError, DimensionError, PlannerError
from ode import IntegratorConfig, simulate
from shooting import Planner, PlannerOptions
from signals import Control
from sysmodel import TriangularSystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Perturbation:
    """h(t, x, u) with sup bound H; lipschitz_hint is informational"""
    name: str
    h: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    bound: float
    lipschitz_hint: Optional[float] = None

    def __call__(self, t: float, x, u) -> np.ndarray:
        return np.asarray(self.h(t, np.asarray(x, dtype=float), np.asarray(u, dtype=float)), dtype=float)

    def check_bound(self, system: TriangularSystem, probes: int = 64, seed: int = 0) -> float:
        """Largest |h| seen at random probe points; warns when it exceeds bound"""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(probes):
            t = float(rng.uniform(system.t0, system.T))
            x = rng.normal(scale=2.0, size=system.state_dim)
            u = rng.normal(scale=2.0, size=system.control_dim)
            worst = max(worst, float(np.linalg.norm(self(t, x, u))))
        if worst > self.bound:
            logger.warning(f"perturbation {self.name}: |h| = {worst:.3g} exceeds its bound {self.bound:g}")
        return worst


class PerturbedModel:
    """x' = f + h, usable wherever ode.simulate takes a model"""

    def __init__(self, system: TriangularSystem, perturbation: Perturbation):
        self.system = system
        self.perturbation = perturbation
        self.state_dim = system.state_dim
        self.control_dim = system.control_dim

    def rhs(self, t: float, x, u) -> np.ndarray:
        hv = self.perturbation(t, x, u)
        if hv.shape != (self.state_dim,):
            raise DimensionError(f"perturbation returned shape {hv.shape}, expected ({self.state_dim},)")
        return self.system.rhs(t, x, u) + hv


@dataclass(eq=False)
class PerturbedPlan:
    control: Control
    rounds: int
    residual: float
    history: List[float] = field(default_factory=list)
    converged: bool = False

    def to_dict(self) -> Dict:
        return {"rounds": self.rounds, "residual": self.residual, "history": self.history,
                "converged": self.converged, "control": self.control.to_dict()}


def plan_perturbed(planner: Planner, pert: Perturbation, x0, xT,
                   max_rounds: int = PERTURB_MAX_ROUNDS, tol: float = PERTURB_TOL) -> PerturbedPlan:
    """
    Round 0 plans straight for xT. Each later round re-plans for
    xi + alpha * (xT - perturbed endpoint); a round that raises the
    residual or fails to plan is discarded and alpha is halved.
    Non-convergence is reported, not raised.
    """
    system = planner.system
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    xT = np.atleast_1d(np.asarray(xT, dtype=float))
    model = PerturbedModel(system, pert)
    cfg = planner.options.integrator

    control = planner.plan(x0, xT).control
    gap = _endpoint_gap(model, system, x0, xT, control, cfg)
    residual = float(np.linalg.norm(gap))
    history = [residual]
    xi, alpha, rounds = xT.copy(), 1.0, 0

    while residual > tol and rounds < max_rounds:
        rounds += 1
        trial_xi = xi + alpha * gap
        try:
            trial_control = planner.plan(x0, trial_xi).control
            trial_gap = _endpoint_gap(model, system, x0, xT, trial_control, cfg)
            trial_residual = float(np.linalg.norm(trial_gap))
        except PlannerError as exc:
            logger.warning(f"round {rounds}: planning for the corrected target failed ({exc.message})")
            trial_residual = math.inf
        if not trial_residual <= residual or math.isinf(trial_residual):
            alpha *= 0.5
            logger.debug(f"round {rounds}: residual rose to {trial_residual:.3g}; alpha -> {alpha:g}")
            history.append(residual)
            continue
        xi, control, gap, residual = trial_xi, trial_control, trial_gap, trial_residual
        history.append(residual)
        logger.info(f"round {rounds}: residual {residual:.3g}")

    converged = residual <= tol
    if not converged:
        logger.warning(f"perturbed planning stopped after {rounds} rounds at residual {residual:.3g}")
    return PerturbedPlan(control, rounds, residual, history, converged)


def _endpoint_gap(model: PerturbedModel, system: TriangularSystem, x0: np.ndarray, xT: np.ndarray,
                  control: Control, cfg: IntegratorConfig) -> np.ndarray:
    """xT minus the perturbed endpoint; infinite when the trajectory blows up"""
    traj = simulate(model, system.t0, system.T, x0, control, cfg)
    if traj.blown_up:
        return np.full(xT.shape, math.inf)
    return xT - traj.final_state


# =============================================================================
# Registry
# =============================================================================

def _zero(t, x, u):
    return np.zeros_like(x)


def _example11_sin(t, x, u):
    return np.array([0.1 * math.sin(x[0] + u[0]), 0.0])


def _dblint_const(t, x, u):
    return np.array([0.0, 0.2])


def _example11_log_sin(t, x, u):
    return np.array([0.1 * math.sin(x[0] + u[0]), 0.05 * math.sin(t)])


PERTURBATIONS: Dict[str, Perturbation] = {
    "zero": Perturbation("zero", _zero, 0.0, 0.0),
    "example11-sin": Perturbation("example11-sin", _example11_sin, 0.1, 0.1),
    "dblint-const": Perturbation("dblint-const", _dblint_const, 0.2, 0.0),
    "example11-log-sin": Perturbation("example11-log-sin", _example11_log_sin, 0.12, 0.1),
}


def get_perturbation(name: str) -> Perturbation:
    try:
        return PERTURBATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown perturbation {name!r}; known: {', '.join(sorted(PERTURBATIONS))}") from None


def perturbed_planner(system: TriangularSystem, anchor, options: Optional[PlannerOptions] = None) -> Planner:
    """Fresh non-strict planner; corrected targets need not be met to PLAN_TOL on their own"""
    opts = options or PlannerOptions()
    return Planner(system, anchor, PlannerOptions(opts.shape, opts.smoothing, opts.seed, opts.tol,
                                                  strict=False, integrator=opts.integrator))
