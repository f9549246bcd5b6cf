"""
tristeer - ODE Integration

Flow maps x(t; tau, x0, u) for systems and stage systems, forward or
backward in time, plus linearization along a path.

Backward integration substitutes s = -t so every solver call runs
forward. Integration is split at control discontinuities.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from config import ABS_TOL, GUARD_MARGIN, GUARD_RADIUS, REL_TOL, RK4_STEP
from errors import BlownUpError, ConfigError, ControlDomainError, DimensionError
from signals import STOP_GUARD, STOP_NON_FINITE, STOP_SOLVER, Control, Trajectory
from sysmodel import StateVector

logger = logging.getLogger(__name__)


class IntegratorMethod(Enum):
    """Available integrators"""
    RK4 = "rk4"
    RK45 = "rk45"


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator choice and tolerances"""
    method: IntegratorMethod = IntegratorMethod.RK45
    step: float = RK4_STEP
    abs_tol: float = ABS_TOL
    rel_tol: float = REL_TOL
    guard_radius: float = GUARD_RADIUS

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigError("integrator tolerances must be positive")
        if not self.step > 0:
            raise ConfigError("integrator step must be positive")
        if not self.guard_radius > 0:
            raise ConfigError("guard radius must be positive")


@dataclass(eq=False)
class LtvSystem:
    """Samples of dz/dt = A(t) z + B(t) w on a time grid"""
    times: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        n = self.times.size
        if n < 2 or np.any(np.diff(self.times) <= 0.0):
            raise DimensionError("LTV grid must be strictly increasing with at least two points")
        if self.A.ndim != 3 or self.A.shape[0] != n or self.A.shape[1] != self.A.shape[2]:
            raise DimensionError(f"A samples of shape {self.A.shape} do not fit a grid of {n}")
        if self.B.ndim != 3 or self.B.shape[:2] != (n, self.A.shape[1]):
            raise DimensionError(f"B samples of shape {self.B.shape} do not fit A {self.A.shape}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise DimensionError("LTV samples must be finite")

    @property
    def state_dim(self) -> int:
        return self.A.shape[1]

    @property
    def control_dim(self) -> int:
        return self.B.shape[2]

    def _interp(self, samples: np.ndarray, t: float) -> np.ndarray:
        i = int(np.clip(np.searchsorted(self.times, t) - 1, 0, self.times.size - 2))
        a, b = self.times[i], self.times[i + 1]
        w = min(max((t - a) / (b - a), 0.0), 1.0)
        return (1.0 - w) * samples[i] + w * samples[i + 1]

    def a_at(self, t: float) -> np.ndarray:
        return self._interp(self.A, t)

    def b_at(self, t: float) -> np.ndarray:
        return self._interp(self.B, t)

    @classmethod
    def from_samples(cls, model, grid: Sequence[float], states: Sequence[np.ndarray],
                     controls: Sequence[np.ndarray]) -> "LtvSystem":
        """Jacobians of model at (t_i, states[i], controls[i])"""
        pairs = [model.jacobians(t, x, v) for t, x, v in zip(grid, states, controls)]
        return cls(np.asarray(grid, dtype=float),
                   np.array([a for a, _ in pairs]), np.array([b for _, b in pairs]))


def rk4_step(rhs: Callable[[float, np.ndarray], np.ndarray], t: float, h: float, y: np.ndarray) -> np.ndarray:
    """Single classical Runge-Kutta step"""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _piece_control(u: Control, a: float, b: float) -> Callable[[float], np.ndarray]:
    """Control restricted to the continuity piece [a, b], one-sided at its ends"""
    mid = 0.5 * (a + b)

    def value(t: float) -> np.ndarray:
        t = min(max(t, a), b)
        return u.value(t, "right" if t < mid else "left")
    return value


def _integrate_piece(model, a: float, b: float, x: np.ndarray, u: Control, reverse: bool,
                     cfg: IntegratorConfig):
    """
    Integrate over the piece from a to b (b < a when reverse).
    Returns (times, states, stop) in integration order; stop is None or
    (time, reason) with one of the Trajectory stop reasons.
    """
    lo, hi = (b, a) if reverse else (a, b)
    control = _piece_control(u, lo, hi)
    sign = -1.0 if reverse else 1.0

    def fun(s, y):
        t = sign * s
        return sign * model.rhs(t, y, control(t))

    s0, s1 = sign * a, sign * b
    limit = cfg.guard_radius * (1.0 + GUARD_MARGIN)

    if cfg.method is IntegratorMethod.RK4:
        n = max(1, math.ceil((s1 - s0) / cfg.step))
        h = (s1 - s0) / n
        ss = [s0]
        ys = [x.copy()]
        y = x.copy()
        for j in range(n):
            s_next = s1 if j == n - 1 else s0 + (j + 1) * h
            y = rk4_step(fun, ss[-1], s_next - ss[-1], y)
            ss.append(s_next)
            ys.append(y)
            if not np.all(np.isfinite(y)):
                return sign * np.array(ss[:-1]), np.array(ys[:-1]), (sign * ss[-2], STOP_NON_FINITE)
            if np.linalg.norm(y) > cfg.guard_radius:
                return sign * np.array(ss), np.array(ys), (sign * s_next, STOP_GUARD)
        return sign * np.array(ss), np.array(ys), None

    def guard(s, y):
        return limit - np.linalg.norm(y)
    guard.terminal = True
    guard.direction = -1

    sol = solve_ivp(fun, (s0, s1), x, method="RK45", rtol=cfg.rel_tol, atol=cfg.abs_tol, events=guard)
    times = sign * sol.t
    states = sol.y.T
    if sol.status == 1:
        return times, states, (float(times[-1]), STOP_GUARD)
    if sol.status < 0 or not np.all(np.isfinite(states)):
        logger.warning(f"integration stopped early at t={times[-1]:.6g}: {sol.message}")
        finite = np.all(np.isfinite(states), axis=1)
        keep = int(np.argmin(finite)) if not finite.all() else states.shape[0]
        keep = max(keep, 1)
        reason = STOP_SOLVER if finite.all() else STOP_NON_FINITE
        return times[:keep], states[:keep], (float(times[keep - 1]), reason)
    return times, states, None


def simulate(model, t_from: float, t_to: float, x0, u: Control,
             cfg: Optional[IntegratorConfig] = None) -> Trajectory:
    """
    Integrate model from (t_from, x0) to t_to under u.

    model is anything with rhs(t, x, v) and state_dim: a TriangularSystem,
    a StageSystem or a perturbed wrapper. t_to < t_from integrates backward.
    """
    cfg = cfg or IntegratorConfig()
    x0 = np.asarray(x0.data if isinstance(x0, StateVector) else x0, dtype=float).ravel()
    if x0.size != model.state_dim:
        raise DimensionError(f"initial state has length {x0.size}, expected {model.state_dim}")
    t_from, t_to = float(t_from), float(t_to)
    lo, hi = min(t_from, t_to), max(t_from, t_to)
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    if lo < u.start - tol or hi > u.end + tol:
        raise ControlDomainError(f"control on [{u.start}, {u.end}] does not cover [{lo}, {hi}]")

    if t_to == t_from:
        d0 = model.rhs(t_from, x0, u.value(t_from))
        return Trajectory(np.array([t_from]), x0[None, :], d0[None, :])

    reverse = t_to < t_from
    cuts = [c for c in u.discontinuities() if lo < c < hi]
    nodes = [lo] + cuts + [hi]
    pieces = list(zip(nodes[:-1], nodes[1:]))
    if reverse:
        pieces = [(b, a) for a, b in reversed(pieces)]

    all_t: List[np.ndarray] = []
    all_x: List[np.ndarray] = []
    all_d: List[np.ndarray] = []
    x = x0.copy()
    stop = None
    for a, b in pieces:
        times, states, stop = _integrate_piece(model, a, b, x, u, reverse, cfg)
        p_lo, p_hi = min(a, b), max(a, b)
        control = _piece_control(u, p_lo, p_hi)
        derivs = np.array([model.rhs(t, s, control(t)) for t, s in zip(times, states)])
        skip = 1 if all_t else 0
        all_t.append(times[skip:])
        all_x.append(states[skip:])
        all_d.append(derivs[skip:])
        x = states[-1].copy()
        if stop is not None:
            logger.info(f"integration stopped at t={stop[0]:.6g} ({stop[1]})")
            break

    times = np.concatenate(all_t)
    states = np.concatenate(all_x)
    derivs = np.concatenate(all_d)
    if reverse:
        times, states, derivs = times[::-1], states[::-1], derivs[::-1]
    return Trajectory(times, states, derivs, blown_up=stop is not None,
                      blow_up_time=None if stop is None else stop[0], direction=-1 if reverse else 1,
                      stop_reason=None if stop is None else stop[1])


def linearize_along(model, traj: Trajectory, u: Control, grid: Sequence[float]) -> LtvSystem:
    """A(t) = d rhs / d x and B(t) = d rhs / d u sampled along (traj, u)"""
    if traj.blown_up:
        raise BlownUpError("cannot linearize along a blown-up trajectory", blow_up_time=traj.blow_up_time)
    grid = np.asarray(grid, dtype=float)
    return LtvSystem.from_samples(model, grid, [traj.at(t) for t in grid], [u.value(t) for t in grid])


def endpoint(model, t_from: float, t_to: float, x0, u: Control,
             cfg: Optional[IntegratorConfig] = None) -> np.ndarray:
    """Final state; raises BlownUpError when the guard fires"""
    traj = simulate(model, t_from, t_to, x0, u, cfg)
    if traj.blown_up:
        raise BlownUpError("trajectory blew up", blow_up_time=traj.blow_up_time)
    return traj.final_state
