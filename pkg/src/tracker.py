"""
tristeer - Reference Tracker

Backward construction, from z(T) = xi, of a reference trajectory z and a
piecewise-constant control v whose last-block defect

    |d/dt x_p(xi, t) - f_p(t, z(t), v(t))|

stays below delta on [t_stop, T]. A value is held until the defect
reaches (1 - HYSTERESIS) * delta, then re-selected at the current point.

Tolerances that depend on the target only through |xi| live in radius
tables (ToleranceProfile).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.stats import qmc

from config import (
    BUDGET_FRACTION,
    DELTA1_FRACTION,
    DELTA_START,
    DWELL_FRACTION,
    EPS1_MAX,
    EPS2_RATIO,
    HYSTERESIS,
    SEARCH_MAX_EXPONENT,
    SEARCH_SAMPLES_PER_RADIUS,
    TRACKER_STEPS,
)
from errors import ControlDomainError, DefectUnsatisfiable, DimensionError, PlannerError
from ode import rk4_step
from regpoint import ImplicitSolver, phi
from signals import Control, Trajectory

logger = logging.getLogger(__name__)


# =============================================================================
# Tolerances
# =============================================================================

class RadiusTable:
    """
    Monotone sequence e_1, e_2, ... read at radius r as
    e_l + (e_{l+1} - e_l) * (r - floor(r)),  l = floor(r) + 1.

    Tolerance tables only shrink (nonincreasing in l), bound tables only
    rise (nondecreasing). Entries past the stored ones repeat the last.
    """

    def __init__(self, initial: float, increasing: bool = False):
        if not initial > 0:
            raise DimensionError(f"radius table needs a positive initial value, got {initial}")
        self.entries: List[float] = [float(initial)]
        self.increasing = increasing

    def _index(self, radius: float) -> int:
        base = int(math.floor(max(float(radius), 0.0)))
        while len(self.entries) < base + 2:
            self.entries.append(self.entries[-1])
        return base

    def at(self, radius: float) -> float:
        l = self._index(radius)
        e0, e1 = self.entries[l], self.entries[l + 1]
        return e0 + (e1 - e0) * (float(radius) - l)

    def shrink(self, radius: float, value: float):
        """Make at(radius) <= value"""
        l = self._index(radius)
        for j in range(l, len(self.entries)):
            self.entries[j] = min(self.entries[j], float(value))

    def raise_to(self, radius: float, value: float):
        """Make at(radius) >= value"""
        l = self._index(radius)
        for j in range(l, len(self.entries)):
            self.entries[j] = max(self.entries[j], float(value))

    def record(self, radius: float, value: float):
        if self.increasing:
            self.raise_to(radius, value)
        else:
            self.shrink(radius, value)

    def to_list(self) -> List[float]:
        return list(self.entries)


@dataclass
class ToleranceProfile:
    """sigma, delta and eps_1 tables plus the control bound M, all keyed by |xi|"""
    sigma: RadiusTable
    delta: RadiusTable
    eps1: RadiusTable
    bound: RadiusTable

    @classmethod
    def initial(cls, horizon: float) -> "ToleranceProfile":
        """Defaults for a window of length horizon = T - t1"""
        return cls(sigma=RadiusTable(0.5 * horizon), delta=RadiusTable(DELTA_START),
                   eps1=RadiusTable(EPS1_MAX), bound=RadiusTable(1.0, increasing=True))

    @staticmethod
    def radius(xi) -> float:
        return float(np.linalg.norm(np.atleast_1d(xi)))

    def sigma_at(self, xi) -> float:
        return self.sigma.at(self.radius(xi))

    def delta_at(self, xi) -> float:
        return self.delta.at(self.radius(xi))

    def eps1_at(self, xi) -> float:
        return self.eps1.at(self.radius(xi))

    def eps2_at(self, xi) -> float:
        return EPS2_RATIO * self.eps1_at(xi)

    def delta1_at(self, xi) -> float:
        return DELTA1_FRACTION * self.eps2_at(xi)

    def budget_at(self, xi) -> float:
        return BUDGET_FRACTION * self.eps2_at(xi)

    def bound_at(self, xi) -> float:
        return self.bound.at(self.radius(xi))

    def record(self, xi, sigma: Optional[float] = None, delta: Optional[float] = None,
               eps1: Optional[float] = None, bound: Optional[float] = None):
        r = self.radius(xi)
        for table, value in ((self.sigma, sigma), (self.delta, delta), (self.eps1, eps1), (self.bound, bound)):
            if value is not None:
                table.record(r, value)

    def to_dict(self) -> Dict:
        return {"sigma": self.sigma.to_list(), "delta": self.delta.to_list(),
                "eps1": self.eps1.to_list(), "bound": self.bound.to_list()}


# =============================================================================
# Schedules
# =============================================================================

@dataclass
class SwitchingSchedule:
    """switch_times run T = tau_1 > tau_2 > ... > tau_(N+1) = t_stop; values[r] holds on [tau_(r+2), tau_(r+1))"""
    switch_times: np.ndarray
    values: np.ndarray
    dwell_min: float = field(init=False)

    def __post_init__(self):
        self.switch_times = np.asarray(self.switch_times, dtype=float).ravel()
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.switch_times.size < 2 or np.any(np.diff(self.switch_times) >= 0.0):
            raise DimensionError("switch times must be strictly decreasing")
        if self.values.shape[0] != self.switch_times.size - 1:
            raise DimensionError(f"{self.values.shape[0]} values for {self.switch_times.size - 1} intervals")
        if not np.all(np.isfinite(self.values)):
            raise DimensionError("schedule values must be finite")
        self.dwell_min = float(np.min(-np.diff(self.switch_times)))

    @property
    def segments(self) -> int:
        return self.values.shape[0]

    def to_control(self) -> Control:
        return Control.constant(self.switch_times[::-1], self.values[::-1])

    def to_dict(self) -> Dict:
        return {"switch_times": self.switch_times.tolist(), "values": self.values.tolist(),
                "dwell_min": self.dwell_min}


@dataclass(frozen=True, eq=False)
class FamilyMember:
    """One member y(xi, .) of a stage family on [t1, T] with its last-block rate"""
    xi: np.ndarray
    t1: float
    T: float
    state: Callable[[float], np.ndarray]
    rate: Callable[[float], np.ndarray]
    source: Optional[object] = None


@dataclass
class ReferenceRun:
    """Tracker output with the measured defect and drift"""
    trajectory: Trajectory
    control: Control
    schedule: SwitchingSchedule
    delta: float
    max_defect: float
    max_drift: float
    bound: float


# =============================================================================
# Control value selection
# =============================================================================

def _halton_unit(dim: int) -> np.ndarray:
    # first unscrambled point is the origin of the cube; skip it
    points = qmc.Halton(d=dim, scramble=False).random(SEARCH_SAMPLES_PER_RADIUS + 1)[1:]
    return 2.0 * points - 1.0


def select_control_value(solver: ImplicitSolver, t: float, y, target_zp, delta: float,
                         warm_start=None) -> np.ndarray:
    """
    v with |f_p(t, y, v) - target_zp| < delta / 3.

    Order: the warm start as-is, then phi warm-started there, then a
    Halton search on cubes of radius 2^a around the warm start whose best
    sample is polished with phi at every radius.
    """
    return _select(solver, t, y, target_zp, delta, warm_start)[0]


def _select(solver: ImplicitSolver, t: float, y, target_zp, delta: float,
            warm_start=None) -> Tuple[np.ndarray, float]:
    """select_control_value plus the radius of the origin ball the value was found in"""
    stage = solver.stage
    y = np.asarray(y, dtype=float)
    target = np.atleast_1d(np.asarray(target_zp, dtype=float))
    bound = delta / 3.0

    def defect(v: np.ndarray) -> float:
        try:
            return float(np.linalg.norm(stage.last_block(t, y, v) - target))
        except (PlannerError, ArithmeticError, ValueError):
            return math.inf

    def polish(v: np.ndarray) -> Optional[np.ndarray]:
        try:
            return phi(solver, t, y, target, v_init=v)
        except (PlannerError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            logger.debug(f"phi failed at t={t:.6g} ({exc})")
            return None

    center = solver.pinned if warm_start is None else np.atleast_1d(np.asarray(warm_start, dtype=float)).copy()
    if defect(center) < bound:
        return center, float(np.linalg.norm(center))

    v = polish(center)
    if v is not None and defect(v) < bound:
        return v, float(np.linalg.norm(v))

    unit = _halton_unit(stage.control_dim)
    reach = float(np.linalg.norm(center))
    for a in range(SEARCH_MAX_EXPONENT + 1):
        radius = 2.0 ** a
        # the cube center + radius * [-1, 1]^m sits inside this origin ball
        searched = reach + radius * math.sqrt(stage.control_dim)
        candidates = center + radius * unit
        defects = np.array([defect(c) for c in candidates])
        j = int(np.argmin(defects))
        best, best_defect = candidates[j], defects[j]
        polished = polish(best)
        if polished is not None:
            polished_defect = defect(polished)
            if polished_defect < min(best_defect, bound):
                best, best_defect = polished, polished_defect
        if best_defect < bound:
            logger.debug(f"search found a value at radius {radius:g} (t={t:.6g})")
            return best, max(searched, float(np.linalg.norm(best)))

    raise DefectUnsatisfiable(f"no control value within {bound:.3g} of the target rate",
                              t=t, radius=2.0 ** SEARCH_MAX_EXPONENT)


# =============================================================================
# Reference construction
# =============================================================================

def build_reference(solver: ImplicitSolver, member: FamilyMember, delta: float,
                    t_stop: Optional[float] = None, warm_start=None,
                    drift_limit: Optional[float] = None, steps: int = TRACKER_STEPS,
                    tol: Optional[ToleranceProfile] = None) -> ReferenceRun:
    """
    Integrate the stage backward from (T, xi) to t_stop under a
    piecewise-constant control tracking member.rate.

    Steps start at (T - t_stop) / steps and halve down to the dwell floor
    DWELL_FRACTION * (T - t1) before a value is re-selected. A freshly
    selected value whose first floor step reaches delta raises
    DefectUnsatisfiable; one that only passes the hold limit is kept.

    The recorded bound is one plus the largest origin-ball radius any
    selection searched, so |v(t)| <= bound in the Euclidean norm.
    """
    if not delta > 0:
        raise DimensionError(f"delta must be positive, got {delta}")
    stage = solver.stage
    T = member.T
    t_stop = member.t1 if t_stop is None else float(t_stop)
    if not member.t1 <= t_stop < T:
        raise ControlDomainError(f"t_stop={t_stop} outside [{member.t1}, {T})")

    h_nom = (T - t_stop) / steps
    dwell = DWELL_FRACTION * (T - member.t1)
    hold_limit = (1.0 - HYSTERESIS) * delta
    xi = np.asarray(member.xi, dtype=float)

    def defect(t: float, z: np.ndarray, v: np.ndarray) -> float:
        return float(np.linalg.norm(member.rate(t) - stage.last_block(t, z, v)))

    t, z = T, xi.copy()
    v, reach = _select(solver, t, z, member.rate(t), delta, warm_start)
    times, states = [t], [z]
    switch_times, values = [T], [v]
    fresh = True

    while t > t_stop:
        h = min(h_nom, t - t_stop)
        while True:
            t_new = t - h if h < t - t_stop else t_stop
            z_new = rk4_step(lambda s, y, v=v: stage.rhs(s, y, v), t, t_new - t, z)
            if not np.all(np.isfinite(z_new)):
                raise DefectUnsatisfiable("reference trajectory blew up", t=t_new)
            d_new = defect(t_new, z_new, v)
            if d_new < hold_limit:
                break
            if 0.5 * h >= dwell:
                h *= 0.5
                continue
            if not fresh:
                v, r = _select(solver, t, z, member.rate(t), delta, warm_start=v)
                reach = max(reach, r)
                switch_times.append(t)
                values.append(v)
                fresh = True
                h = min(h_nom, t - t_stop)
                continue
            if d_new >= delta:
                raise DefectUnsatisfiable(f"defect reaches delta={delta:.3g} within one dwell step",
                                          t=t_new, defect=d_new)
            break
        t, z = t_new, z_new
        fresh = False
        times.append(t)
        states.append(z)
        if drift_limit is not None:
            drift = float(np.linalg.norm(z - member.state(t)))
            if drift > drift_limit:
                raise DefectUnsatisfiable(f"reference drifted {drift:.3g} from the family", t=t,
                                          drift_limit=drift_limit)
    switch_times.append(t_stop)

    schedule = SwitchingSchedule(np.array(switch_times), np.array(values))
    control = schedule.to_control()
    times_arr = np.array(times[::-1])
    states_arr = np.array(states[::-1])
    derivs = np.array([stage.rhs(s, zz, control.value(s)) for s, zz in zip(times_arr, states_arr)])
    trajectory = Trajectory(times_arr, states_arr, derivs, direction=-1)

    max_defect = 0.0
    for s, zz in zip(times_arr, states_arr):
        for side in ("right", "left"):
            max_defect = max(max_defect, defect(s, zz, control.value(s, side)))
    max_drift = max(float(np.linalg.norm(zz - member.state(s))) for s, zz in zip(times_arr, states_arr))
    bound = reach + 1.0
    if tol is not None:
        tol.record(xi, delta=delta, bound=bound)

    logger.debug(f"reference: {schedule.segments} segments, dwell {schedule.dwell_min:.3g}, "
                 f"defect {max_defect:.3g}, drift {max_drift:.3g}")
    return ReferenceRun(trajectory, control, schedule, delta, max_defect, max_drift, bound)
