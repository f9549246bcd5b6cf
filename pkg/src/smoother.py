"""
tristeer - Control Smoothing

C1 replacements for piecewise-constant and sampled controls with exact
boundary pins:

    RAMPS   cubic Hermite blends of half-width h around every switch and
            at both ends, h halved until the L1 budget holds
    SPLINE  least-squares C1 cubic on a uniform grid with the pins imposed
            as fixed coefficients, refined until the L1 budget holds;
            falls back to RAMPS

Pins are stored as Hermite coefficients, so the smoothed control
reproduces them bit-for-bit at the end knots.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from config import RAMP_MIN_WIDTH, SPLINE_MAX_CELLS, SPLINE_SAMPLES_PER_CELL, SPLINE_START_CELLS
from errors import ConfigError, DimensionError, SmoothingFailed
from signals import Control, ControlKind

logger = logging.getLogger(__name__)


class SmoothingMode(Enum):
    RAMPS = "ramps"
    SPLINE = "spline"


def _pin(value, dim: Optional[int] = None) -> Optional[np.ndarray]:
    if value is None:
        return None
    arr = np.atleast_1d(np.asarray(value, dtype=float)).copy()
    if dim is not None and arr.size != dim:
        raise DimensionError(f"pin has length {arr.size}, expected {dim}")
    return arr


@dataclass(frozen=True)
class SmoothingSpec:
    """
    l1_budget: allowed L1 distance to the input control.
    left_pin: (value, derivative) at the start.
    right_pin: (value, derivative); derivative None leaves the right slope
    free in SPLINE mode and flat in RAMPS mode.
    ramp_width: initial half-width h; clamped below a quarter of the
    shortest segment.
    """
    l1_budget: float
    left_pin: Tuple[np.ndarray, np.ndarray]
    right_pin: Tuple[np.ndarray, Optional[np.ndarray]]
    ramp_width: float = math.inf
    mode: SmoothingMode = SmoothingMode.RAMPS

    def __post_init__(self):
        if not self.l1_budget > 0:
            raise ConfigError(f"l1_budget must be positive, got {self.l1_budget}")
        if not self.ramp_width > 0:
            raise ConfigError(f"ramp_width must be positive, got {self.ramp_width}")
        left_value = _pin(self.left_pin[0])
        object.__setattr__(self, "left_pin", (left_value, _pin(self.left_pin[1], left_value.size)))
        right_value = _pin(self.right_pin[0], left_value.size)
        object.__setattr__(self, "right_pin", (right_value, _pin(self.right_pin[1], left_value.size)))

    def sup_limit(self, v: Control) -> float:
        """2 * max(|pins|, |v|_inf) + 1"""
        pins = max(float(np.linalg.norm(self.left_pin[0])), float(np.linalg.norm(self.right_pin[0])))
        return 2.0 * max(pins, v.sup_norm()) + 1.0


def _merged(v: Control) -> Tuple[np.ndarray, np.ndarray]:
    """Breakpoints and values with equal neighbouring values joined"""
    c = v.coefficients
    keep = [0] + [i for i in range(1, v.segments) if not np.array_equal(c[i], c[i - 1])]
    return np.concatenate([v.breakpoints[keep], [v.end]]), c[keep]


def _ramp_control(knots: np.ndarray, values: np.ndarray, spec: SmoothingSpec, h: float) -> Control:
    a, b = knots[0], knots[-1]
    zero = np.zeros(values.shape[1])
    left_value, left_slope = spec.left_pin
    right_value, right_slope = spec.right_pin
    ts = [a, a + h]
    ys = [left_value, values[0]]
    ms = [left_slope, zero]
    for i in range(1, values.shape[0]):
        tau = knots[i]
        ts += [tau - h, tau + h]
        ys += [values[i - 1], values[i]]
        ms += [zero, zero]
    ts += [b - h, b]
    ys += [values[-1], right_value]
    ms += [zero, zero if right_slope is None else right_slope]
    return Control.hermite(np.array(ts), np.array(ys), np.array(ms))


def _smooth_ramps(v: Control, spec: SmoothingSpec) -> Control:
    knots, values = _merged(v)
    h = min(spec.ramp_width, 0.25 * float(np.min(np.diff(knots))))
    limit = spec.sup_limit(v)
    while h >= RAMP_MIN_WIDTH:
        out = _ramp_control(knots, values, spec, h)
        l1 = out.l1_distance(v)
        if l1 <= spec.l1_budget and out.sup_norm() <= limit:
            logger.debug(f"ramps: h={h:.3g}, L1 {l1:.3g} <= {spec.l1_budget:.3g}")
            return out
        h *= 0.5
    raise SmoothingFailed(f"L1 budget {spec.l1_budget:.3g} unreachable with ramps wider than {RAMP_MIN_WIDTH:g}",
                          switches=values.shape[0] - 1)


def _fit_spline(v: Control, spec: SmoothingSpec, cells: int) -> Control:
    """Least-squares Hermite cubic on `cells` uniform cells with the pins held fixed"""
    a, b = v.start, v.end
    knots = np.linspace(a, b, cells + 1)
    h = (b - a) / cells
    s = (np.arange(SPLINE_SAMPLES_PER_CELL) + 0.5) / SPLINE_SAMPLES_PER_CELL
    cell = np.repeat(np.arange(cells), s.size)
    ss = np.tile(s, cells)
    ts = knots[cell] + ss * h
    target = v.values(ts)

    # columns: y_0..y_n then m_0..m_n
    n1 = cells + 1
    basis = np.zeros((ts.size, 2 * n1))
    rows = np.arange(ts.size)
    basis[rows, cell] = 2.0 * ss ** 3 - 3.0 * ss ** 2 + 1.0
    basis[rows, cell + 1] = -2.0 * ss ** 3 + 3.0 * ss ** 2
    basis[rows, n1 + cell] = h * (ss ** 3 - 2.0 * ss ** 2 + ss)
    basis[rows, n1 + cell + 1] = h * (ss ** 3 - ss ** 2)

    fixed = {0: spec.left_pin[0], n1: spec.left_pin[1], cells: spec.right_pin[0]}
    if spec.right_pin[1] is not None:
        fixed[2 * n1 - 1] = spec.right_pin[1]
    free = [j for j in range(2 * n1) if j not in fixed]
    rhs = target - sum(np.outer(basis[:, j], value) for j, value in fixed.items())
    solution, *_ = np.linalg.lstsq(basis[:, free], rhs, rcond=None)

    coef = np.empty((2 * n1, v.dim))
    coef[free] = solution
    for j, value in fixed.items():
        coef[j] = value
    return Control.hermite(knots, coef[:n1], coef[n1:])


def _smooth_spline(v: Control, spec: SmoothingSpec) -> Control:
    limit = spec.sup_limit(v)
    cells = SPLINE_START_CELLS
    while cells <= SPLINE_MAX_CELLS:
        out = _fit_spline(v, spec, cells)
        l1 = out.l1_distance(v)
        if l1 <= spec.l1_budget and out.sup_norm() <= limit:
            logger.debug(f"spline: {cells} cells, L1 {l1:.3g} <= {spec.l1_budget:.3g}")
            return out
        cells *= 2
    raise SmoothingFailed(f"spline fit misses L1 budget {spec.l1_budget:.3g} at {SPLINE_MAX_CELLS} cells")


def smooth_control(v: Control, spec: SmoothingSpec) -> Control:
    """C1 control within spec.l1_budget of the piecewise-constant v, pinned at both ends"""
    if v.kind is not ControlKind.CONSTANT:
        raise DimensionError("smooth_control expects a piecewise-constant control")
    if spec.left_pin[0].size != v.dim:
        raise DimensionError(f"pins of length {spec.left_pin[0].size} for a control of dimension {v.dim}")
    if spec.mode is SmoothingMode.SPLINE:
        try:
            return _smooth_spline(v, spec)
        except SmoothingFailed as exc:
            logger.debug(f"{exc.message}; falling back to ramps")
    return _smooth_ramps(v, spec)


def smooth_family_segment(times, samples, left_pin: Tuple[np.ndarray, np.ndarray], delta1: float) -> Control:
    """
    C1 cubic through sampled reference values with the left value and
    slope replaced by left_pin.

    The pinned first cell is shortened by inserting a knot at
    times[0] + h, h halved until the fit stays within delta1 of the
    unpinned spline.
    """
    times = np.asarray(times, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if times.size < 2 or samples.shape[0] != times.size:
        raise DimensionError("need at least two reference samples, one per time")
    value0 = _pin(left_pin[0], samples.shape[1])
    slope0 = _pin(left_pin[1], samples.shape[1])

    spline = CubicSpline(times, samples, axis=0)
    slopes = spline(times, 1)
    reference = Control.hermite(times, samples, slopes)
    h = 0.5 * (times[1] - times[0])
    while h >= RAMP_MIN_WIDTH:
        t_ins = times[0] + h
        knots = np.concatenate([[times[0], t_ins], times[1:]])
        values = np.concatenate([value0[None, :], spline(t_ins)[None, :], samples[1:]])
        derivs = np.concatenate([slope0[None, :], spline(t_ins, 1)[None, :], slopes[1:]])
        out = Control.hermite(knots, values, derivs)
        deviation = out.sup_distance(reference, per_segment=16)
        if deviation < delta1:
            return out
        h *= 0.5
    raise SmoothingFailed(f"left pin cannot be met within delta_1={delta1:.3g}",
                          gap=float(np.linalg.norm(samples[0] - value0)))
