"""
tristeer - Signals

Control signals (piecewise-constant or piecewise-cubic Hermite) and
dense state trajectories. Both evaluate exactly at their stored knots.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np

from errors import ControlDomainError, DimensionError

# Gauss-Legendre nodes for per-interval L1 integration
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class ControlKind(Enum):
    """Control representations"""
    CONSTANT = "piecewise-constant"
    CUBIC = "piecewise-cubic"


def _hermite_values(s: np.ndarray, h: np.ndarray, y0, y1, m0, m1) -> np.ndarray:
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    hh = h[:, None]
    return (h00[:, None] * y0 + h10[:, None] * hh * m0
            + h01[:, None] * y1 + h11[:, None] * hh * m1)


def _hermite_derivs(s: np.ndarray, h: np.ndarray, y0, y1, m0, m1) -> np.ndarray:
    s2 = s * s
    d00 = 6.0 * s2 - 6.0 * s
    d10 = 3.0 * s2 - 4.0 * s + 1.0
    d01 = -6.0 * s2 + 6.0 * s
    d11 = 3.0 * s2 - 2.0 * s
    # at s = 0 and s = 1 this reduces to m0 and m1 exactly
    return ((d00[:, None] * y0 + d01[:, None] * y1) / h[:, None]
            + d10[:, None] * m0 + d11[:, None] * m1)


@dataclass(frozen=True, eq=False)
class Control:
    """
    Time-parameterized input on [breakpoints[0], breakpoints[-1]].

    CONSTANT: coefficients[i] is the value on segment i, shape (n, d).
    CUBIC:    coefficients[i] = (y0, y1, m0, m1), shape (n, 4, d): end values
              and end slopes of segment i.
    Segments are closed on the left; the last one also owns the final knot.
    """
    kind: ControlKind
    breakpoints: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).ravel()
        coef = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        if bp.size < 2 or np.any(np.diff(bp) <= 0.0):
            raise DimensionError("control breakpoints must be strictly increasing (at least two)")
        if self.kind is ControlKind.CONSTANT:
            if coef.ndim == 1:
                coef = coef[:, None]
            expected = (bp.size - 1,)
        else:
            expected = (bp.size - 1, 4)
        if coef.shape[:len(expected)] != expected or coef.ndim != len(expected) + 1:
            raise DimensionError(f"coefficients of shape {coef.shape} do not fit {bp.size - 1} segments")
        if not np.all(np.isfinite(coef)):
            raise DimensionError("control coefficients must be finite")
        object.__setattr__(self, "coefficients", coef)

    # --- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, breakpoints: Sequence[float], values) -> "Control":
        return cls(ControlKind.CONSTANT, np.asarray(breakpoints, dtype=float), np.asarray(values, dtype=float))

    @classmethod
    def hermite(cls, knots: Sequence[float], values, slopes) -> "Control":
        """C1 cubic from knot values and slopes, shapes (n+1, d)"""
        values = np.asarray(values, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
            slopes = slopes[:, None]
        coef = np.stack([values[:-1], values[1:], slopes[:-1], slopes[1:]], axis=1)
        return cls(ControlKind.CUBIC, np.asarray(knots, dtype=float), coef)

    @classmethod
    def hold(cls, t_start: float, t_end: float, value) -> "Control":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls.constant([t_start, t_end], value[None, :])

    # --- shape -------------------------------------------------------------

    @property
    def start(self) -> float:
        return float(self.breakpoints[0])

    @property
    def end(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def dim(self) -> int:
        return self.coefficients.shape[-1]

    @property
    def segments(self) -> int:
        return self.breakpoints.size - 1

    def _check_domain(self, t: float) -> float:
        tol = 1e-12 * max(1.0, abs(self.start), abs(self.end))
        if t < self.start - tol or t > self.end + tol:
            raise ControlDomainError(f"t={t!r} outside control domain [{self.start}, {self.end}]")
        return min(max(t, self.start), self.end)

    def _locate(self, t: np.ndarray, side: str) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, t, side=side) - 1
        return np.clip(idx, 0, self.segments - 1)

    # --- evaluation --------------------------------------------------------

    def values(self, ts, side: str = "right") -> np.ndarray:
        """Vectorized evaluation, shape (len(ts), d)"""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        idx = self._locate(ts, side)
        if self.kind is ControlKind.CONSTANT:
            return self.coefficients[idx].copy()
        a = self.breakpoints[idx]
        h = self.breakpoints[idx + 1] - a
        c = self.coefficients[idx]
        s = (ts - a) / h
        return _hermite_values(s, h, c[:, 0], c[:, 1], c[:, 2], c[:, 3])

    def derivatives(self, ts, side: str = "right") -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.kind is ControlKind.CONSTANT:
            return np.zeros((ts.size, self.dim))
        idx = self._locate(ts, side)
        a = self.breakpoints[idx]
        h = self.breakpoints[idx + 1] - a
        c = self.coefficients[idx]
        s = (ts - a) / h
        return _hermite_derivs(s, h, c[:, 0], c[:, 1], c[:, 2], c[:, 3])

    def value(self, t: float, side: str = "right") -> np.ndarray:
        """
        Value at t. side picks the segment at an interior breakpoint:
        "right" (default) or "left" for the one ending there.
        """
        t = self._check_domain(float(t))
        return self.values([t], side)[0]

    def derivative(self, t: float, side: str = "right") -> np.ndarray:
        t = self._check_domain(float(t))
        return self.derivatives([t], side)[0]

    def discontinuities(self) -> List[float]:
        """Interior breakpoints where the value (or slope, for cubics) jumps"""
        c = self.coefficients
        out = []
        for i in range(1, self.segments):
            if self.kind is ControlKind.CONSTANT:
                jump = not np.array_equal(c[i - 1], c[i])
            else:
                jump = not (np.array_equal(c[i - 1, 1], c[i, 0]) and np.array_equal(c[i - 1, 3], c[i, 2]))
            if jump:
                out.append(float(self.breakpoints[i]))
        return out

    # --- algebra -----------------------------------------------------------

    def as_cubic(self) -> "Control":
        if self.kind is ControlKind.CUBIC:
            return self
        c = self.coefficients
        zeros = np.zeros_like(c)
        return Control(ControlKind.CUBIC, self.breakpoints.copy(), np.stack([c, c, zeros, zeros], axis=1))

    def restrict(self, a: float, b: float) -> "Control":
        """Exact restriction to [a, b]"""
        a = self._check_domain(float(a))
        b = self._check_domain(float(b))
        if not b > a:
            raise ControlDomainError(f"empty restriction [{a}, {b}]")
        inner = self.breakpoints[(self.breakpoints > a) & (self.breakpoints < b)]
        knots = np.concatenate([[a], inner, [b]])
        if self.kind is ControlKind.CONSTANT:
            mids = 0.5 * (knots[:-1] + knots[1:])
            return Control(self.kind, knots, self.coefficients[self._locate(mids, "right")])
        return self._resample(knots)

    def _resample(self, knots: np.ndarray) -> "Control":
        """Cubic on a refinement of its own breakpoints; exact"""
        lo = knots[:-1]
        hi = knots[1:]
        y0 = self.values(lo, "right")
        m0 = self.derivatives(lo, "right")
        y1 = self.values(hi, "left")
        m1 = self.derivatives(hi, "left")
        return Control(ControlKind.CUBIC, knots, np.stack([y0, y1, m0, m1], axis=1))

    def concat(self, other: "Control") -> "Control":
        """Join [a, b] and [b, c]; the right piece owns b"""
        if self.dim != other.dim:
            raise DimensionError(f"cannot join controls of dimension {self.dim} and {other.dim}")
        tol = 1e-12 * max(1.0, abs(self.end))
        if abs(self.end - other.start) > tol:
            raise ControlDomainError(f"controls do not meet: {self.end} vs {other.start}")
        left, right = self, other
        if left.kind is not right.kind:
            left, right = left.as_cubic(), right.as_cubic()
        knots = np.concatenate([left.breakpoints[:-1], [left.end], right.breakpoints[1:]])
        return Control(left.kind, knots, np.concatenate([left.coefficients, right.coefficients]))

    def time_reversed(self, pivot: float) -> "Control":
        """t -> self(2*pivot - t); slopes change sign"""
        knots = 2.0 * pivot - self.breakpoints[::-1]
        c = self.coefficients[::-1]
        if self.kind is ControlKind.CONSTANT:
            return Control(self.kind, knots, c.copy())
        flipped = np.stack([c[:, 1], c[:, 0], -c[:, 3], -c[:, 2]], axis=1)
        return Control(self.kind, knots, flipped)

    @staticmethod
    def linear_combination(controls: Sequence["Control"], coeffs: Sequence[float]) -> "Control":
        """sum_j coeffs[j] * controls[j] on the union of their breakpoints"""
        if len(controls) != len(coeffs) or not controls:
            raise DimensionError("need one coefficient per control")
        base = controls[0]
        for ctl in controls[1:]:
            if abs(ctl.start - base.start) > 1e-12 or abs(ctl.end - base.end) > 1e-12 or ctl.dim != base.dim:
                raise ControlDomainError("linear combination needs controls on the same interval")
        knots = np.unique(np.concatenate([c.breakpoints for c in controls]))
        knots[0], knots[-1] = base.start, base.end
        weights = [float(w) for w in coeffs]
        if all(c.kind is ControlKind.CONSTANT for c in controls):
            mids = 0.5 * (knots[:-1] + knots[1:])
            vals = sum(w * c.values(mids) for w, c in zip(weights, controls))
            return Control(ControlKind.CONSTANT, knots, vals)
        lo, hi = knots[:-1], knots[1:]
        parts = [sum(w * getattr(c, fn)(ts, side) for w, c in zip(weights, controls))
                 for fn, ts, side in (("values", lo, "right"), ("values", hi, "left"),
                                      ("derivatives", lo, "right"), ("derivatives", hi, "left"))]
        return Control(ControlKind.CUBIC, knots, np.stack(parts, axis=1))

    # --- norms -------------------------------------------------------------

    def sample_grid(self, per_segment: int = 8) -> np.ndarray:
        s = np.linspace(0.0, 1.0, per_segment + 1)[:-1]
        a = self.breakpoints[:-1, None]
        h = np.diff(self.breakpoints)[:, None]
        return np.concatenate([(a + s[None, :] * h).ravel(), [self.end]])

    def sup_norm(self, per_segment: int = 8) -> float:
        grid = self.sample_grid(per_segment)
        norms = np.linalg.norm(self.values(grid, "right"), axis=1)
        norms_left = np.linalg.norm(self.values(grid, "left"), axis=1)
        return float(max(norms.max(), norms_left.max()))

    def sup_distance(self, other: "Control", per_segment: int = 8) -> float:
        lo = max(self.start, other.start)
        hi = min(self.end, other.end)
        grid = np.unique(np.concatenate([self.sample_grid(per_segment), other.sample_grid(per_segment)]))
        grid = grid[(grid >= lo) & (grid <= hi)]
        diff = self.values(grid) - other.values(grid)
        return float(np.linalg.norm(diff, axis=1).max())

    def l1_distance(self, other: "Control", a: Optional[float] = None, b: Optional[float] = None) -> float:
        """integral of |self - other| over [a, b], Gauss-Legendre per breakpoint interval"""
        a = max(self.start, other.start) if a is None else a
        b = min(self.end, other.end) if b is None else b
        knots = np.unique(np.concatenate([[a, b], self.breakpoints, other.breakpoints]))
        knots = knots[(knots >= a) & (knots <= b)]
        # halve each interval so a sign change inside one costs little accuracy
        knots = np.unique(np.concatenate([knots, 0.5 * (knots[:-1] + knots[1:])]))
        lo = knots[:-1, None]
        half = 0.5 * np.diff(knots)[:, None]
        ts = (lo + half * (_GL_NODES[None, :] + 1.0)).ravel()
        diff = np.linalg.norm(self.values(ts) - other.values(ts), axis=1).reshape(half.shape[0], -1)
        return float(np.sum(half[:, 0] * (diff @ _GL_WEIGHTS)))

    # --- serialization -----------------------------------------------------

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "breakpoints": self.breakpoints.tolist(),
            "coefficients": self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Control":
        try:
            kind = ControlKind(data["kind"])
            return cls(kind, np.asarray(data["breakpoints"], dtype=float),
                       np.asarray(data["coefficients"], dtype=float))
        except (KeyError, ValueError, TypeError) as exc:
            raise DimensionError(f"malformed control record: {exc}") from exc


# stop reasons of an early-terminated integration
STOP_GUARD = "guard"                # state norm passed the guard radius
STOP_NON_FINITE = "non-finite"      # a state component became inf or nan
STOP_SOLVER = "solver-failure"      # adaptive solver gave up with finite states


@dataclass(eq=False)
class Trajectory:
    """
    Dense state path: samples plus derivatives, cubic Hermite in between.

    times is always increasing; direction = -1 marks a path integrated
    backward, whose initial state is states[-1].

    blown_up flags any early stop, at blow_up_time. Only a STOP_GUARD stop
    guarantees the last norm is past the guard radius; stop_reason says which.
    """
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    blown_up: bool = False
    blow_up_time: Optional[float] = None
    direction: int = 1
    stop_reason: Optional[str] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.derivs = np.atleast_2d(np.asarray(self.derivs, dtype=float))
        if self.times.size == 0 or np.any(np.diff(self.times) <= 0.0):
            raise DimensionError("trajectory times must be strictly increasing")
        if self.states.shape[0] != self.times.size or self.derivs.shape != self.states.shape:
            raise DimensionError("trajectory samples do not match its times")

    @property
    def t_start(self) -> float:
        return float(self.times[0] if self.direction > 0 else self.times[-1])

    @property
    def t_end(self) -> float:
        return float(self.times[-1] if self.direction > 0 else self.times[0])

    @property
    def initial_state(self) -> np.ndarray:
        return (self.states[0] if self.direction > 0 else self.states[-1]).copy()

    @property
    def final_state(self) -> np.ndarray:
        return (self.states[-1] if self.direction > 0 else self.states[0]).copy()

    def at(self, t: float) -> np.ndarray:
        """State at t; stored samples are returned as-is"""
        t = float(t)
        lo, hi = self.times[0], self.times[-1]
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if t < lo - tol or t > hi + tol:
            raise ControlDomainError(f"t={t!r} outside trajectory span [{lo}, {hi}]")
        i = int(np.searchsorted(self.times, t))
        if i < self.times.size and self.times[i] == t:
            return self.states[i].copy()
        t = min(max(t, lo), hi)
        i = int(np.clip(np.searchsorted(self.times, t) - 1, 0, self.times.size - 2))
        a, b = self.times[i], self.times[i + 1]
        h = np.array([b - a])
        s = np.array([(t - a) / (b - a)])
        return _hermite_values(s, h, self.states[i], self.states[i + 1],
                               self.derivs[i], self.derivs[i + 1])[0]

    def sample(self, ts) -> np.ndarray:
        return np.array([self.at(t) for t in np.atleast_1d(ts)])
