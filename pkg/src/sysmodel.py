"""
tristeer - System Model

Triangular (cascade) systems

    dx_i/dt = f_i(t, x_1, ..., x_i, x_{i+1}),  i = 1..nu,  x_{nu+1} = u,

their state partitioning, the stage maps used by the induction over
blocks, and the checks that can be made from point evaluations.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import FD_STEP, VALIDATION_PROBES, VALIDATION_SPREAD
from errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

# block(t, x_1, ..., x_i, x_{i+1}) -> vector of length m_i
BlockFn = Callable[..., np.ndarray]


def finite_difference_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                               rel_step: float = FD_STEP) -> np.ndarray:
    """Central differences, step rel_step * max(1, |x_j|) per coordinate"""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2.0 * h)
    return jac


def _as_vector(value, length: int, what: str) -> np.ndarray:
    vec = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
    if vec.size != length:
        raise DimensionError(f"{what} has length {vec.size}, expected {length}")
    return vec


@dataclass(frozen=True, eq=False)
class StateVector:
    """A state x = (x_1, ..., x_nu) with its block partition"""
    data: np.ndarray
    dims: Tuple[int, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float).ravel()
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", tuple(int(m) for m in self.dims))
        if data.size != sum(self.dims):
            raise DimensionError(f"state of length {data.size} does not match dims {self.dims}")

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray]) -> "StateVector":
        parts = [np.atleast_1d(np.asarray(b, dtype=float)).ravel() for b in blocks]
        return cls(np.concatenate(parts), tuple(p.size for p in parts))

    def block(self, i: int) -> np.ndarray:
        """Block x_i, 1-based"""
        if not 1 <= i <= len(self.dims):
            raise DimensionError(f"block index {i} out of range 1..{len(self.dims)}")
        start = sum(self.dims[:i - 1])
        return self.data[start:start + self.dims[i - 1]].copy()

    def blocks(self) -> List[np.ndarray]:
        return [self.block(i) for i in range(1, len(self.dims) + 1)]

    def __len__(self):
        return self.data.size


@dataclass
class ValidationReport:
    """Result of validate_system: hard violations plus unchecked assumptions"""
    violations: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True, eq=False)
class TriangularSystem:
    """
    Cascade system with nu blocks.

    dims holds m_1..m_{nu+1}; the last entry is the control dimension.
    jac_x[i] (optional) returns d f_i / d(x_1..x_i), jac_next[i] returns
    d f_i / d x_{i+1}; finite differences fill in missing callbacks.
    """
    dims: Tuple[int, ...]
    blocks: Tuple[BlockFn, ...]
    t0: float = 0.0
    T: float = 1.0
    jac_x: Optional[Tuple[Optional[BlockFn], ...]] = None
    jac_next: Optional[Tuple[Optional[BlockFn], ...]] = None
    name: str = "system"

    def __post_init__(self):
        dims = tuple(int(m) for m in self.dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if len(dims) < 2 or any(m <= 0 for m in dims):
            raise DimensionError(f"dims must list at least two positive sizes, got {dims}")
        if len(self.blocks) != len(dims) - 1:
            raise DimensionError(f"{len(self.blocks)} blocks given for dims {dims}")
        if not self.T > self.t0:
            raise ConfigError(f"empty time window [{self.t0}, {self.T}]")
        for attr in ("jac_x", "jac_next"):
            jacs = getattr(self, attr)
            if jacs is not None:
                if len(jacs) != len(self.blocks):
                    raise DimensionError(f"{attr} needs one entry per block")
                object.__setattr__(self, attr, tuple(jacs))

    # --- sizes -------------------------------------------------------------

    @property
    def nu(self) -> int:
        return len(self.blocks)

    @property
    def state_dims(self) -> Tuple[int, ...]:
        return self.dims[:-1]

    @property
    def state_dim(self) -> int:
        return sum(self.dims[:-1])

    @property
    def control_dim(self) -> int:
        return self.dims[-1]

    def split(self, x: Union[np.ndarray, StateVector]) -> List[np.ndarray]:
        data = x.data if isinstance(x, StateVector) else x
        return StateVector(_as_vector(data, self.state_dim, "state"), self.state_dims).blocks()

    def state(self, data) -> StateVector:
        return StateVector(_as_vector(data, self.state_dim, "state"), self.state_dims)

    # --- evaluation --------------------------------------------------------

    def block_value(self, i: int, t: float, xs: Sequence[np.ndarray], nxt: np.ndarray) -> np.ndarray:
        """f_i(t, x_1..x_i, x_{i+1}) with an output length check"""
        out = np.atleast_1d(np.asarray(self.blocks[i - 1](t, *xs, nxt), dtype=float)).ravel()
        if out.size != self.dims[i - 1]:
            raise DimensionError(f"block {i} returned length {out.size}, expected {self.dims[i - 1]}",
                                 t=t)
        return out

    def block_jacobians(self, i: int, t: float, xs: Sequence[np.ndarray],
                        nxt: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(d f_i / d(x_1..x_i), d f_i / d x_{i+1})"""
        xs = [np.asarray(b, dtype=float) for b in xs]
        nxt = np.asarray(nxt, dtype=float)
        m_i = self.dims[i - 1]
        sizes = [b.size for b in xs]
        jx_fn = self.jac_x[i - 1] if self.jac_x is not None else None
        jn_fn = self.jac_next[i - 1] if self.jac_next is not None else None

        if jx_fn is not None:
            jx = np.asarray(jx_fn(t, *xs, nxt), dtype=float).reshape(m_i, sum(sizes))
        else:
            def fx(flat):
                parts = np.split(flat, np.cumsum(sizes)[:-1])
                return self.block_value(i, t, parts, nxt)
            jx = finite_difference_jacobian(fx, np.concatenate(xs))

        if jn_fn is not None:
            jn = np.asarray(jn_fn(t, *xs, nxt), dtype=float).reshape(m_i, nxt.size)
        else:
            jn = finite_difference_jacobian(lambda v: self.block_value(i, t, xs, v), nxt)
        return jx, jn

    def stage(self, p: int) -> "StageSystem":
        return StageSystem(self, p)

    def rhs(self, t: float, x, u) -> np.ndarray:
        return self.stage(self.nu).rhs(t, x.data if isinstance(x, StateVector) else x, u)

    def jacobians(self, t: float, x, u) -> Tuple[np.ndarray, np.ndarray]:
        return self.stage(self.nu).jacobians(t, x, u)

    # --- transformations ---------------------------------------------------

    def mirrored(self, t1: float) -> "TriangularSystem":
        """
        Time-reversed system s -> -f(2*t1 - s, x, u) on [2*t1 - T, 2*t1 - t0].

        A trajectory of the mirrored system leaving x at s = t1 is a
        trajectory of the original system arriving at x at t = t1.
        """
        def flip(fn: Optional[BlockFn]) -> Optional[BlockFn]:
            if fn is None:
                return None
            return lambda s, *args: -np.asarray(fn(2.0 * t1 - s, *args), dtype=float)

        return TriangularSystem(
            dims=self.dims,
            blocks=tuple(flip(b) for b in self.blocks),
            t0=2.0 * t1 - self.T,
            T=2.0 * t1 - self.t0,
            jac_x=None if self.jac_x is None else tuple(flip(j) for j in self.jac_x),
            jac_next=None if self.jac_next is None else tuple(flip(j) for j in self.jac_next),
            name=f"{self.name}~mirror",
        )


class StageSystem:
    """
    Stage p of the block induction: state y = (x_1, ..., x_p), control v = x_{p+1}.

        dy_i/dt = f_i(t, y_1..y_i, y_{i+1}),  i < p
        dy_p/dt = f_p(t, y_1..y_p, v)
    """

    def __init__(self, system: TriangularSystem, p: int):
        if not 1 <= p <= system.nu:
            raise DimensionError(f"stage {p} out of range 1..{system.nu}")
        self.system = system
        self.p = p
        self.dims = system.dims[:p]
        self.state_dim = sum(self.dims)
        self.control_dim = system.dims[p]
        self.block_dim = system.dims[p - 1]

    def __repr__(self):
        return f"StageSystem({self.system.name}, p={self.p})"

    def split(self, y: np.ndarray) -> List[np.ndarray]:
        return StateVector(_as_vector(y, self.state_dim, "stage state"), self.dims).blocks()

    def rhs(self, t: float, y, v) -> np.ndarray:
        ys = self.split(y)
        v = _as_vector(v, self.control_dim, "control")
        out = []
        for i in range(1, self.p + 1):
            nxt = ys[i] if i < self.p else v
            out.append(self.system.block_value(i, t, ys[:i], nxt))
        return np.concatenate(out)

    def last_block(self, t: float, y, v) -> np.ndarray:
        ys = self.split(y)
        return self.system.block_value(self.p, t, ys, _as_vector(v, self.control_dim, "control"))

    def last_block_jac(self, t: float, y, v) -> np.ndarray:
        """d f_p / d v, shape m_p x m_{p+1}"""
        ys = self.split(y)
        _, jn = self.system.block_jacobians(self.p, t, ys, _as_vector(v, self.control_dim, "control"))
        return jn

    def jacobians(self, t: float, y, v) -> Tuple[np.ndarray, np.ndarray]:
        """A = d rhs / d y (k x k), B = d rhs / d v (k x m_{p+1})"""
        ys = self.split(y)
        v = _as_vector(v, self.control_dim, "control")
        k = self.state_dim
        A = np.zeros((k, k))
        B = np.zeros((k, self.control_dim))
        offsets = np.concatenate([[0], np.cumsum(self.dims)])
        for i in range(1, self.p + 1):
            rows = slice(offsets[i - 1], offsets[i])
            nxt = ys[i] if i < self.p else v
            jx, jn = self.system.block_jacobians(i, t, ys[:i], nxt)
            A[rows, :offsets[i]] = jx
            if i < self.p:
                A[rows, offsets[i]:offsets[i + 1]] = jn
            else:
                B[rows, :] = jn
        return A, B

    def jac_state(self, t: float, y, v) -> np.ndarray:
        return self.jacobians(t, y, v)[0]

    def jac_control(self, t: float, y, v) -> np.ndarray:
        return self.jacobians(t, y, v)[1]


def eval_rhs(sys: TriangularSystem, t: float, x, u) -> np.ndarray:
    """Stacked block outputs (f_1, ..., f_nu) at (t, x, u)"""
    return sys.rhs(t, x, u)


def validate_system(sys: TriangularSystem, probes: int = VALIDATION_PROBES,
                    seed: int = 0) -> ValidationReport:
    """
    Check the dimension chain and probe every block at random points.

    Never raises; problems come back as report.violations. Surjectivity of
    each block in its next argument and the smoothness order cannot be
    decided from samples and are listed in report.notes.
    """
    report = ValidationReport()
    for i in range(1, sys.nu + 1):
        if sys.dims[i - 1] > sys.dims[i]:
            report.violations.append(f"m_{i} > m_{i + 1} ({sys.dims[i - 1]} > {sys.dims[i]})")

    rng = np.random.default_rng(seed)
    flagged = set()
    for _ in range(probes):
        t = float(rng.uniform(sys.t0, sys.T))
        xs = [rng.normal(scale=VALIDATION_SPREAD, size=m) for m in sys.dims]
        for i in range(1, sys.nu + 1):
            if i in flagged:
                continue
            point = np.concatenate(xs[:i + 1])
            try:
                out = np.atleast_1d(np.asarray(sys.blocks[i - 1](t, *xs[:i], xs[i]), dtype=float)).ravel()
            except Exception as exc:  # user callbacks may raise anything
                report.violations.append(f"block {i} raised {exc!r} at t={t:.6g}, point={point.tolist()}")
                flagged.add(i)
                continue
            if out.size != sys.dims[i - 1]:
                report.violations.append(
                    f"block {i} returned length {out.size}, expected {sys.dims[i - 1]} "
                    f"at t={t:.6g}, point={point.tolist()}")
                flagged.add(i)
            elif not np.all(np.isfinite(out)):
                report.violations.append(
                    f"block {i} returned a non-finite value at t={t:.6g}, point={point.tolist()}")
                flagged.add(i)

    for i in range(1, sys.nu + 1):
        report.notes.append(
            f"unchecked assumption: x_{i + 1} -> f_{i}(t, x_1..x_{i}, x_{i + 1}) is onto R^{sys.dims[i - 1]}")
    report.notes.append("unchecked assumption: block smoothness order m_(i+1) - m_i + 1")

    if report.violations:
        logger.warning(f"{sys.name}: {len(report.violations)} validation violation(s)")
    return report
