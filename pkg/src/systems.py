"""
tristeer - System Registry

Built-in triangular systems and loading of JSON system configs written
in the expression DSL.

Config format:
    {"name": "...", "dims": [m_1, ..., m_{nu+1}], "t0": 0, "T": 1,
     "blocks": [["expr for f_1 coord 1", ...], ..., ["expr for f_nu ...", ...]],
     "t1": 0.5, "x1_star": [...], "anchor_hints": [[[...], ...], ...]}

Variables are t, x1..xn (global state numbering) and u1..um. Block i may
read x coordinates of blocks 1..i+1; only the last block reads u.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from errors import ConfigError
from expr import ParseError, compile_expr, free_variables, parse_expr
from sysmodel import TriangularSystem

logger = logging.getLogger(__name__)


@dataclass
class SystemEntry:
    """A system plus the anchor defaults that make its plans reproducible"""
    system: TriangularSystem
    x1_star: np.ndarray
    default_t1: float
    anchor_hints: Optional[List[List[np.ndarray]]] = None
    description: str = ""


@dataclass
class SystemConfig:
    """System definition as read from a config file"""
    name: str
    dims: List[int]
    blocks: List[List[str]]
    t0: float = 0.0
    T: float = 1.0
    t1: Optional[float] = None
    x1_star: Optional[List[float]] = None
    anchor_hints: Optional[List[List[List[float]]]] = None

    @classmethod
    def from_dict(cls, data: Dict) -> "SystemConfig":
        try:
            blocks = [[b] if isinstance(b, str) else list(b) for b in data["blocks"]]
            return cls(name=str(data.get("name", "custom")), dims=[int(m) for m in data["dims"]],
                       blocks=blocks, t0=float(data.get("t0", 0.0)), T=float(data.get("T", 1.0)),
                       t1=None if data.get("t1") is None else float(data["t1"]),
                       x1_star=data.get("x1_star"), anchor_hints=data.get("anchor_hints"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed system config: {exc}") from exc

    def variables_for_block(self, i: int) -> List[str]:
        """Names block i (1-based) may reference"""
        nu = len(self.dims) - 1
        upto = sum(self.dims[:i + 1]) if i < nu else sum(self.dims[:nu])
        names = ["t"] + [f"x{j}" for j in range(1, upto + 1)]
        if i == nu:
            names += [f"u{j}" for j in range(1, self.dims[-1] + 1)]
        return names

    def build(self) -> TriangularSystem:
        nu = len(self.dims) - 1
        if nu < 1 or any(m <= 0 for m in self.dims):
            raise ConfigError(f"dims must list at least two positive sizes, got {self.dims}")
        if len(self.blocks) != nu:
            raise ConfigError(f"{len(self.blocks)} blocks given for {nu} state blocks")
        for i in range(1, nu):
            if self.dims[i - 1] > self.dims[i]:
                raise ConfigError(f"dimension chain broken: m_{i} > m_{i + 1}")

        n = sum(self.dims[:nu])
        functions = []
        for i, exprs in enumerate(self.blocks, start=1):
            if len(exprs) != self.dims[i - 1]:
                raise ConfigError(f"block {i} has {len(exprs)} expressions, expected {self.dims[i - 1]}")
            allowed = self.variables_for_block(i)
            compiled = []
            for src in exprs:
                try:
                    node = parse_expr(src, variables=allowed)
                except ParseError as exc:
                    raise exc.with_context(block=i, source=src)
                compiled.append(compile_expr(node))
            functions.append(_make_block(compiled, i, nu, self.dims, n))
        return TriangularSystem(dims=tuple(self.dims), blocks=tuple(functions), t0=self.t0, T=self.T,
                                name=self.name)

    def entry(self) -> SystemEntry:
        system = self.build()
        hints = None
        if self.anchor_hints is not None:
            hints = [[np.atleast_1d(np.asarray(c, dtype=float)) for c in block] for block in self.anchor_hints]
        x1 = np.zeros(self.dims[0]) if self.x1_star is None else np.asarray(self.x1_star, dtype=float)
        t1 = 0.5 * (self.t0 + self.T) if self.t1 is None else self.t1
        return SystemEntry(system, x1, t1, hints, description=f"config {self.name}")


def _make_block(compiled, i: int, nu: int, dims: Sequence[int], n: int):
    names: List[str] = []
    for b in range(i + 1):
        if b < nu:
            start = sum(dims[:b])
            names += [f"x{start + j + 1}" for j in range(dims[b])]
        else:
            names += [f"u{j + 1}" for j in range(dims[b])]

    def block(t, *xs):
        env = {"t": float(t)}
        env.update(zip(names, np.concatenate([np.atleast_1d(x) for x in xs]).tolist()))
        return np.array([fn(env) for fn in compiled], dtype=float)
    return block


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read system config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"system config {path} is not valid JSON: {exc}") from exc
    return SystemConfig.from_dict(data)


# =============================================================================
# Built-in systems
# =============================================================================

def g_poly(y: float) -> float:
    """0 for y <= 2, (y-2)^2 sin(y-2) beyond"""
    if y <= 2.0:
        return 0.0
    r = y - 2.0
    return r * r * math.sin(r)


def g_poly_prime(y: float) -> float:
    if y <= 2.0:
        return 0.0
    r = y - 2.0
    return 2.0 * r * math.sin(r) + r * r * math.cos(r)


def g_log(y: float) -> float:
    """0 for y <= 2, ln^2(y-1) sin(ln(y-1)) beyond"""
    if y <= 2.0:
        return 0.0
    L = math.log(y - 1.0)
    return L * L * math.sin(L)


def g_log_prime(y: float) -> float:
    if y <= 2.0:
        return 0.0
    L = math.log(y - 1.0)
    return (2.0 * L * math.sin(L) + L * L * math.cos(L)) / (y - 1.0)


def _example11(name: str, g, g_prime, description: str) -> SystemEntry:
    system = TriangularSystem(
        dims=(1, 1, 1),
        blocks=(
            lambda t, x1, x2: np.array([g(float(x2[0]))]),
            lambda t, x1, x2, u: np.array([float(u[0])]),
        ),
        t0=0.0,
        T=1.0,
        jac_x=(
            lambda t, x1, x2: np.zeros((1, 1)),
            lambda t, x1, x2, u: np.zeros((1, 2)),
        ),
        jac_next=(
            lambda t, x1, x2: np.array([[g_prime(float(x2[0]))]]),
            lambda t, x1, x2, u: np.ones((1, 1)),
        ),
        name=name,
    )
    return SystemEntry(system, np.zeros(1), 0.5, [[np.array([3.0])], [np.array([0.0])]], description)


def _dblint() -> SystemEntry:
    system = TriangularSystem(
        dims=(1, 1, 1),
        blocks=(
            lambda t, x1, x2: np.array([float(x2[0])]),
            lambda t, x1, x2, u: np.array([float(u[0])]),
        ),
        jac_x=(
            lambda t, x1, x2: np.zeros((1, 1)),
            lambda t, x1, x2, u: np.zeros((1, 2)),
        ),
        jac_next=(
            lambda t, x1, x2: np.ones((1, 1)),
            lambda t, x1, x2, u: np.ones((1, 1)),
        ),
        name="dblint",
    )
    return SystemEntry(system, np.zeros(1), 0.5, [[np.array([0.0])], [np.array([0.0])]],
                       "double integrator x1' = x2, x2' = u")


def _chain3() -> SystemEntry:
    system = TriangularSystem(
        dims=(1, 1, 2),
        blocks=(
            lambda t, x1, x2: np.array([x2[0] - 0.5 * math.sin(x1[0])]),
            lambda t, x1, x2, u: np.array([u[0] ** 3 + u[1] * math.cos(x1[0])]),
        ),
        jac_x=(
            lambda t, x1, x2: np.array([[-0.5 * math.cos(x1[0])]]),
            lambda t, x1, x2, u: np.array([[-u[1] * math.sin(x1[0]), 0.0]]),
        ),
        jac_next=(
            lambda t, x1, x2: np.ones((1, 1)),
            lambda t, x1, x2, u: np.array([[3.0 * u[0] ** 2, math.cos(x1[0])]]),
        ),
        name="chain3",
    )
    return SystemEntry(system, np.zeros(1), 0.5, [[np.array([0.0])], [np.array([0.0, 0.0])]],
                       "x1' = x2 - sin(x1)/2, x2' = u1^3 + u2 cos(x1)")


_BUILTINS = {
    "example11": lambda: _example11("example11", g_poly, g_poly_prime,
                                    "x1' = g(x2), x2' = u with g flat for x2 <= 2"),
    "example11-log": lambda: _example11("example11-log", g_log, g_log_prime,
                                        "x1' = g(x2), x2' = u with logarithmic g"),
    "dblint": _dblint,
    "chain3": _chain3,
}


def builtin_names() -> List[str]:
    return sorted(_BUILTINS)


def get_builtin(name: str) -> SystemEntry:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ConfigError(f"unknown system {name!r}; built-ins: {', '.join(builtin_names())}") from None


def load_system(spec: str) -> SystemEntry:
    """Built-in name or path to a JSON config"""
    if spec in _BUILTINS:
        return get_builtin(spec)
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        entry = load_config(path).entry()
        logger.info(f"loaded system {entry.system.name} from {path}")
        return entry
    raise ConfigError(f"unknown system {spec!r}; built-ins: {', '.join(builtin_names())}")
