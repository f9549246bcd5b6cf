"""
tristeer - Regular Chain Search

Finds an anchor (t1, x*, z*, u*) at which every block Jacobian
d f_i / d x_{i+1} has full row rank, and implements the local implicit
inverse phi of a block: f_p(t, y, phi(t, y, z)) = z, with the coordinates
outside the selected columns pinned to the anchor.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import qr

from config import (
    ANCHOR_ATTEMPTS,
    ANCHOR_CHAIN_TOL,
    ANCHOR_SAMPLES_PER_RADIUS,
    LINE_SEARCH_HALVINGS,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    RANK_MARGIN_MIN,
    SINGULAR_VALUE_COLLAPSE,
    TRUST_RADIUS,
)
from errors import AnchorNotFound, ConfigError, DimensionError, RegularityLost
from sysmodel import StageSystem, TriangularSystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RegularChain:
    """
    Anchor data. x_star and z_star hold nu + 1 blocks each; the last
    x block is u*, the last z block is the free derivative pin for u.
    column_selections[i-1] are the 0-based columns of d f_i / d x_{i+1}
    forming the certified square minor.
    """
    t1: float
    x_star: Tuple[np.ndarray, ...]
    z_star: Tuple[np.ndarray, ...]
    column_selections: Tuple[Tuple[int, ...], ...]
    rank_margins: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x_star", tuple(np.atleast_1d(np.asarray(b, dtype=float)) for b in self.x_star))
        object.__setattr__(self, "z_star", tuple(np.atleast_1d(np.asarray(b, dtype=float)) for b in self.z_star))
        object.__setattr__(self, "column_selections", tuple(tuple(int(j) for j in s) for s in self.column_selections))
        object.__setattr__(self, "rank_margins", tuple(float(m) for m in self.rank_margins))
        if len(self.z_star) != len(self.x_star) or len(self.column_selections) != len(self.x_star) - 1:
            raise DimensionError("anchor blocks are inconsistent")

    @property
    def nu(self) -> int:
        return len(self.column_selections)

    @property
    def u_star(self) -> np.ndarray:
        return self.x_star[-1].copy()

    def y_star(self, p: int) -> np.ndarray:
        """Stage state (x_1*, ..., x_p*)"""
        return np.concatenate(self.x_star[:p])

    def state(self) -> np.ndarray:
        return self.y_star(self.nu)

    def verify(self, sys: TriangularSystem, tol: float = ANCHOR_CHAIN_TOL) -> List[str]:
        """Re-check the chain equations and margins against sys"""
        issues = []
        for i in range(1, self.nu + 1):
            f = sys.block_value(i, self.t1, self.x_star[:i], self.x_star[i])
            if np.max(np.abs(f - self.z_star[i - 1])) > tol:
                issues.append(f"z_{i}* does not match f_{i} at the anchor")
            margin, _ = _minor_margin(sys.stage(i), self.t1, self.y_star(i), self.x_star[i],
                                      self.column_selections[i - 1])
            if margin < RANK_MARGIN_MIN:
                issues.append(f"block {i} minor has margin {margin:.3g}")
        return issues

    def mirrored(self) -> "RegularChain":
        """Anchor of the mirrored system: same point, derivatives negated"""
        return RegularChain(self.t1, self.x_star, tuple(-z for z in self.z_star),
                            self.column_selections, self.rank_margins)

    def to_dict(self) -> Dict:
        return {
            "t1": self.t1,
            "x_star": [b.tolist() for b in self.x_star],
            "z_star": [b.tolist() for b in self.z_star],
            "column_selections": [list(s) for s in self.column_selections],
            "rank_margins": list(self.rank_margins),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "RegularChain":
        try:
            return cls(float(data["t1"]), tuple(data["x_star"]), tuple(data["z_star"]),
                       tuple(data["column_selections"]), tuple(data["rank_margins"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed anchor record: {exc}") from exc


def _select_columns(jac: np.ndarray) -> Tuple[float, Tuple[int, ...]]:
    """Greedy QR column pivoting, then smallest singular value of the minor"""
    m_i, m_next = jac.shape
    if not np.all(np.isfinite(jac)):
        return 0.0, tuple(range(m_i))
    if m_i == m_next:
        sel = tuple(range(m_i))
    else:
        _, _, piv = qr(jac, mode="economic", pivoting=True)
        sel = tuple(sorted(int(j) for j in piv[:m_i]))
    margin = float(np.linalg.svd(jac[:, list(sel)], compute_uv=False).min())
    return margin, sel


def _minor_margin(stage: StageSystem, t: float, y: np.ndarray, v: np.ndarray,
                  sel: Tuple[int, ...]) -> Tuple[float, Tuple[int, ...]]:
    jac = stage.last_block_jac(t, y, v)
    return float(np.linalg.svd(jac[:, list(sel)], compute_uv=False).min()), sel


def find_regular_chain(sys: TriangularSystem, t1: float, x1_star, seed: int = 0,
                       attempts: int = ANCHOR_ATTEMPTS,
                       hints: Optional[Sequence[Sequence[np.ndarray]]] = None) -> RegularChain:
    """
    Build the anchor block by block.

    For block i the next block x_{i+1}* is drawn first from hints[i-1],
    then from Gaussian balls of radius 2^a (ANCHOR_SAMPLES_PER_RADIUS per
    radius) until the best column selection of d f_i / d x_{i+1} has
    smallest singular value >= RANK_MARGIN_MIN.
    """
    if not sys.t0 < t1 < sys.T:
        raise ConfigError(f"anchor time {t1} must lie inside ({sys.t0}, {sys.T})")
    rng = np.random.default_rng(seed)
    xs = [np.atleast_1d(np.asarray(x1_star, dtype=float))]
    if xs[0].size != sys.dims[0]:
        raise DimensionError(f"x1* has length {xs[0].size}, expected {sys.dims[0]}")
    selections: List[Tuple[int, ...]] = []
    margins: List[float] = []

    for i in range(1, sys.nu + 1):
        stage = sys.stage(i)
        y = np.concatenate(xs)
        m_next = sys.dims[i]

        def score(cand: np.ndarray) -> Tuple[float, Tuple[int, ...]]:
            try:
                return _select_columns(stage.last_block_jac(t1, y, cand))
            except (FloatingPointError, ValueError, np.linalg.LinAlgError):
                return 0.0, tuple(range(sys.dims[i - 1]))

        best = (-1.0, None, ())
        block_hints = hints[i - 1] if hints is not None and i - 1 < len(hints) else ()
        for cand in block_hints:
            cand = np.atleast_1d(np.asarray(cand, dtype=float))
            margin, sel = score(cand)
            if margin > best[0]:
                best = (margin, cand, sel)

        if best[0] < RANK_MARGIN_MIN:
            for a in range(attempts):
                radius = 2.0 ** a
                for cand in rng.normal(scale=radius, size=(ANCHOR_SAMPLES_PER_RADIUS, m_next)):
                    margin, sel = score(cand)
                    if margin > best[0]:
                        best = (margin, cand, sel)
                if best[0] >= RANK_MARGIN_MIN:
                    logger.debug(f"block {i}: regular point at radius {radius:g}, margin {best[0]:.4g}")
                    break

        if best[0] < RANK_MARGIN_MIN:
            raise AnchorNotFound(f"no regular point for block {i}", best_margin=max(best[0], 0.0), block=i)
        xs.append(best[1])
        selections.append(best[2])
        margins.append(best[0])

    z = [sys.block_value(i, t1, xs[:i], xs[i]) for i in range(1, sys.nu + 1)]
    z.append(np.zeros(sys.control_dim))
    chain = RegularChain(t1, tuple(xs), tuple(z), tuple(selections), tuple(margins))
    logger.info(f"{sys.name}: anchor at t1={t1:g}, margins {[round(m, 6) for m in margins]}")
    return chain


@dataclass(frozen=True)
class ImplicitSolver:
    """Damped Newton right-inverse of the last block of a stage"""
    stage: StageSystem
    anchor: RegularChain
    newton_tol: float = NEWTON_TOL
    max_iter: int = NEWTON_MAX_ITER
    trust_radius: float = TRUST_RADIUS

    def __post_init__(self):
        if not self.newton_tol > 0:
            raise ConfigError("newton_tol must be positive")

    @classmethod
    def for_stage(cls, sys: TriangularSystem, anchor: RegularChain, p: int, **kwargs) -> "ImplicitSolver":
        return cls(sys.stage(p), anchor, **kwargs)

    @property
    def selection(self) -> List[int]:
        return list(self.anchor.column_selections[self.stage.p - 1])

    @property
    def pinned(self) -> np.ndarray:
        return self.anchor.x_star[self.stage.p].copy()

    def __call__(self, t: float, y, z_p, v_init=None) -> np.ndarray:
        return phi(self, t, y, z_p, v_init)


def phi(solver: ImplicitSolver, t: float, y, z_p, v_init=None) -> np.ndarray:
    """
    v with |f_p(t, y, v) - z_p| <= newton_tol; only the selected columns
    move away from x_{p+1}*. Raises RegularityLost on stagnation or when
    the selected minor's smallest singular value drops below 1e-8.

    Steps are capped at a trust radius that doubles after every accepted
    full capped step and falls back toward trust_radius after a damped one.
    """
    stage = solver.stage
    sel = solver.selection
    y = np.asarray(y, dtype=float)
    z_p = np.atleast_1d(np.asarray(z_p, dtype=float))
    v = solver.pinned
    if v_init is not None:
        v[sel] = np.atleast_1d(np.asarray(v_init, dtype=float))[sel]

    residual = stage.last_block(t, y, v) - z_p
    r = float(np.linalg.norm(residual))
    if r <= solver.newton_tol:
        return v

    radius = solver.trust_radius
    for it in range(solver.max_iter):
        jac = stage.last_block_jac(t, y, v)[:, sel]
        if not np.all(np.isfinite(jac)):
            raise RegularityLost("non-finite Jacobian", t=t, y=y, z=z_p)
        smin = float(np.linalg.svd(jac, compute_uv=False).min())
        if smin < SINGULAR_VALUE_COLLAPSE:
            raise RegularityLost(f"selected minor collapsed (sigma_min={smin:.3g})", t=t, y=y, z=z_p)
        step = -np.linalg.solve(jac, residual)
        norm = float(np.linalg.norm(step))
        capped = norm > radius
        if capped:
            step *= radius / norm

        alpha = 1.0
        for _ in range(LINE_SEARCH_HALVINGS):
            trial = v.copy()
            trial[sel] += alpha * step
            trial_res = stage.last_block(t, y, trial) - z_p
            trial_r = float(np.linalg.norm(trial_res))
            if trial_r < r:
                v, residual, r = trial, trial_res, trial_r
                break
            alpha *= 0.5
        else:
            raise RegularityLost(f"Newton stagnated at residual {r:.3g}", t=t, y=y, z=z_p)
        if capped and alpha == 1.0:
            radius *= 2.0
        elif alpha < 1.0:
            radius = max(solver.trust_radius, 0.5 * radius)

        if r <= solver.newton_tol:
            logger.debug(f"phi converged in {it + 1} iterations (t={t:.6g})")
            return v

    raise RegularityLost(f"Newton did not converge, residual {r:.3g}", t=t, y=y, z=z_p)


def main():
    """Print the anchors of the built-in systems"""
    from systems import builtin_names, get_builtin

    logging.basicConfig(level=logging.INFO)
    print("=" * 60)
    print("Regular chain anchors")
    print("=" * 60)
    for name in builtin_names():
        entry = get_builtin(name)
        sys = entry.system
        chain = find_regular_chain(sys, entry.default_t1, entry.x1_star, hints=entry.anchor_hints)
        print(f"\n{name}: t1={chain.t1:g}")
        for i, (x, z) in enumerate(zip(chain.x_star, chain.z_star), start=1):
            print(f"  x_{i}* = {x.tolist()}   z_{i}* = {z.tolist()}")
        print(f"  columns = {chain.column_selections}  margins = {chain.rank_margins}")


if __name__ == "__main__":
    main()
