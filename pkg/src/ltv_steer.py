"""
tristeer - LTV Steering

Boundary-flat steering controls for linear time-varying systems

    dz/dt = A(t) z + B(t) w,   z(t_a) = 0,   z(t_b) = target,

built from the weighted controllability Gramian on the sample grid.
With the bump weight the controls and their first derivatives vanish at
both ends of the window.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from config import BASIS_ENDPOINT_TOL, GRAMIAN_EIG_MIN, LTV_SUBSTEPS
from errors import DimensionError, GramianSingular
from ode import LtvSystem, rk4_step
from signals import Control

logger = logging.getLogger(__name__)


class BumpWeight:
    """rho(s) = ((s - a)(b - s))^2 scaled to peak 1; flat to first order at a and b"""
    vanishes_at_ends = True

    def samples(self, times: np.ndarray) -> np.ndarray:
        a, b = times[0], times[-1]
        half = 0.5 * (b - a)
        return ((times - a) * (b - times)) ** 2 / half ** 4


class ConstantWeight:
    """rho(s) = value"""
    vanishes_at_ends = False

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def samples(self, times: np.ndarray) -> np.ndarray:
        return np.full(times.shape, self.value)


Weight = Union[BumpWeight, ConstantWeight, np.ndarray, None]


def _weight_samples(ltv: LtvSystem, weight: Weight) -> Tuple[np.ndarray, bool]:
    if weight is None:
        weight = BumpWeight()
    if isinstance(weight, np.ndarray):
        rho = np.asarray(weight, dtype=float)
        if rho.shape != ltv.times.shape or np.any(rho < 0.0):
            raise DimensionError("weight samples must be non-negative on the LTV grid")
        return rho, bool(rho[0] == 0.0 and rho[-1] == 0.0)
    return weight.samples(ltv.times), weight.vanishes_at_ends


def transition_to_end(ltv: LtvSystem, substeps: int = LTV_SUBSTEPS) -> np.ndarray:
    """Phi(t_end, s) at every grid time: d/ds Phi = -Phi A(s), Phi(t_end, t_end) = I"""
    k = ltv.state_dim

    def rhs(s, flat):
        return -(flat.reshape(k, k) @ ltv.a_at(s)).ravel()

    out = np.empty((ltv.times.size, k, k))
    psi = np.eye(k).ravel()
    out[-1] = np.eye(k)
    for n in range(ltv.times.size - 1, 0, -1):
        s, s_prev = ltv.times[n], ltv.times[n - 1]
        h = (s_prev - s) / substeps
        for j in range(substeps):
            psi = rk4_step(rhs, s + j * h, h, psi)
        out[n - 1] = psi.reshape(k, k)
    return out


def gramian(ltv: LtvSystem, weight: Weight = None) -> np.ndarray:
    """W = integral of Phi(t_end, s) B(s) rho(s) B(s)^T Phi(t_end, s)^T ds (Simpson on the grid)"""
    rho, _ = _weight_samples(ltv, weight)
    M = transition_to_end(ltv) @ ltv.B
    integrand = rho[:, None, None] * (M @ np.transpose(M, (0, 2, 1)))
    W = simpson(integrand, x=ltv.times, axis=0)
    return 0.5 * (W + W.T)


def simulate_ltv(ltv: LtvSystem, control: Control, z0: Optional[np.ndarray] = None,
                 substeps: int = LTV_SUBSTEPS) -> np.ndarray:
    """Endpoint of dz/dt = A z + B w from z0 (default 0); fixed RK4, linear in w"""
    k = ltv.state_dim
    z = np.zeros(k) if z0 is None else np.asarray(z0, dtype=float).copy()
    times = ltv.times
    fine = np.concatenate([np.linspace(times[n], times[n + 1], substeps + 1)[:-1]
                           for n in range(times.size - 1)] + [times[-1:]])
    mids = 0.5 * (fine[:-1] + fine[1:])
    w_fine = control.values(fine)
    w_mid = control.values(mids)
    for j in range(fine.size - 1):
        t, h = fine[j], fine[j + 1] - fine[j]
        table = {t: w_fine[j], t + 0.5 * h: w_mid[j], t + h: w_fine[j + 1]}

        def rhs(s, zz, table=table):
            return ltv.a_at(s) @ zz + ltv.b_at(s) @ table[s]
        z = rk4_step(rhs, t, h, z)
    return z


def _fit_control(times: np.ndarray, samples: np.ndarray, flat_ends: bool) -> Control:
    slopes = CubicSpline(times, samples, axis=0)(times, 1)
    values = samples.copy()
    if flat_ends:
        values[0] = values[-1] = 0.0
        slopes[0] = slopes[-1] = 0.0
    return Control.hermite(times, values, slopes)


@dataclass
class SteeringBasis:
    """Controls w_j steering 0 to e_j on [t_a, t_b]"""
    interval: Tuple[float, float]
    controls: List[Control]
    endpoint_errors: List[float]
    gramian_min_eig: float
    gramian: np.ndarray

    @property
    def size(self) -> int:
        return len(self.controls)

    def combine(self, coeffs: Sequence[float]) -> Control:
        """sum_j coeffs[j] * w_j"""
        coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if coeffs.size != self.size:
            raise DimensionError(f"{coeffs.size} coefficients for a basis of {self.size}")
        return Control.linear_combination(self.controls, coeffs)


def basis(ltv: LtvSystem, weight: Weight = None) -> SteeringBasis:
    """
    One steering control per unit target.

    Raw Gramian controls rho B^T Phi^T c_i are fitted to C1 cubics, then
    recombined through the inverse of their simulated endpoint matrix so
    that each w_j hits e_j under simulate_ltv up to round-off. Raises
    GramianSingular when a w_j still misses by more than BASIS_ENDPOINT_TOL.
    """
    rho, flat = _weight_samples(ltv, weight)
    W = gramian(ltv, rho)
    min_eig = float(np.linalg.eigvalsh(W).min())
    if min_eig < GRAMIAN_EIG_MIN:
        raise GramianSingular(f"weighted Gramian is singular on [{ltv.times[0]:.6g}, {ltv.times[-1]:.6g}]",
                              min_eig=min_eig)

    M = transition_to_end(ltv) @ ltv.B          # (N, k, m)
    k = ltv.state_dim
    raw = [_fit_control(ltv.times, rho[:, None] * M[:, i, :], flat) for i in range(k)]
    E = np.column_stack([simulate_ltv(ltv, w) for w in raw])
    try:
        C = np.linalg.solve(E, np.eye(k))
    except np.linalg.LinAlgError:
        raise GramianSingular("simulated endpoint matrix is singular", min_eig=min_eig) from None

    controls = [Control.linear_combination(raw, C[:, j]) for j in range(k)]
    errors = [float(np.linalg.norm(simulate_ltv(ltv, w) - np.eye(k)[j])) for j, w in enumerate(controls)]
    if max(errors) > BASIS_ENDPOINT_TOL:
        raise GramianSingular(f"steering basis misses its unit targets by {max(errors):.3g}",
                              min_eig=min_eig, endpoint_error=max(errors))
    logger.debug(f"steering basis on [{ltv.times[0]:.6g}, {ltv.times[-1]:.6g}], min eig {min_eig:.3g}")
    return SteeringBasis((float(ltv.times[0]), float(ltv.times[-1])), controls, errors, min_eig, W)


def steer(ltv: LtvSystem, target, weight: Weight = None) -> Control:
    """Control steering 0 to target; raises GramianSingular if uncontrollable on the window"""
    target = np.atleast_1d(np.asarray(target, dtype=float))
    if target.size != ltv.state_dim:
        raise DimensionError(f"target has length {target.size}, expected {ltv.state_dim}")
    return basis(ltv, weight).combine(target)


def main():
    """Gramian and steering basis of the double integrator on [0, 1]"""
    logging.basicConfig(level=logging.INFO)
    grid = np.linspace(0.0, 1.0, 65)
    ltv = LtvSystem(grid, np.tile([[0.0, 1.0], [0.0, 0.0]], (65, 1, 1)), np.tile([[0.0], [1.0]], (65, 1, 1)))
    print("=" * 60)
    print("Double integrator")
    print("=" * 60)
    print(f"W (rho = 1):\n{gramian(ltv, ConstantWeight())}")
    b = basis(ltv)
    print(f"bump-weighted basis: min eig {b.gramian_min_eig:.4g}, endpoint errors {b.endpoint_errors}")


if __name__ == "__main__":
    main()
