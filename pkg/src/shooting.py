"""
tristeer - Stage Shooting and Planning

Stage induction on [t1, T]. For a target xi of stage p:

    1. family member y(xi, .) from the anchor to xi, with its rate
    2. window length sigma where phi and the linearization behave
    3. reference segment u_delta1 on [t1, t1 + sigma] through phi, pinned
       to the anchor at t1
    4. steering basis of the linearization along u_delta1
    5. tracker + smoother on [t1 + sigma, T], pinned to u_delta1 at
       t1 + sigma and to beta at T
    6. lambda correction so the forward and backward halves meet

The control of stage p is the state of stage p + 1, which gives the next
family (ExtendedFamily). Planner runs the chain forward from the anchor
and on the mirrored system backward from it.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import (
    BUDGET_FRACTION,
    BUDGET_HALVINGS,
    DELTA1_FRACTION,
    DELTA_HALVINGS,
    DELTA_START,
    DEFAULT_SEED,
    EPS1_MAX,
    EPS1_MIN,
    EPS1_START,
    EPS2_RATIO,
    FAMILY_SAMPLE_INTERVALS,
    FIXED_POINT_ITERS,
    GRAMIAN_EIG_MIN,
    LAMBDA_FD_STEP,
    LINE_SEARCH_HALVINGS,
    LTV_GRID_INTERVALS,
    PLAN_TOL,
    RHO,
    SHOOT_NEWTON_ITERS,
    SHOOT_TOL,
    SIGMA_MAX_LEVEL,
    SIGMA_PROBES,
    SIGMA_RETRIES,
    STAGE_ENDPOINT_TOL,
)
from errors import (
    AnchorUnusable,
    BlownUpError,
    ConfigError,
    DefectUnsatisfiable,
    DimensionError,
    GramianSingular,
    PlannerError,
    RegularityLost,
    ShootingFailed,
    SmoothingFailed,
)
from ltv_steer import SteeringBasis, basis, gramian
from ode import IntegratorConfig, LtvSystem, endpoint, linearize_along, simulate
from regpoint import ImplicitSolver, RegularChain, phi
from signals import Control, Trajectory
from smoother import SmoothingMode, SmoothingSpec, smooth_control, smooth_family_segment
from sysmodel import StageSystem, TriangularSystem, validate_system
from tracker import FamilyMember, ReferenceRun, ToleranceProfile, build_reference

logger = logging.getLogger(__name__)

RETRYABLE = (RegularityLost, GramianSingular, DefectUnsatisfiable, SmoothingFailed, ShootingFailed, BlownUpError)


class FamilyShape(Enum):
    """Time profile of the first-stage family"""
    QUADRATIC = "quadratic"
    TERMINAL_RATE = "terminal-rate"


# =============================================================================
# Families
# =============================================================================

class BaseFamily:
    """
    Stage-1 paths from x_1* at t1 to xi at T.

    QUADRATIC:     x_1* + (t - t1) z_1* + ((t - t1) / (T - t1))^2 (xi - x_1* - (T - t1) z_1*)
    TERMINAL_RATE: cubic Hermite with the same start and d/dt y(T) = end_rate;
                   quadratic when no end rate is given
    """

    def __init__(self, anchor: RegularChain, T: float, shape: FamilyShape = FamilyShape.QUADRATIC):
        if not T > anchor.t1:
            raise ConfigError(f"horizon end {T} must follow the anchor time {anchor.t1}")
        self.anchor = anchor
        self.t1 = anchor.t1
        self.T = float(T)
        self.shape = shape
        self.x_star = anchor.x_star[0]
        self.z_star = anchor.z_star[0]

    @property
    def state_dim(self) -> int:
        return self.x_star.size

    def member(self, xi, end_rate=None) -> FamilyMember:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.size != self.state_dim:
            raise DimensionError(f"xi has length {xi.size}, expected {self.state_dim}")
        t1, H = self.t1, self.T - self.t1
        x0, z0 = self.x_star, self.z_star

        if self.shape is FamilyShape.TERMINAL_RATE and end_rate is not None:
            r = np.atleast_1d(np.asarray(end_rate, dtype=float))

            def state(t):
                s = (t - t1) / H
                return ((2 * s ** 3 - 3 * s ** 2 + 1) * x0 + (s ** 3 - 2 * s ** 2 + s) * H * z0
                        + (-2 * s ** 3 + 3 * s ** 2) * xi + (s ** 3 - s ** 2) * H * r)

            def rate(t):
                s = (t - t1) / H
                return (((6 * s ** 2 - 6 * s) * x0 + (-6 * s ** 2 + 6 * s) * xi) / H
                        + (3 * s ** 2 - 4 * s + 1) * z0 + (3 * s ** 2 - 2 * s) * r)
        else:
            c = xi - x0 - H * z0

            def state(t):
                return x0 + (t - t1) * z0 + ((t - t1) / H) ** 2 * c

            def rate(t):
                return z0 + 2.0 * (t - t1) / H ** 2 * c

        return FamilyMember(xi.copy(), t1, self.T, state, rate)


def base_family(anchor: RegularChain, T: float, shape: FamilyShape = FamilyShape.QUADRATIC) -> BaseFamily:
    return BaseFamily(anchor, T, shape)


class ExtendedFamily:
    """Family of stage p + 1: (trajectory, control) pairs of stage p"""

    def __init__(self, prev: "StagePlan"):
        self.prev = prev
        self.t1 = prev.t1
        self.T = prev.T
        self.shape = prev.family.shape

    @property
    def state_dim(self) -> int:
        return self.prev.stage.state_dim + self.prev.stage.control_dim

    def member(self, xi, end_rate=None) -> FamilyMember:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.size != self.state_dim:
            raise DimensionError(f"xi has length {xi.size}, expected {self.state_dim}")
        k = self.prev.stage.state_dim
        outcome = self.prev.control_for(xi[:k], xi[k:], end_rate)
        traj, ctl = outcome.trajectory, outcome.control

        def state(t):
            return np.concatenate([traj.at(t), ctl.value(t)])

        def rate(t):
            return ctl.derivative(t)
        return FamilyMember(xi.copy(), self.t1, self.T, state, rate, source=outcome)


# =============================================================================
# Shooting map
# =============================================================================

@dataclass
class ShotReport:
    lambda_star: np.ndarray
    iterations: int
    jacobian_dist_to_identity: float
    endpoint_error: float
    method: str = "none"
    trace: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {"lambda_star": self.lambda_star.tolist(), "iterations": self.iterations,
                "jacobian_dist_to_identity": self.jacobian_dist_to_identity,
                "endpoint_error": self.endpoint_error, "method": self.method}


@dataclass(eq=False)
class ShootingMap:
    """lambda -> state at t_end under u_delta1 + sum_j lambda_j w_j, started from y* at t1"""
    stage: StageSystem
    y_star: np.ndarray
    t1: float
    t_end: float
    u_delta1: Control
    basis: SteeringBasis
    cfg: IntegratorConfig = field(default_factory=IntegratorConfig)

    @property
    def dim(self) -> int:
        return self.basis.size

    def control(self, lam) -> Control:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if not np.any(lam):
            return self.u_delta1
        return Control.linear_combination([self.u_delta1] + list(self.basis.controls), np.concatenate([[1.0], lam]))

    def phi_hat(self, lam) -> np.ndarray:
        return endpoint(self.stage, self.t1, self.t_end, self.y_star, self.control(lam), self.cfg)

    def jacobian(self, lam, step: float = LAMBDA_FD_STEP) -> np.ndarray:
        """Central differences of phi_hat"""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        cols = []
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = step
            cols.append((self.phi_hat(lam + e) - self.phi_hat(lam - e)) / (2.0 * step))
        return np.column_stack(cols)


def calibrate_eps1(smap: ShootingMap, phi0: Optional[np.ndarray] = None) -> float:
    """
    Largest eps on the doubling grid EPS1_START * 2^j (<= EPS1_MAX) whose
    secants (phi_hat(eps d) - phi_hat(0)) / eps stay within RHO of d for
    d = +-e_j; halves below EPS1_START when even that fails.
    """
    phi0 = smap.phi_hat(np.zeros(smap.dim)) if phi0 is None else phi0

    def drift(eps: float) -> float:
        worst = 0.0
        for j in range(smap.dim):
            for sign in (1.0, -1.0):
                d = np.zeros(smap.dim)
                d[j] = sign
                try:
                    secant = (smap.phi_hat(eps * d) - phi0) / eps
                except BlownUpError:
                    return np.inf
                worst = max(worst, float(np.linalg.norm(secant - d)))
        return worst

    eps = EPS1_START
    if drift(eps) >= RHO:
        while eps > EPS1_MIN:
            eps *= 0.5
            if drift(eps) < RHO:
                return eps
        raise ShootingFailed(f"shooting map is not near-identity even at lambda radius {EPS1_MIN:g}")
    while 2.0 * eps <= EPS1_MAX and drift(2.0 * eps) < RHO:
        eps *= 2.0
    return eps


def solve_lambda(smap: ShootingMap, target, eps1: float) -> ShotReport:
    """
    lambda* with phi_hat(lambda*) = target and |lambda*| < eps1.

    Fixed-point iteration lambda <- lambda - (phi_hat(lambda) - target)
    first, then damped Newton on a finite-difference Jacobian.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    lam = np.zeros(smap.dim)

    def evaluate(point: np.ndarray) -> np.ndarray:
        try:
            return smap.phi_hat(point)
        except BlownUpError as exc:
            raise ShootingFailed("shooting trajectory blew up", trace=trace, lam=point) from exc

    trace: List[float] = []
    value = evaluate(lam)
    err = float(np.linalg.norm(value - target))
    trace.append(err)
    iterations = 0
    method = "none"

    for _ in range(FIXED_POINT_ITERS):
        if err <= SHOOT_TOL:
            break
        trial = lam - (value - target)
        if np.linalg.norm(trial) >= eps1:
            logger.debug("fixed-point step left the lambda ball; switching to Newton")
            break
        trial_value = evaluate(trial)
        trial_err = float(np.linalg.norm(trial_value - target))
        if trial_err >= err:
            break
        lam, value, err = trial, trial_value, trial_err
        iterations += 1
        method = "fixed-point"
        trace.append(err)

    for _ in range(SHOOT_NEWTON_ITERS):
        if err <= SHOOT_TOL:
            break
        try:
            step = np.linalg.solve(smap.jacobian(lam), value - target)
        except np.linalg.LinAlgError as exc:
            raise ShootingFailed("singular shooting Jacobian", trace=trace) from exc
        alpha = 1.0
        for _ in range(LINE_SEARCH_HALVINGS):
            trial = lam - alpha * step
            if np.linalg.norm(trial) < eps1:
                trial_value = evaluate(trial)
                trial_err = float(np.linalg.norm(trial_value - target))
                if trial_err < err:
                    lam, value, err = trial, trial_value, trial_err
                    break
            alpha *= 0.5
        else:
            raise ShootingFailed(f"Newton stagnated at {err:.3g}", trace=trace, eps1=eps1)
        iterations += 1
        method = "newton"
        trace.append(err)

    if err > SHOOT_TOL:
        raise ShootingFailed(f"shooting did not converge, error {err:.3g}", trace=trace, eps1=eps1)
    dist = float(np.linalg.norm(smap.jacobian(lam) - np.eye(smap.dim), 2))
    if dist >= 2.0 * RHO:
        raise ShootingFailed(f"Jacobian is {dist:.3g} from the identity at lambda*", trace=trace)
    logger.debug(f"lambda* = {lam} after {iterations} {method} iterations, error {err:.3g}")
    return ShotReport(lam, iterations, dist, err, method, trace)


# =============================================================================
# Sigma selection
# =============================================================================

def _phi_chain(solver: ImplicitSolver, member: FamilyMember, times: np.ndarray) -> np.ndarray:
    """phi along (t, y(xi, t), rate(t)), each solve warm-started from the previous"""
    v = solver.pinned
    out = []
    for t in times:
        v = phi(solver, t, member.state(t), member.rate(t), v_init=v)
        out.append(v)
    return np.array(out)


def _sigma_ok(solver: ImplicitSolver, member: FamilyMember, sigma: float) -> bool:
    t1 = member.t1
    try:
        _phi_chain(solver, member, np.linspace(t1, t1 + sigma, SIGMA_PROBES))
        grid = np.linspace(t1, t1 + sigma, LTV_GRID_INTERVALS + 1)
        controls = _phi_chain(solver, member, grid)
        ltv = LtvSystem.from_samples(solver.stage, grid, [member.state(t) for t in grid], controls)
    except (RegularityLost, DimensionError) as exc:
        logger.debug(f"sigma={sigma:.3g} rejected: {exc.message}")
        return False
    min_eig = float(np.linalg.eigvalsh(gramian(ltv)).min())
    if min_eig < GRAMIAN_EIG_MIN:
        logger.debug(f"sigma={sigma:.3g} rejected: Gramian eigenvalue {min_eig:.3g}")
        return False
    return True


def select_sigma(solver: ImplicitSolver, member: FamilyMember, tol: Optional[ToleranceProfile] = None,
                 max_level: int = SIGMA_MAX_LEVEL) -> float:
    """Largest (T - t1) 2^-a, a = 1..max_level, passing the phi probes and the Gramian check"""
    stage, anchor = solver.stage, solver.anchor
    p = stage.p
    gap = max(float(np.linalg.norm(member.state(member.t1) - anchor.y_star(p))),
              float(np.linalg.norm(member.rate(member.t1) - anchor.z_star[p - 1])))
    if gap > STAGE_ENDPOINT_TOL:
        raise AnchorUnusable("family does not start at the anchor", gap=gap, stage=p)
    for a in range(1, max_level + 1):
        sigma = (member.T - member.t1) * 2.0 ** -a
        if _sigma_ok(solver, member, sigma):
            if tol is not None:
                tol.record(member.xi, sigma=sigma)
            logger.debug(f"stage {p}: sigma = {sigma:.6g} (level {a})")
            return sigma
    raise AnchorUnusable(f"no steering window down to level {max_level}", stage=p)


# =============================================================================
# Stage plans
# =============================================================================

@dataclass(eq=False)
class StageOutcome:
    """Control of one stage for (xi, beta) and everything calibrated on the way"""
    p: int
    xi: np.ndarray
    beta: np.ndarray
    control: Control
    trajectory: Trajectory
    shot: ShotReport
    reference: ReferenceRun
    shooting_map: ShootingMap
    target: np.ndarray
    member: FamilyMember
    sigma: float
    eps1: float
    delta1: float
    budget: float
    endpoint_error: float

    @property
    def eps2(self) -> float:
        return EPS2_RATIO * self.eps1

    @property
    def junction(self) -> float:
        return self.shooting_map.t_end

    def to_dict(self) -> Dict:
        return {
            "stage": self.p,
            "xi": self.xi.tolist(),
            "beta": self.beta.tolist(),
            "sigma": self.sigma,
            "eps1": self.eps1,
            "delta": self.reference.delta,
            "delta1": self.delta1,
            "l1_budget": self.budget,
            "lambda_star": self.shot.lambda_star.tolist(),
            "jacobian_dist_to_identity": self.shot.jacobian_dist_to_identity,
            "switch_times": self.reference.schedule.switch_times.tolist(),
            "endpoint_error": self.endpoint_error,
        }


class StagePlan:
    """Stage p of the induction: family, anchor and the (xi, beta) -> control map"""

    def __init__(self, system: TriangularSystem, anchor: RegularChain, p: int, family,
                 mode: SmoothingMode = SmoothingMode.SPLINE, cfg: Optional[IntegratorConfig] = None):
        self.system = system
        self.anchor = anchor
        self.p = p
        self.stage = system.stage(p)
        self.family = family
        self.mode = mode
        self.cfg = cfg or IntegratorConfig()
        self.solver = ImplicitSolver.for_stage(system, anchor, p)
        self.t1 = anchor.t1
        self.T = system.T
        self.y_star = anchor.y_star(p)
        self.tol = ToleranceProfile.initial(self.T - self.t1)
        self._cache: Dict[Tuple, StageOutcome] = {}

    def __repr__(self):
        return f"StagePlan({self.system.name}, p={self.p})"

    @property
    def outcomes(self) -> List[StageOutcome]:
        """Every outcome built so far, in build order"""
        return list(self._cache.values())

    def member(self, xi, beta) -> FamilyMember:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        end_rate = None
        if self.family.shape is FamilyShape.TERMINAL_RATE:
            end_rate = self.stage.last_block(self.T, xi, beta)
        return self.family.member(xi, end_rate)

    def control_for(self, xi, beta, terminal_rate=None) -> StageOutcome:
        """
        C1 control on [t1, T] steering the stage from y* to xi with
        value beta at T (and slope terminal_rate when given).
        Halves sigma up to SIGMA_RETRIES times on recoverable failures.
        """
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        if xi.size != self.stage.state_dim or beta.size != self.stage.control_dim:
            raise DimensionError(f"stage {self.p} expects xi of length {self.stage.state_dim} "
                                 f"and beta of length {self.stage.control_dim}")
        rate = None if terminal_rate is None else np.atleast_1d(np.asarray(terminal_rate, dtype=float))
        key = (tuple(xi.tolist()), tuple(beta.tolist()), None if rate is None else tuple(rate.tolist()))
        if key in self._cache:
            return self._cache[key]

        member = self.member(xi, beta)
        sigma = select_sigma(self.solver, member, self.tol)
        last_error = None
        for attempt in range(SIGMA_RETRIES + 1):
            try:
                outcome = self._build(member, beta, rate, sigma)
                break
            except RETRYABLE as exc:
                last_error = exc
                logger.warning(f"stage {self.p}: {type(exc).__name__} at sigma={sigma:.4g} "
                               f"(attempt {attempt + 1}); halving sigma")
                sigma *= 0.5
        else:
            raise last_error.with_context(stage=self.p, xi=xi, beta=beta)

        self._cache[key] = outcome
        logger.info(f"stage {self.p}: xi={np.round(xi, 6).tolist()} sigma={outcome.sigma:.4g} "
                    f"eps1={outcome.eps1:.3g} endpoint error {outcome.endpoint_error:.3g}")
        return outcome

    def _reference_segment(self, member: FamilyMember, sigma: float, delta1: float,
                           intervals: int) -> Control:
        times = np.linspace(self.t1, self.t1 + sigma, intervals + 1)
        samples = _phi_chain(self.solver, member, times)
        pins = (self.anchor.x_star[self.p], self.anchor.z_star[self.p])
        return smooth_family_segment(times, samples, pins, delta1)

    def _build(self, member: FamilyMember, beta: np.ndarray, terminal_rate: Optional[np.ndarray],
               sigma: float) -> StageOutcome:
        stage, t1, T = self.stage, self.t1, self.T
        xi = member.xi
        t_mid = t1 + sigma

        # reference segment and steering basis on [t1, t1 + sigma]
        delta1 = DELTA1_FRACTION * EPS2_RATIO * EPS1_START
        intervals = FAMILY_SAMPLE_INTERVALS
        for _ in range(BUDGET_HALVINGS + 1):
            u_delta1 = self._reference_segment(member, sigma, delta1, intervals)
            path = simulate(stage, t1, t_mid, self.y_star, u_delta1, self.cfg)
            if path.blown_up:
                raise BlownUpError("reference segment blew up", blow_up_time=path.blow_up_time)
            grid = np.linspace(t1, t_mid, LTV_GRID_INTERVALS + 1)
            smap = ShootingMap(stage, self.y_star, t1, t_mid, u_delta1,
                               basis(linearize_along(stage, path, u_delta1, grid)), self.cfg)
            phi0 = path.final_state
            eps1 = calibrate_eps1(smap, phi0)
            eps2 = EPS2_RATIO * eps1
            gap = float(np.linalg.norm(phi0 - member.state(t_mid)))
            if gap < 0.25 * eps2:
                break
            logger.debug(f"stage {self.p}: reference segment misses by {gap:.3g}; halving delta_1")
            delta1 *= 0.5
            intervals *= 2
        else:
            raise ShootingFailed(f"reference segment misses the family by {gap:.3g}", eps2=eps2)

        # tracker on [t1 + sigma, T]
        delta = DELTA_START
        for _ in range(DELTA_HALVINGS + 1):
            reference = build_reference(self.solver, member, delta, t_stop=t_mid, warm_start=beta)
            if reference.max_drift < 0.25 * eps2:
                break
            delta *= 0.5
        else:
            raise DefectUnsatisfiable(f"tracker drift {reference.max_drift:.3g} exceeds eps2/4", delta=delta)

        # smoothed tail and the lambda correction
        left_pin = (u_delta1.value(t_mid, "left"), u_delta1.derivative(t_mid, "left"))
        budget = BUDGET_FRACTION * eps2
        for _ in range(BUDGET_HALVINGS + 1):
            spec = SmoothingSpec(budget, left_pin, (beta, terminal_rate), mode=self.mode)
            tail = smooth_control(reference.control, spec)
            target = endpoint(stage, T, t_mid, xi, tail, self.cfg)
            miss = float(np.linalg.norm(target - phi0))
            if miss <= 0.75 * eps2:
                break
            budget *= 0.5
        else:
            raise ShootingFailed(f"smoothed tail lands {miss:.3g} from phi_hat(0)", eps2=eps2)

        shot = solve_lambda(smap, target, eps1)
        control = smap.control(shot.lambda_star).concat(tail)
        trajectory = simulate(stage, t1, T, self.y_star, control, self.cfg)
        if trajectory.blown_up:
            raise BlownUpError("stage trajectory blew up", blow_up_time=trajectory.blow_up_time)
        error = float(np.linalg.norm(trajectory.final_state - xi))
        if error > PLAN_TOL:
            raise ShootingFailed(f"stage endpoint error {error:.3g}", trace=shot.trace)

        self.tol.record(xi, sigma=sigma, delta=delta, eps1=eps1, bound=reference.bound)
        return StageOutcome(self.p, xi.copy(), beta.copy(), control, trajectory, shot, reference, smap,
                            target, member, sigma, eps1, delta1, budget, error)


def extend_stage(plan: StagePlan) -> StagePlan:
    """Stage p + 1 whose family is built from the (xi, beta) controls of plan"""
    if plan.p >= plan.system.nu:
        raise DimensionError(f"stage {plan.p} is already the last stage")
    return StagePlan(plan.system, plan.anchor, plan.p + 1, ExtendedFamily(plan), plan.mode, plan.cfg)


def build_stage_chain(system: TriangularSystem, anchor: RegularChain, shape: FamilyShape,
                      mode: SmoothingMode, cfg: Optional[IntegratorConfig] = None) -> List[StagePlan]:
    plans = [StagePlan(system, anchor, 1, base_family(anchor, system.T, shape), mode, cfg)]
    while plans[-1].p < system.nu:
        plans.append(extend_stage(plans[-1]))
    return plans


# =============================================================================
# Planner
# =============================================================================

@dataclass(frozen=True)
class PlannerOptions:
    shape: FamilyShape = FamilyShape.TERMINAL_RATE
    smoothing: SmoothingMode = SmoothingMode.SPLINE
    seed: int = DEFAULT_SEED
    tol: float = PLAN_TOL
    strict: bool = True
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)


@dataclass(eq=False)
class PlanResult:
    system: str
    anchor: RegularChain
    control: Control
    outcomes: List[Tuple[str, StageOutcome]]
    endpoint_error: float
    trajectory: Trajectory
    x0: np.ndarray
    xT: np.ndarray

    def to_dict(self) -> Dict:
        stages = []
        for half, outcome in self.outcomes:
            record = outcome.to_dict()
            record["half"] = half
            stages.append(record)
        return {
            "system": self.system,
            "x0": self.x0.tolist(),
            "xT": self.xT.tolist(),
            "anchor": self.anchor.to_dict(),
            "stages": stages,
            "endpoint_error": self.endpoint_error,
            "control": self.control.to_dict(),
        }


def _stage_outcomes(top: StageOutcome) -> List[StageOutcome]:
    chain = [top]
    while chain[-1].member.source is not None:
        chain.append(chain[-1].member.source)
    return chain[::-1]


class Planner:
    """
    Two-sided planner around one anchor.

    The forward chain steers x* at t1 to xT at T; the same chain on the
    mirrored system steers x* to x0, and its control, reversed about t1,
    covers [t0, t1]. Both halves end at u* at t1.
    """

    def __init__(self, system: TriangularSystem, anchor: RegularChain,
                 options: Optional[PlannerOptions] = None):
        self.system = system
        self.anchor = anchor
        self.options = options or PlannerOptions()
        report = validate_system(system, seed=self.options.seed)
        if not report.ok:
            raise ConfigError(f"system {system.name} failed validation: {'; '.join(report.violations)}")
        if not system.t0 < anchor.t1 < system.T:
            raise ConfigError(f"anchor time {anchor.t1} must lie inside ({system.t0}, {system.T})")
        opts = self.options
        self.forward = build_stage_chain(system, anchor, opts.shape, opts.smoothing, opts.integrator)
        self.mirror = system.mirrored(anchor.t1)
        self.backward = build_stage_chain(self.mirror, anchor.mirrored(), opts.shape, opts.smoothing,
                                          opts.integrator)

    def built_outcomes(self) -> List[Tuple[str, StageOutcome]]:
        """(half, outcome) for every stage outcome any plan call has built"""
        return [(half, outcome) for half, chain in (("backward", self.backward), ("forward", self.forward))
                for stage_plan in chain for outcome in stage_plan.outcomes]

    def plan(self, x0, xT) -> PlanResult:
        n = self.system.state_dim
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        xT = np.atleast_1d(np.asarray(xT, dtype=float))
        if x0.size != n or xT.size != n:
            raise DimensionError(f"boundary states must have length {n}")
        t1 = self.anchor.t1
        u_star = self.anchor.u_star

        try:
            fwd = self.forward[-1].control_for(xT, u_star)
        except PlannerError as exc:
            raise exc.with_context(half="forward")
        try:
            bwd = self.backward[-1].control_for(x0, u_star)
        except PlannerError as exc:
            raise exc.with_context(half="backward")

        control = bwd.control.time_reversed(t1).concat(fwd.control)
        trajectory = simulate(self.system, self.system.t0, self.system.T, x0, control, self.options.integrator)
        error = np.inf if trajectory.blown_up else float(np.linalg.norm(trajectory.final_state - xT))
        outcomes = [("backward", o) for o in _stage_outcomes(bwd)] + [("forward", o) for o in _stage_outcomes(fwd)]
        result = PlanResult(self.system.name, self.anchor, control, outcomes, error, trajectory, x0, xT)
        if error > self.options.tol:
            logger.warning(f"plan endpoint error {error:.3g} exceeds {self.options.tol:g}")
            if self.options.strict:
                raise ShootingFailed(f"plan endpoint error {error:.3g}", endpoint_error=error)
        logger.info(f"{self.system.name}: planned {x0.tolist()} -> {xT.tolist()}, endpoint error {error:.3g}")
        return result


def plan(system: TriangularSystem, anchor: RegularChain, x0, xT,
         options: Optional[PlannerOptions] = None) -> Control:
    """Control on [t0, T] steering x0 to xT"""
    return Planner(system, anchor, options).plan(x0, xT).control
