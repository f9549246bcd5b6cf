"""
tristeer - Acceptance Bench

Registered acceptance cases with their thresholds. Each case measures
one number; it passes when the number is within its threshold (strictly
below it for strict cases) and its timed work fits the case's time limit.
Every planning case also checks the tracker runs its planners built.

Usage:
    python bench.py run [--filter "dblint*"] [--out report.md]
"""

import argparse
import csv
import fnmatch
import itertools
import logging
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from colorama import Fore, Style, just_fix_windows_console

from config import BENCH_WORKERS, DEFAULT_SEED, PERTURB_TOL, PLAN_TOL, RHO, STAGE_ENDPOINT_TOL
from errors import PlannerError
from ltv_steer import basis, simulate_ltv
from ode import LtvSystem, simulate
from perturb import get_perturbation, perturbed_planner, plan_perturbed
from regpoint import find_regular_chain, phi
from shooting import Planner, PlannerOptions, PlanResult, StageOutcome, build_stage_chain, solve_lambda
from signals import Control
from systems import SystemEntry, get_builtin

logger = logging.getLogger(__name__)


@dataclass
class CaseResult:
    case_id: str
    metric: str
    measured: float
    threshold: float
    passed: bool
    wall_time: float
    note: str = ""


@dataclass(frozen=True)
class Case:
    """
    One acceptance check. measure returns (measured, note) or
    (measured, note, seconds) where seconds is the timed part of the
    work; time_limit applies to it, or to the whole call when absent.
    """
    case_id: str
    metric: str
    threshold: float
    measure: Callable[[], tuple]
    strict: bool = False
    time_limit: Optional[float] = None

    def within(self, measured: float) -> bool:
        return measured < self.threshold if self.strict else measured <= self.threshold


CASES: Dict[str, Case] = {}


def register(case_id: str, metric: str, threshold: float, strict: bool = False,
             time_limit: Optional[float] = None):
    def decorator(fn):
        CASES[case_id] = Case(case_id, metric, threshold, fn, strict, time_limit)
        return fn
    return decorator


# =============================================================================
# Shared fixtures
# =============================================================================

_SHARED_LOCK = threading.Lock()


def _anchored(name: str) -> Tuple[SystemEntry, object]:
    entry = get_builtin(name)
    anchor = find_regular_chain(entry.system, entry.default_t1, entry.x1_star, seed=DEFAULT_SEED,
                                hints=entry.anchor_hints)
    return entry, anchor


def _planner(name: str) -> Planner:
    entry, anchor = _anchored(name)
    return Planner(entry.system, anchor, PlannerOptions(seed=DEFAULT_SEED))


@lru_cache(maxsize=None)
def _example11_cached() -> Tuple[Planner, PlanResult]:
    planner = _planner("example11")
    return planner, planner.plan([0.0, 0.0], [1.0, 2.5])


def example11_run() -> Tuple[Planner, PlanResult]:
    """(0, 0) -> (1, 2.5) on example11 with its planner, computed once per process"""
    with _SHARED_LOCK:
        return _example11_cached()


def example11_plan() -> PlanResult:
    return example11_run()[1]


# =============================================================================
# Explicit double-integrator controls
# =============================================================================

def _explicit_control(which: int, T: float) -> Control:
    if which == 1:
        v0, v1, slope = 6.0 / T ** 2, -6.0 / T ** 2, -12.0 / T ** 3
    else:
        v0, v1, slope = -2.0 / T, 4.0 / T, 6.0 / T ** 2
    return Control.hermite([0.0, T], [[v0], [v1]], [[slope], [slope]])


def _explicit_case(which: int, T: float):
    def measure() -> Tuple[float, str, float]:
        system = get_builtin("dblint").system
        start = time.perf_counter()
        traj = simulate(system, 0.0, T, [0.0, 0.0], _explicit_control(which, T))
        elapsed = time.perf_counter() - start
        target = np.eye(2)[which - 1]
        return float(np.linalg.norm(traj.final_state - target)), f"simulated in {elapsed:.3f}s", elapsed
    return measure


for _which in (1, 2):
    for _T in (0.5, 1.0, 2.0):
        register(f"dblint/explicit-v{_which}-T{_T:g}", "endpoint error", 1e-9,
                 time_limit=0.1)(_explicit_case(_which, _T))


# =============================================================================
# LTV steering
# =============================================================================

def random_ltv(rng: np.random.Generator, k: int, intervals: int = 64) -> LtvSystem:
    """Chain-shaped LTV system on [0, 1]: nonvanishing superdiagonal, input on the last state"""
    times = np.linspace(0.0, 1.0, intervals + 1)
    lower = np.tril(rng.normal(scale=0.5, size=(k, k)))
    phase = rng.uniform(0.0, 2.0 * np.pi)
    A = np.empty((times.size, k, k))
    B = np.zeros((times.size, k, 1))
    for n, t in enumerate(times):
        A[n] = lower * np.cos(t + phase)
        for i in range(k - 1):
            A[n, i, i + 1] = 1.0 + 0.5 * np.sin(2.0 * np.pi * t + i)
        B[n, k - 1, 0] = 1.0 + 0.3 * t
    return LtvSystem(times, A, B)


@register("ltv/random-basis", "max basis endpoint error", 1e-6, time_limit=1.0)
def _ltv_random_basis() -> Tuple[float, str, float]:
    rng = np.random.default_rng(DEFAULT_SEED)
    worst, flat, elapsed = 0.0, 0.0, 0.0
    for _ in range(20):
        ltv = random_ltv(rng, int(rng.integers(1, 5)))
        start = time.perf_counter()
        b = basis(ltv)
        elapsed += time.perf_counter() - start
        for j, w in enumerate(b.controls):
            worst = max(worst, float(np.linalg.norm(simulate_ltv(ltv, w) - np.eye(ltv.state_dim)[j])))
            ends = [w.value(w.start), w.value(w.end, "left"), w.derivative(w.start), w.derivative(w.end, "left")]
            flat = max(flat, max(float(np.max(np.abs(e))) for e in ends))
    if flat != 0.0:
        return np.inf, f"boundary values not flat ({flat:.3g})", elapsed
    return worst, f"20 systems, boundary flat, bases in {elapsed:.3f}s", elapsed


# =============================================================================
# Planning
# =============================================================================

def tracker_failure(outcomes: Iterable[StageOutcome]) -> Optional[str]:
    """Why the first offending reference run breaks defect < delta or |v| <= M; None when all hold"""
    for outcome in outcomes:
        ref = outcome.reference
        if not ref.max_defect < ref.delta:
            return f"stage {outcome.p}: tracker defect {ref.max_defect:.3g} reaches delta {ref.delta:.3g}"
        if ref.control.sup_norm() > ref.bound:
            return f"stage {outcome.p}: |v| {ref.control.sup_norm():.3g} exceeds its bound {ref.bound:.3g}"
    return None


def _planner_outcomes(planner: Planner) -> List[StageOutcome]:
    return [outcome for _, outcome in planner.built_outcomes()]


@register("dblint/plan", "endpoint error", PLAN_TOL)
def _dblint_plan() -> Tuple[float, str]:
    planner = _planner("dblint")
    result = planner.plan([0.0, 0.0], [1.0, 0.0])
    failure = tracker_failure(_planner_outcomes(planner))
    if failure:
        return np.inf, failure
    return result.endpoint_error, f"{len(result.outcomes)} stage outcomes"


def _stage_invariants(name: str):
    def measure() -> Tuple[float, str]:
        entry, anchor = _anchored(name)
        chain = build_stage_chain(entry.system, anchor, PlannerOptions().shape, PlannerOptions().smoothing)
        top = chain[-1]
        rng = np.random.default_rng(DEFAULT_SEED)
        worst = 0.0
        for _ in range(10):
            xi = rng.uniform(-1.0, 1.0, top.stage.state_dim)
            beta = rng.uniform(-1.0, 1.0, top.stage.control_dim)
            outcome = top.control_for(xi, beta)
            u = outcome.control
            exact = (np.array_equal(u.value(u.end, "left"), beta)
                     and np.array_equal(u.value(anchor.t1), anchor.x_star[top.p])
                     and np.array_equal(u.derivative(anchor.t1), anchor.z_star[top.p]))
            if not exact:
                return np.inf, f"boundary pins broken at xi={xi.tolist()}"
            worst = max(worst, outcome.endpoint_error)
        failure = tracker_failure(o for stage_plan in chain for o in stage_plan.outcomes)
        if failure:
            return np.inf, failure
        return worst, f"stage {top.p}, 10 random (xi, beta)"
    return measure


register("dblint/stage-invariants", "max stage endpoint error", STAGE_ENDPOINT_TOL)(_stage_invariants("dblint"))
register("chain3/stage-invariants", "max stage endpoint error", STAGE_ENDPOINT_TOL)(_stage_invariants("chain3"))


@register("example11/plan", "endpoint error", PLAN_TOL)
def _example11_plan_case() -> Tuple[float, str]:
    result = example11_plan()
    failure = tracker_failure(o for _, o in result.outcomes)
    if failure:
        return np.inf, failure
    return result.endpoint_error, "(0, 0) -> (1, 2.5)"


GRID = [(-2.0, -1.0), (-1.0, 0.0), (0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]


@register("example11/plan-grid", "max endpoint error", PLAN_TOL, time_limit=1.0)
def _example11_plan_grid() -> Tuple[float, str, float]:
    planner = _planner("example11")
    worst, slowest = 0.0, 0.0
    for x0, xT in itertools.product(GRID, GRID):
        start = time.perf_counter()
        result = planner.plan(x0, xT)
        slowest = max(slowest, time.perf_counter() - start)
        worst = max(worst, result.endpoint_error)
        if x0[0] != xT[0] and not np.any(result.trajectory.states[:, 1] > 2.0):
            return np.inf, f"{x0} -> {xT} never enters x2 > 2", slowest
    failure = tracker_failure(_planner_outcomes(planner))
    if failure:
        return np.inf, failure, slowest
    return worst, f"25 pairs, slowest {slowest:.2f}s", slowest


CONTINUITY_PAIRS = [
    ((0.0, 0.0), (1.0, 2.5)),
    ((-1.0, 0.0), (0.0, 1.0)),
    ((0.0, 1.0), (1.0, 0.0)),
    ((1.0, -1.0), (-1.0, 2.0)),
    ((0.5, 0.5), (1.5, 1.0)),
]


@register("example11/continuity", "sup distance at level 4", 1e-2, strict=True)
def _example11_continuity() -> Tuple[float, str]:
    planner = _planner("example11")
    direction = np.array([1.0, 0.0])
    worst = 0.0
    for x0, xT in CONTINUITY_PAIRS:
        base = planner.plan(x0, xT).control
        distances = [planner.plan(x0, np.asarray(xT) + 2.0 ** -a * direction).control
                     .sup_distance(base, per_segment=16) for a in range(1, 5)]
        for d_prev, d_next in zip(distances, distances[1:]):
            if d_next > 2.0 * d_prev:
                return np.inf, f"{x0} -> {xT}: distances {distances}"
        worst = max(worst, distances[-1])
    failure = tracker_failure(_planner_outcomes(planner))
    if failure:
        return np.inf, failure
    return worst, f"{len(CONTINUITY_PAIRS)} base pairs"


@register("example11/perturbed", "perturbed residual", PERTURB_TOL)
def _example11_perturbed() -> Tuple[float, str]:
    entry, anchor = _anchored("example11")
    planner = perturbed_planner(entry.system, anchor)
    nominal = planner.plan([0.0, 0.0], [1.0, 2.5]).control
    zero = plan_perturbed(planner, get_perturbation("zero"), [0.0, 0.0], [1.0, 2.5])
    if not np.array_equal(zero.control.coefficients, nominal.coefficients):
        return np.inf, "zero perturbation changed the nominal plan"
    result = plan_perturbed(planner, get_perturbation("example11-sin"), [0.0, 0.0], [1.0, 2.5])
    failure = tracker_failure(_planner_outcomes(planner))
    if failure:
        return np.inf, failure
    return result.residual, f"{result.rounds} rounds"


# =============================================================================
# Internal checks on the shared example11 plan
# =============================================================================

def grid_argmin(smap, target: np.ndarray, radius: float, points: int = 11, levels: int = 12) -> np.ndarray:
    """Zooming exhaustive grid minimization of |phi_hat(lambda) - target| over a cube"""
    center = np.zeros(smap.dim)
    for _ in range(levels):
        axes = [np.linspace(c - radius, c + radius, points) for c in center]
        best, best_err = center, np.inf
        for lam in itertools.product(*axes):
            lam = np.array(lam)
            try:
                err = float(np.linalg.norm(smap.phi_hat(lam) - target))
            except PlannerError:
                continue
            if err < best_err:
                best, best_err = lam, err
        center = best
        radius *= 4.0 / (points - 1)
    return center


@register("example11/grid-oracle", "max |lambda_solve - lambda_grid|", 1e-4)
def _example11_grid_oracle() -> Tuple[float, str]:
    _, outcome = example11_plan().outcomes[-1]
    smap = outcome.shooting_map
    step = 0.05 * outcome.eps2
    probes = [outcome.target] + [outcome.target + step * s * np.eye(smap.dim)[j]
                                 for j in range(smap.dim) for s in (1.0, -1.0)]
    worst = 0.0
    for target in probes[:5]:
        lam = solve_lambda(smap, target, outcome.eps1).lambda_star
        worst = max(worst, float(np.linalg.norm(lam - grid_argmin(smap, target, outcome.eps1))))
    return worst, f"{min(5, len(probes))} targets"


@register("example11/phi-residual", "max |f_p(t, y, phi) - z_p|", 1e-8)
def _example11_phi_residual() -> Tuple[float, str]:
    planner, result = example11_run()
    chains = {"forward": planner.forward, "backward": planner.backward}
    worst = 0.0
    for half, outcome in result.outcomes:
        solver = chains[half][outcome.p - 1].solver
        member = outcome.member
        v = solver.pinned
        for t in np.linspace(member.t1, member.t1 + outcome.sigma, 33):
            v = phi(solver, t, member.state(t), member.rate(t), v_init=v)
            residual = solver.stage.last_block(t, member.state(t), v) - member.rate(t)
            worst = max(worst, float(np.linalg.norm(residual)))
    return worst, "phi along every stage window"


@register("example11/jacobian", "max |d phi_hat / d lambda - I|", 2.0 * RHO)
def _example11_jacobian() -> Tuple[float, str]:
    dists = [o.shot.jacobian_dist_to_identity for _, o in example11_plan().outcomes]
    return max(dists), f"{len(dists)} shots"


@register("example11/tracker-defect", "max defect / delta", 1.0, strict=True)
def _example11_tracker_defect() -> Tuple[float, str]:
    outcomes = [o for _, o in example11_plan().outcomes]
    failure = tracker_failure(outcomes)
    if failure:
        return np.inf, failure
    worst = max(o.reference.max_defect / o.reference.delta for o in outcomes)
    return worst, f"defect relative to delta on {len(outcomes)} reference runs"


# =============================================================================
# Runner and reports
# =============================================================================

def _run_case(case: Case) -> CaseResult:
    start = time.perf_counter()
    try:
        measured, note, *timed = case.measure()
    except (PlannerError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        measured, note, timed = np.inf, f"{type(exc).__name__}: {exc}", []
        logger.warning(f"{case.case_id} failed: {note}")
    elapsed = time.perf_counter() - start
    measured = float(measured)
    passed = case.within(measured)
    seconds = timed[0] if timed else elapsed
    if case.time_limit is not None and not seconds < case.time_limit:
        passed = False
        note = f"{note}; {seconds:.3f}s over the {case.time_limit:g}s limit"
    return CaseResult(case.case_id, case.metric, measured, case.threshold, passed, elapsed, note)


def run_suite(pattern: Optional[str] = None, workers: int = BENCH_WORKERS) -> List[CaseResult]:
    """Run every registered case whose id matches pattern (fnmatch); results sorted by id"""
    selected = [c for cid, c in CASES.items() if not pattern or fnmatch.fnmatchcase(cid, pattern)]
    if not selected:
        logger.info(f"no bench case matches {pattern!r}")
        return []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_run_case, selected))
    return sorted(results, key=lambda r: r.case_id)


def write_report(results: List[CaseResult], path: str):
    """Markdown table, or CSV when path ends in .csv"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    header = ["case", "metric", "measured", "threshold", "pass", "wall_time_s", "note"]
    rows = [[r.case_id, r.metric, f"{r.measured:.6g}", f"{r.threshold:.6g}", "PASS" if r.passed else "FAIL",
             f"{r.wall_time:.3f}", r.note] for r in results]
    with open(path, "w", encoding="utf-8", newline="") as f:
        if path.endswith(".csv"):
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
            return
        passed = sum(r.passed for r in results)
        f.write("# tristeer acceptance report\n\n")
        f.write(f"{passed}/{len(results)} cases passed\n\n")
        f.write("| " + " | ".join(header) + " |\n")
        f.write("|" + "---|" * len(header) + "\n")
        for row in rows:
            f.write("| " + " | ".join(cell.replace("|", "/") for cell in row) + " |\n")


def print_summary(results: List[CaseResult]):
    print("=" * 60)
    print("Acceptance bench")
    print("=" * 60)
    for r in results:
        color = Fore.GREEN if r.passed else Fore.RED
        print(f"{color}{'PASS' if r.passed else 'FAIL'}{Style.RESET_ALL} {r.case_id}: "
              f"{r.metric} {r.measured:.3g} (threshold {r.threshold:.3g}) in {r.wall_time:.2f}s")
    if not results:
        print(f"{Fore.YELLOW}no cases selected{Style.RESET_ALL}")
    else:
        print(f"{sum(r.passed for r in results)}/{len(results)} passed")


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description="tristeer acceptance bench")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run")
    run.add_argument("--filter", default=None)
    run.add_argument("--out", default=None)
    run.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    results = run_suite(args.filter)
    print_summary(results)
    if args.out:
        write_report(results, args.out)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    just_fix_windows_console()
    sys.exit(main())
