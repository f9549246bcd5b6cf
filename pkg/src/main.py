"""
tristeer - Command Line

Entry point for planning, simulation, continuity sweeps, anchor search
and the acceptance bench.

    python main.py plan --system example11 --x0 0,0 --xT 1,2.5 --out plan.json --csv traj.csv
    python main.py simulate --system example11 --control plan.json --x0 0,0 --csv out.csv
    python main.py sweep-continuity --system dblint --x0 0,0 --xT 1,0 --levels 4 --out sweep.csv
    python main.py anchor --system chain3 --t1 0.5 --out anchor.json
    python main.py bench run --filter "dblint*" --out report.md

Exit codes: 0 success, 1 planner error, 2 configuration or usage error.
"""

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from colorama import Fore, Style, just_fix_windows_console

from config import CSV_DIGITS, DEFAULT_SEED, PERTURB_TOL, SEED_ENV_VAR, SWEEP_LEVELS
from errors import ConfigError, PlannerError
from ode import IntegratorConfig, simulate
from perturb import PerturbedModel, get_perturbation, perturbed_planner, plan_perturbed
from regpoint import RegularChain, find_regular_chain
from shooting import Planner, PlannerOptions
from signals import Control, Trajectory
from systems import SystemEntry, builtin_names, load_system

logger = logging.getLogger(__name__)


# =============================================================================
# Helpers
# =============================================================================

def parse_vector(text: str, length: Optional[int] = None, what: str = "vector") -> np.ndarray:
    """'a,b,c' -> array; ConfigError on bad numbers or length"""
    try:
        values = np.array([float(part) for part in text.split(",") if part.strip()], dtype=float)
    except ValueError:
        raise ConfigError(f"{what} {text!r} is not a comma-separated list of numbers") from None
    if length is not None and values.size != length:
        raise ConfigError(f"{what} has {values.size} entries, expected {length}")
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{what} {text!r} has non-finite entries")
    return values


def resolve_seed(cli_seed: Optional[int]) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR}={env!r} is not an integer") from None
    return DEFAULT_SEED if cli_seed is None else cli_seed


def _read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} at line {exc.lineno}") from exc


def _write_json(path: str, data: dict):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(data, indent=2))
        f.write("\n")
    logger.info(f"wrote {path}")


def write_trajectory_csv(path: str, traj: Trajectory, control: Control):
    """Columns t, x_1..x_n, u_1..u_m at the trajectory samples"""
    n = traj.states.shape[1]
    m = control.dim
    fmt = f".{CSV_DIGITS}g"
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{j + 1}" for j in range(m)])
        for t, x in zip(traj.times, traj.states):
            u = control.value(t)
            writer.writerow([format(t, fmt)] + [format(v, fmt) for v in x] + [format(v, fmt) for v in u])
    logger.info(f"wrote {traj.times.size} rows to {path}")


def _anchor_for(entry: SystemEntry, t1: Optional[float], anchor_in: Optional[str], seed: int) -> RegularChain:
    system = entry.system
    if anchor_in:
        anchor = RegularChain.from_dict(_read_json(anchor_in))
        issues = anchor.verify(system)
        if issues:
            raise ConfigError(f"anchor {anchor_in} does not fit {system.name}: {'; '.join(issues)}")
        return anchor
    t1 = entry.default_t1 if t1 is None else t1
    return find_regular_chain(system, t1, entry.x1_star, seed=seed, hints=entry.anchor_hints)


def _banner(title: str):
    print("=" * 60)
    print(title)
    print("=" * 60)


def _status(ok: bool, text: str):
    color = Fore.GREEN if ok else Fore.RED
    print(f"{color}{text}{Style.RESET_ALL}")


# =============================================================================
# Commands
# =============================================================================

def cmd_plan(args) -> int:
    seed = resolve_seed(args.seed)
    entry = load_system(args.system)
    system = entry.system
    n = system.state_dim
    x0 = parse_vector(args.x0, n, "--x0")
    xT = parse_vector(args.xT, n, "--xT")
    anchor = _anchor_for(entry, args.t1, args.anchor_in, seed)
    if args.anchor_out:
        _write_json(args.anchor_out, anchor.to_dict())

    options = PlannerOptions(seed=seed)
    _banner(f"Plan {system.name}: {x0.tolist()} -> {xT.tolist()}")

    if args.perturb:
        pert = get_perturbation(args.perturb)
        planner = perturbed_planner(system, anchor, options)
        result = plan_perturbed(planner, pert, x0, xT)
        control = result.control
        traj = simulate(PerturbedModel(system, pert), system.t0, system.T, x0, control, options.integrator)
        record = {"system": system.name, "x0": x0.tolist(), "xT": xT.tolist(),
                  "anchor": anchor.to_dict(), "perturbation": pert.name,
                  "perturbed": result.to_dict(), "endpoint_error": result.residual,
                  "control": control.to_dict()}
        ok = result.converged
        error = result.residual
        _status(ok, f"perturbation {pert.name}: residual {error:.3e} after {result.rounds} rounds")
    else:
        result = Planner(system, anchor, options).plan(x0, xT)
        control, traj = result.control, result.trajectory
        record = result.to_dict()
        error = result.endpoint_error
        ok = True
        for half, outcome in result.outcomes:
            print(f"  {half:8s} stage {outcome.p}: sigma={outcome.sigma:.4g} eps1={outcome.eps1:.3g} "
                  f"|lambda*|={np.linalg.norm(outcome.shot.lambda_star):.3g}")
        _status(True, f"endpoint error {error:.3e}")

    if args.out:
        _write_json(args.out, record)
    if args.csv:
        write_trajectory_csv(args.csv, traj, control)
    if not ok:
        print(f"{Fore.YELLOW}perturbed residual above {PERTURB_TOL:g}{Style.RESET_ALL}")
        return 1
    return 0


def cmd_simulate(args) -> int:
    entry = load_system(args.system)
    system = entry.system
    x0 = parse_vector(args.x0, system.state_dim, "--x0")
    record = _read_json(args.control)
    try:
        control = Control.from_dict(record["control"] if "control" in record else record)
    except PlannerError as exc:
        raise ConfigError(f"{args.control}: {exc.message}") from exc
    if control.dim != system.control_dim:
        raise ConfigError(f"control has dimension {control.dim}, {system.name} expects {system.control_dim}")
    t_from = system.t0 if args.t_from is None else args.t_from
    t_to = system.T if args.t_to is None else args.t_to

    model = system
    if args.perturb:
        model = PerturbedModel(system, get_perturbation(args.perturb))
    traj = simulate(model, t_from, t_to, x0, control, IntegratorConfig())
    if args.csv:
        write_trajectory_csv(args.csv, traj, control)

    _banner(f"Simulate {system.name} on [{t_from:g}, {t_to:g}]")
    if traj.blown_up:
        _status(False, f"trajectory blew up at t={traj.blow_up_time:.6g}")
        return 1
    _status(True, f"final state {traj.final_state.tolist()}")
    return 0


def cmd_sweep(args) -> int:
    """
    Plans x0 -> xT + 2^-a * direction for a = 1..levels and records the
    sup distance of each control to the base control.
    """
    seed = resolve_seed(args.seed)
    entry = load_system(args.system)
    system = entry.system
    n = system.state_dim
    x0 = parse_vector(args.x0, n, "--x0")
    xT = parse_vector(args.xT, n, "--xT")
    direction = parse_vector(args.direction, n, "--direction") if args.direction else np.eye(n)[0]
    if args.levels < 1:
        raise ConfigError(f"--levels must be at least 1, got {args.levels}")
    anchor = _anchor_for(entry, args.t1, args.anchor_in, seed)
    planner = Planner(system, anchor, PlannerOptions(seed=seed))
    base = planner.plan(x0, xT).control

    rows = []
    for a in range(1, args.levels + 1):
        offset = 2.0 ** -a
        result = planner.plan(x0, xT + offset * direction)
        distance = result.control.sup_distance(base, per_segment=16)
        rows.append((a, offset, distance, result.endpoint_error))
        logger.info(f"level {a}: sup distance {distance:.3e}")

    _banner(f"Continuity sweep {system.name}")
    fmt = f".{CSV_DIGITS}g"
    for a, offset, distance, error in rows:
        print(f"  a={a}: offset {offset:g}  sup|u_a - u| = {distance:.3e}  endpoint error {error:.2e}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["level", "offset", "sup_distance", "endpoint_error"])
            for a, offset, distance, error in rows:
                writer.writerow([a, format(offset, fmt), format(distance, fmt), format(error, fmt)])
    return 0


def cmd_anchor(args) -> int:
    seed = resolve_seed(args.seed)
    entry = load_system(args.system)
    anchor = _anchor_for(entry, args.t1, None, seed)
    _banner(f"Anchor {entry.system.name} at t1={anchor.t1:g}")
    for i, (x, z) in enumerate(zip(anchor.x_star, anchor.z_star), start=1):
        print(f"  x_{i}* = {x.tolist()}   z_{i}* = {z.tolist()}")
    print(f"  rank margins {list(anchor.rank_margins)}")
    if args.out:
        _write_json(args.out, anchor.to_dict())
    return 0


def cmd_bench(args) -> int:
    from bench import print_summary, run_suite, write_report

    results = run_suite(args.filter)
    print_summary(results)
    if args.out:
        write_report(results, args.out)
    return 0 if all(r.passed for r in results) else 1


# =============================================================================
# Parser
# =============================================================================

def _add_system(p: argparse.ArgumentParser):
    p.add_argument("--system", required=True,
                   help=f"built-in ({', '.join(builtin_names())}) or path to a JSON config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tristeer", description="Steering controls for triangular systems")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan a control from x0 to xT")
    _add_system(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--xT", required=True)
    p.add_argument("--t1", type=float, default=None, help="anchor time (default: the system's)")
    p.add_argument("--anchor-in", default=None)
    p.add_argument("--anchor-out", default=None)
    p.add_argument("--perturb", default=None, help="registered perturbation name")
    p.add_argument("--out", default=None, help="plan JSON")
    p.add_argument("--csv", default=None, help="trajectory CSV")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="simulate a stored control")
    _add_system(p)
    p.add_argument("--control", required=True, help="plan JSON or bare control JSON")
    p.add_argument("--x0", required=True)
    p.add_argument("--t-from", type=float, default=None)
    p.add_argument("--t-to", type=float, default=None)
    p.add_argument("--perturb", default=None)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep-continuity", help="control distance under dyadic target offsets")
    _add_system(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--xT", required=True)
    p.add_argument("--direction", default=None, help="offset direction (default e_1)")
    p.add_argument("--levels", type=int, default=SWEEP_LEVELS)
    p.add_argument("--t1", type=float, default=None)
    p.add_argument("--anchor-in", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("anchor", help="search a regular anchor chain")
    _add_system(p)
    p.add_argument("--t1", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_anchor)

    p = sub.add_parser("bench", help="acceptance bench")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)
    b = bench_sub.add_parser("run", help="run the acceptance suite")
    b.add_argument("--filter", default=None, help="fnmatch pattern on case ids")
    b.add_argument("--out", default=None, help="report path (.md or .csv)")
    b.set_defaults(func=cmd_bench)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv and run one command; returns the exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.WARNING)

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{Fore.RED}config error: {exc}{Style.RESET_ALL}", file=sys.stderr)
        return exc.exit_code
    except PlannerError as exc:
        print(f"{Fore.RED}planner error: {exc}{Style.RESET_ALL}", file=sys.stderr)
        cause = exc.__cause__
        while cause is not None:
            print(f"  caused by {type(cause).__name__}: {cause}", file=sys.stderr)
            cause = cause.__cause__
        return exc.exit_code


def main():
    just_fix_windows_console()
    sys.exit(run())


if __name__ == "__main__":
    main()
