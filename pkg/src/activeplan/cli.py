"""Command-line entry point.

Subcommands: ``gen``, ``solve``, ``check``, ``bench`` and ``report``. Each
prints single-line ``key=value`` summaries on standard output and supports
``--dry-run``, which prints the resolved configuration and exits.

Exit codes: 0 success, 1 method or validation failure, 2 usage or input
error. Output files default to the directory named by ``ACTIVEPLAN_OUT``
(or the working directory when it is unset).
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

from .bench import BatchConfig, load_config, report_from_store, run_batch
from .dynamics import make_model
from .planner import plan, plan_baseline, validate_solution
from .scenario import (
    GenerationError,
    ScenarioError,
    generate_scenario,
    load_scenario,
    load_trajectory,
    normalize_model_kind,
    save_scenario,
    save_trajectory,
)
from .solver import SolverOptions
from .transcription import Margins

OUT_ENV = "ACTIVEPLAN_OUT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v) if v else "-"
    if v is None:
        return "-"
    text = str(v)
    return shlex.quote(text) if any(ch.isspace() for ch in text) or text == "" else text


def emit(**fields) -> None:
    """Print one ``key=value`` line in argument order."""
    print(" ".join(f"{k}={_fmt_value(v)}" for k, v in fields.items()), flush=True)


def _default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV) or ".")


def _non_negative_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _positive_int(text):
    value = _non_negative_int(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _model_kind(text):
    try:
        return normalize_model_kind(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_problem_flags(p):
    p.add_argument("--N", type=_positive_int, default=100, help="number of intervals (default 100)")
    p.add_argument("--dt-max", type=_positive_float, default=0.05, help="step cap in seconds (default 0.05)")
    p.add_argument("--epsilon", type=float, default=None,
                   help="clearance pad in meters (default: the scenario's, 0.2)")
    p.add_argument("--delta", type=_positive_float, default=1e-3, help="solver clearance slack (default 1e-3)")


def _add_solver_flags(p):
    p.add_argument("--max-outer", type=_positive_int, default=10, help="outer iterations (default 10)")
    p.add_argument("--max-inner", type=_positive_int, default=500, help="inner iterations per outer (default 500)")
    p.add_argument("--constraint-tol", type=_positive_float, default=1e-6)
    p.add_argument("--stationarity-tol", type=_positive_float, default=1e-4)
    p.add_argument("--time-limit", type=_positive_float, default=300.0, help="per-solve wall-clock limit (s)")
    p.add_argument("--initial-penalty", type=_positive_float, default=10.0)
    p.add_argument("--penalty-growth", type=_positive_float, default=10.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="activeplan",
        description="Time-optimal planning with an iterative active/inactive obstacle set.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded random scenario")
    p.add_argument("--seed", type=_non_negative_int, required=True)
    p.add_argument("--model", type=_model_kind, default="point-mass-2d",
                   help="point-mass[-2d] or quadrotor[-3d]")
    p.add_argument("--n-obs", type=_non_negative_int, default=0)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--out", type=Path, default=None, help="output file (default: $ACTIVEPLAN_OUT/scenario_*.json)")
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("solve", help="plan a trajectory for a scenario file")
    p.add_argument("scenario", type=Path)
    p.add_argument("--method", choices=("iterative", "baseline"), default="iterative")
    _add_problem_flags(p)
    _add_solver_flags(p)
    p.add_argument("--cold-start", action="store_true", help="do not warm-start later iterations")
    p.add_argument("--promote-one", action="store_true", help="promote one violated obstacle per iteration")
    p.add_argument("--out", type=Path, default=None, help="trajectory file (default: $ACTIVEPLAN_OUT/<scenario>.traj.json)")
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("check", help="validate a trajectory file against a scenario file")
    p.add_argument("trajectory", type=Path)
    p.add_argument("scenario", type=Path)
    p.add_argument("--dt-max", type=_positive_float, default=0.05)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--dense", action="store_true", help="also sample 10 points per segment")
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("bench", help="run a seeded batch from a JSON config")
    p.add_argument("config", type=Path)
    p.add_argument("--out-dir", type=Path, default=None)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("report", help="aggregate a batch store into CSV/JSON reports")
    p.add_argument("out_dir", type=Path, nargs="?", default=None)
    p.add_argument("--no-timing", action="store_true", help="leave compute-time columns empty")
    p.add_argument("--dry-run", action="store_true")
    return parser


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    out = args.out or _default_out_dir() / f"scenario_{args.model}_{args.n_obs}_{args.seed}.json"
    if args.dry_run:
        emit(command="gen", seed=args.seed, model=args.model, n_obs=args.n_obs, epsilon=args.epsilon, out=out)
        return EXIT_OK
    try:
        scenario = generate_scenario(args.seed, args.model, args.n_obs, epsilon=args.epsilon)
    except GenerationError as exc:
        emit(status="failed", error=str(exc))
        return EXIT_FAIL
    except ValueError as exc:
        raise UsageError(str(exc))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, out)
    emit(path=out, digest=scenario.digest(), n_obs=scenario.n_obs)
    return EXIT_OK


def _load_scenario(path):
    try:
        return load_scenario(path)
    except (OSError, ScenarioError) as exc:
        raise UsageError(f"{path}: {exc}")


def _margins(args, scenario):
    eps = scenario.epsilon if args.epsilon is None else args.epsilon
    return Margins(epsilon=eps, delta=getattr(args, "delta", 1e-3))


def cmd_solve(args) -> int:
    opts = SolverOptions(
        max_outer_iterations=args.max_outer,
        max_inner_iterations=args.max_inner,
        constraint_tol=args.constraint_tol,
        stationarity_tol=args.stationarity_tol,
        wall_clock_limit=args.time_limit,
        initial_penalty=args.initial_penalty,
        penalty_growth=args.penalty_growth,
    )
    out = args.out or _default_out_dir() / (args.scenario.stem + f".{args.method}.traj.json")
    if args.dry_run:
        emit(command="solve", scenario=args.scenario, method=args.method, N=args.N, dt_max=args.dt_max,
             epsilon=args.epsilon, delta=args.delta, max_outer=args.max_outer, max_inner=args.max_inner,
             time_limit=args.time_limit, out=out)
        return EXIT_OK
    scenario = _load_scenario(args.scenario)
    model = make_model(scenario.model)
    margins = _margins(args, scenario)
    if args.method == "iterative":
        report = plan(scenario, model, args.N, args.dt_max, margins, opts,
                      warm_start=not args.cold_start, promote="one" if args.promote_one else "all")
    else:
        report = plan_baseline(scenario, model, args.N, args.dt_max, margins, opts)
    traj_path = None
    if report.solved:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_trajectory(report.trajectory, out, scenario.model)
        traj_path = out
    emit(
        status=report.status,
        method=report.method,
        t_f=report.t_f,
        iterations=len(report.iterations),
        active=report.final_active_count,
        wall_time=round(report.wall_time, 4),
        scenario=scenario.digest(),
        trajectory=traj_path,
    )
    return EXIT_OK if report.solved else EXIT_FAIL


def cmd_check(args) -> int:
    if args.dry_run:
        emit(command="check", trajectory=args.trajectory, scenario=args.scenario, dt_max=args.dt_max,
             epsilon=args.epsilon, dense=args.dense)
        return EXIT_OK
    scenario = _load_scenario(args.scenario)
    try:
        traj, kind = load_trajectory(args.trajectory)
    except (OSError, ScenarioError) as exc:
        raise UsageError(f"{args.trajectory}: {exc}")
    if kind != scenario.model:
        raise UsageError(f"trajectory model {kind} does not match scenario model {scenario.model}")
    model = make_model(kind)
    report = validate_solution(traj, scenario, model, _margins(args, scenario), args.dt_max, dense=args.dense)
    for name, res in report.categories().items():
        emit(category=name, passed=res.passed, worst=res.worst, detail=res.detail)
    emit(status="pass" if report.passed else "fail", failures=report.failures())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bench(args) -> int:
    try:
        config = load_config(args.config)
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.config}: {exc}")
    out_dir = args.out_dir or _default_out_dir() / args.config.stem
    if args.dry_run:
        emit(command="bench", out_dir=out_dir, **config.to_dict())
        return EXIT_OK

    def progress(rec):
        emit(n_obs=rec["n_obs"], index=rec["index"], method=rec["method"], status=rec["status"],
             t_f=rec["t_f"], wall_time=round(rec["wall_time"], 4), active=rec["active_count"])

    records = run_batch(config, out_dir, progress=progress)
    emit(status="done", records=len(records), out_dir=out_dir)
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = args.out_dir or _default_out_dir()
    if args.dry_run:
        emit(command="report", out_dir=out_dir, timing=not args.no_timing)
        return EXIT_OK
    if not out_dir.is_dir() or not (out_dir / "records.jsonl").exists():
        emit(status="failed", error=f"no result store at {out_dir}")
        return EXIT_FAIL
    try:
        result = report_from_store(out_dir, timing=not args.no_timing)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        emit(status="failed", error=f"unusable store: {exc}")
        return EXIT_FAIL
    files = result["files"]
    emit(status="done", records=result["records"], missing=result["missing"],
         summary=files["summary"], histogram=files["histogram"])
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "check": cmd_check, "bench": cmd_bench, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"activeplan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
