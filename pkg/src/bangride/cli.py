"""Command-line front end.

    bangride check <config>        assumption report and sampling-time bounds
    bangride simulate <config>     run the configured strategy, write trace + metrics
    bangride oracle <config>       grid oracle vs the bang-ride selector
    bangride compare <config>...   align several runs against the first one
    bangride switches <trace>      debounced switch events of a trace file

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 result violates a constraint beyond tolerance.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import battery
from .checks import check_linear_assumptions, impulse_response, relative_degree
from .core import LinearSystem, ModelBlowUp, simulate
from .oracle import BudgetExceeded, counterexample_gap, greedy_maximal, grid_oracle, verify_bangride
from .pid import PidDivergenceError, run_pid_selector
from .scenario import (
    ConfigError,
    Scenario,
    compute_metrics,
    detect_switches,
    load_scenario,
    read_trace,
    write_metrics,
    write_trace,
)
from .selector import RootFindingError, run_selector

log = logging.getLogger("bangride")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_INFEASIBLE = 0, 1, 2, 3


class RuntimeFailure(RuntimeError):
    pass


def _emit(obj, quiet: bool):
    if not quiet:
        print(json.dumps(obj, indent=2, sort_keys=True))


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _apply_flags(scn: Scenario, args) -> Scenario:
    if args.seed is not None:
        scn.seed = args.seed
    if args.tol_active is not None:
        if args.tol_active < 0:
            raise ConfigError("--tol-active: must be nonnegative")
        scn.tol_active = args.tol_active
    return scn


def run_strategy(scn: Scenario, strategy: str | None = None):
    """Run a scenario's strategy; returns (problem, trajectory, extra metrics)."""
    strategy = strategy or scn.strategy
    problem = scn.build_problem()
    extra = {"strategy": strategy, "model": scn.model, "steps": problem.steps, "seed": scn.seed}
    try:
        if strategy == "selector":
            traj = run_selector(problem, tol_active=scn.tol_active)
        elif strategy == "pid":
            traj = run_pid_selector(problem, scn.pid_gains(), tol_active=scn.tol_active).trajectory
        elif strategy == "greedy":
            traj = greedy_maximal(problem, lookahead=scn.lookahead, tol_active=scn.tol_active)
        else:
            res = grid_oracle(problem, scn.grid_spec())
            if res.inputs is None:
                raise RuntimeFailure("no feasible input sequence on the grid")
            traj = simulate(problem, res.inputs, tol_active=scn.tol_active)
            extra["oracle"] = {
                "J": res.cost,
                "inputs": res.inputs.tolist(),
                "feasible_count": res.feasible_count,
                "evaluated": res.evaluated,
            }
    except BudgetExceeded as exc:
        raise ConfigError(f"grid: {exc}") from None
    except (ModelBlowUp, PidDivergenceError, RootFindingError, ValueError) as exc:
        raise RuntimeFailure(str(exc)) from None
    return problem, traj, extra


def _outputs(scn: Scenario, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    return out / scn.output.get("trace", "trace.csv"), out / scn.output.get("metrics", "metrics.json")


def cmd_check(args) -> int:
    scn = _apply_flags(load_scenario(args.config), args)
    problem = scn.build_problem()
    sys_ = problem.system
    report = {"model": scn.model, "t_s": scn.t_s, "t_f": scn.t_f}
    if isinstance(sys_, LinearSystem):
        rep = check_linear_assumptions(sys_, scn.t_f)
        report["assumptions"] = rep.to_dict()
        report["all_hold"] = rep.all_hold
        g = impulse_response(sys_, min(scn.t_f, 4))
        report["impulse_response_head"] = g.tolist()
    if scn.model == "ecm":
        m = battery.build_ecm(battery.EcmParams.from_dict(scn.parameters), scn.t_s)
        report["sampling_bounds"] = {"ts1": m.ts1, "ts2": m.ts2, "t_s_valid": m.ts_valid}
    elif scn.model == "spm":
        m = battery.build_spm(battery.SpmParams(**scn.parameters), scn.t_s)
        report["sampling_bounds"] = {"ts_max": m.ts_bound, "t_s_valid": m.ts_valid}
        report["relative_degree_raw"] = relative_degree(m.raw, 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "check.json", report)
    _emit(report, args.quiet)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scn = _apply_flags(load_scenario(args.config), args)
    start = time.perf_counter()
    problem, traj, extra = run_strategy(scn)
    metrics = compute_metrics(problem, traj, scn.t_s, scn.tol_active, scn.hold)
    metrics.extra.update(extra)
    metrics.wall_time = time.perf_counter() - start
    trace_path, metrics_path = _outputs(scn, Path(args.out))
    write_trace(trace_path, traj, scn.t_s)
    write_metrics(metrics_path, metrics)
    _emit({**metrics.to_dict(), "wall_time_s": metrics.wall_time}, args.quiet)
    return EXIT_OK if metrics.feasible else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    scn = _apply_flags(load_scenario(args.config), args)
    if scn.grid is None:
        raise ConfigError("grid: required for the oracle command")
    start = time.perf_counter()
    problem, traj, extra = run_strategy(scn, "oracle")
    metrics = compute_metrics(problem, traj, scn.t_s, scn.tol_active, scn.hold)
    metrics.extra.update(extra)
    try:
        br = greedy_maximal(problem) if not np.all(problem.system.D > 0) else run_selector(problem)
    except (ValueError, RootFindingError) as exc:
        raise RuntimeFailure(str(exc)) from None
    ok, first = verify_bangride(br, problem, scn.tol_active)
    j_oracle = extra["oracle"]["J"]
    metrics.extra["bangride"] = {"J": br.J, "inputs": br.u.tolist(), "verified": ok}
    metrics.extra["J_oracle_minus_J_bangride"] = j_oracle - br.J
    if scn.model == "counterexample":
        sys_ = problem.system
        gamma, j_br, j_alt = counterexample_gap(sys_.C @ sys_.B, sys_.D, problem.u_max)
        metrics.extra["counterexample"] = {"gamma": gamma, "J_bangride": j_br, "J_alt": j_alt}
    metrics.wall_time = time.perf_counter() - start
    trace_path, metrics_path = _outputs(scn, Path(args.out))
    write_trace(trace_path, traj, scn.t_s)
    write_metrics(metrics_path, metrics)
    _emit({**metrics.to_dict(), "wall_time_s": metrics.wall_time}, args.quiet)
    return EXIT_OK if metrics.feasible else EXIT_INFEASIBLE


def compare_runs(scenarios: list[Scenario], names: list[str]):
    """Run several aligned scenarios; deltas and summaries are taken against the first."""
    ref = scenarios[0]
    for name, scn in zip(names[1:], scenarios[1:]):
        if (scn.model, scn.t_s, scn.t_f) != (ref.model, ref.t_s, ref.t_f):
            raise ConfigError(f"{name}: model/t_s/t_f differ from {names[0]} (misaligned horizons)")
    runs = [run_strategy(s) for s in scenarios]
    ref_problem, ref_traj, _ = runs[0]
    events = detect_switches(ref_traj, ref.hold, ref.t_s)
    t_sw, idx_sw = (events[0].t, events[0].to_index) if events else (None, None)
    summary = []
    deltas = {}
    for name, scn, (problem, traj, _) in zip(names, scenarios, runs):
        values = np.column_stack((traj.u, traj.y))
        bounds = problem.bounds()
        peak = None
        if t_sw is not None:
            peak = float(np.max(np.abs(bounds[idx_sw] - values[t_sw:, idx_sw])))
        du = traj.u - ref_traj.u
        dy = traj.y - ref_traj.y
        dcost = np.cumsum(traj.cost) - np.cumsum(ref_traj.cost)
        deltas[name] = (du, dy, dcost)
        summary.append(
            {
                "name": name,
                "strategy": scn.strategy,
                "J": traj.J,
                "max_abs_du": float(np.max(np.abs(du))),
                "max_abs_dy": [float(v) for v in np.max(np.abs(dy), axis=0)],
                "dJ": traj.J - ref_traj.J,
                "peak_post_switch_error": peak,
                "max_violation": [float(v) for v in np.maximum(values - bounds, 0).max(axis=0)],
            }
        )
    report = {
        "reference": names[0],
        "switch": None if t_sw is None else {"t": t_sw, "time_s": t_sw * ref.t_s, "to": idx_sw},
        "runs": summary,
    }
    return report, deltas


def cmd_compare(args) -> int:
    scns = [_apply_flags(load_scenario(p), args) for p in args.configs]
    names = [Path(p).stem for p in args.configs]
    if len(set(names)) != len(names):
        names = [f"{i}:{n}" for i, n in enumerate(names)]
    report, deltas = compare_runs(scns, names)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "compare.json", report)
    t_s = scns[0].t_s
    p = scns[0].build_problem().system.p
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t", "time_s"]
        for name in names:
            head += [f"du[{name}]"] + [f"dy{i}[{name}]" for i in range(1, p + 1)] + [f"dcost_cum[{name}]"]
        w.writerow(head)
        steps = len(next(iter(deltas.values()))[0])
        for t in range(steps):
            row = [t, repr(t * t_s)]
            for name in names:
                du, dy, dc = deltas[name]
                row += [repr(float(du[t]))] + [repr(float(v)) for v in dy[t]] + [repr(float(dc[t]))]
            w.writerow(row)
    _emit(report, args.quiet)
    return EXIT_OK


def cmd_switches(args) -> int:
    trace = read_trace(args.trace)
    events = detect_switches(trace.active_idx, args.hold, trace.t_s)
    _emit([e.to_dict() for e in events], args.quiet)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--tol-active", type=float, default=None, help="activity/feasibility tolerance")
    common.add_argument("--quiet", action="store_true", help="suppress the JSON summary on stdout")

    parser = argparse.ArgumentParser(prog="bangride", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("check", parents=[common], help="assumption report")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("simulate", parents=[common], help="run the configured strategy")
    p.add_argument("config")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("oracle", parents=[common], help="grid oracle vs bang-ride")
    p.add_argument("config")
    p.set_defaults(func=cmd_oracle)
    p = sub.add_parser("compare", parents=[common], help="compare aligned scenarios")
    p.add_argument("configs", nargs="+")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("switches", parents=[common], help="switch events of a trace")
    p.add_argument("trace")
    p.add_argument("--hold", type=int, default=3)
    p.set_defaults(func=cmd_switches)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
