#!/usr/bin/env python3
"""ECM fast-charging run: selector against the two PID-selector gain sets.

Writes one CSV per controller (time, current, over-potential, charge state)
plus a JSON summary with the switch events and post-switch tracking errors.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from bangride.battery import paper_ecm_scenario
from bangride.pid import MTNS_GAINS, TUNER_GAINS, run_pid_selector
from bangride.scenario import detect_switches
from bangride.selector import run_selector

T_S = 0.05


def save(path: Path, traj):
    t = np.arange(len(traj.u)) * T_S
    data = np.column_stack((t, traj.u, traj.y[:, 0], traj.x[:, 2]))
    np.savetxt(path, data, delimiter=",", header="time_s,current_A,overpotential_V,soc", comments="")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/ecm", help="output directory")
    ap.add_argument("--horizon", type=int, default=None, help="override t_f (steps)")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    problem = paper_ecm_scenario()
    if args.horizon is not None:
        problem = problem.with_horizon(args.horizon)

    runs = {}
    start = time.perf_counter()
    runs["selector"] = run_selector(problem)
    runs["pid_impulse_tuned"] = run_pid_selector(problem, [MTNS_GAINS]).trajectory
    runs["pid_generic_tuner"] = run_pid_selector(problem, [TUNER_GAINS]).trajectory
    elapsed = time.perf_counter() - start

    events = detect_switches(runs["selector"], 3, T_S)
    t_sw = events[0].t if events else 0
    summary = {"wall_time_s": elapsed, "switches": [e.to_dict() for e in events], "runs": {}}
    for name, traj in runs.items():
        save(out / f"{name}.csv", traj)
        summary["runs"][name] = {
            "J": traj.J,
            "final_soc": float(traj.x[-1, 2]),
            "peak_post_switch_error_V": float(np.max(np.abs(problem.y_max[0] - traj.y[t_sw:, 0]))),
            "max_abs_du_vs_selector_A": float(np.max(np.abs(traj.u - runs["selector"].u))),
        }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
