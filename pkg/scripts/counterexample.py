#!/usr/bin/env python3
"""Two-step instance where bang-ride can lose: closed-form gap vs enumeration.

For each value of C*B the script reports gamma, the bang-ride cost, and the
best cost found by exhaustive search on a grid that contains both candidate
sequences.
"""

from __future__ import annotations

import argparse

import numpy as np

from bangride.oracle import GridSpec, counterexample_gap, counterexample_problem, grid_oracle


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cb", type=float, nargs="+", default=[0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    ap.add_argument("--points", type=int, default=21)
    args = ap.parse_args()

    print(f"{'CB':>6} {'gamma':>8} {'J_bangride':>11} {'J_grid':>8} {'best inputs':>18}")
    for cb in args.cb:
        pr = counterexample_problem(C=cb)
        gamma, j_br, _ = counterexample_gap([cb], [1.0], pr.u_max)
        include = (gamma * pr.u_max,) if gamma > -1 else ()
        res = grid_oracle(pr, GridSpec(-1.0, 1.0, args.points, 1, include=include))
        best = np.array2string(res.inputs, precision=3)
        print(f"{cb:6.2f} {gamma:8.3f} {j_br:11.3f} {res.cost:8.3f} {best:>18}")


if __name__ == "__main__":
    main()
