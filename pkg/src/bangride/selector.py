"""Bang-ride state feedback: per-constraint laws K_i composed by a min selector.

``K_0(x) = u_max``; for each output, ``K_i(x)`` is the input that puts
``h_i(x, u)`` exactly on its bound (``+inf`` if no input reaches it). The
closed-loop input is ``min_i K_i(x)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import TOL_ACTIVE, LinearSystem, ModelBlowUp, NonlinearSystem, Problem, Trajectory, make_trajectory

log = logging.getLogger(__name__)


class RootFindingError(RuntimeError):
    pass


class NonMonotoneOutputError(RootFindingError):
    """Output found decreasing in u while bracketing."""


class UnreachableBoundError(RootFindingError):
    """Output exceeds its bound for every input down to the bracket limit."""


@dataclass(frozen=True)
class RootSolverConfig:
    tol: float = 1e-10
    max_iter: int = 400
    bound_factor: float = 1e9
    expand: float = 2.0


def selector_gain_linear(sys: LinearSystem, x, i: int, y_max) -> float:
    """``K_i(x) = (y_max_i - C_i x) / D_i`` for output ``i`` (1-based)."""
    row = i - 1
    d = float(sys.D[row])
    if not d > 0:
        raise ValueError(f"D[{i}] = {d} must be positive")
    return float((np.asarray(y_max, dtype=float).reshape(-1)[row] - sys.C[row] @ x) / d)


def solve_constraint_equation(
    sys: NonlinearSystem,
    x,
    i: int,
    y_max,
    config: RootSolverConfig = RootSolverConfig(),
    u_scale: float = 1.0,
) -> float:
    """Solve ``h_i(x, u) = y_max_i`` for u by bracketing and bisection.

    The returned point is the low end of the final bracket, so
    ``h_i(x, u) <= y_max_i`` always holds there. Returns ``math.inf`` when
    the output stays below its bound up to ``bound_factor * max(1, u_scale)``.
    """
    row = i - 1
    target = float(np.asarray(y_max, dtype=float).reshape(-1)[row])
    tol = config.tol * (1.0 + abs(target))
    limit = config.bound_factor * max(1.0, abs(u_scale))

    def g(u: float) -> float:
        return float(np.asarray(sys.h(x, u), dtype=float).reshape(-1)[row]) - target

    g0 = g(0.0)
    if g0 == 0.0:
        return 0.0
    step = 1.0
    if g0 < 0:
        lo, glo = 0.0, g0
        while True:
            hi = lo + step if lo == 0.0 else lo * config.expand
            ghi = g(hi)
            if ghi < glo:
                raise NonMonotoneOutputError(f"h_{i} decreases between u={lo:g} and u={hi:g}")
            if ghi >= 0:
                break
            if hi > limit:
                return math.inf
            lo, glo = hi, ghi
    else:
        hi, ghi = 0.0, g0
        while True:
            lo = -step if hi == 0.0 else hi * config.expand
            glo = g(lo)
            if glo > ghi:
                raise NonMonotoneOutputError(f"h_{i} decreases between u={lo:g} and u={hi:g}")
            if glo <= 0:
                break
            if -lo > limit:
                raise UnreachableBoundError(f"h_{i} stays above its bound for all u >= {lo:g}")
            hi, ghi = lo, glo

    for _ in range(config.max_iter):
        if abs(glo) <= tol:
            return lo
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gmid = g(mid)
        if gmid <= 0:
            lo, glo = mid, gmid
        else:
            hi, ghi = mid, gmid
    if abs(glo) <= tol:
        return lo
    if hi - lo <= 4 * np.spacing(max(abs(lo), abs(hi))):
        # flat or discontinuous at the root; the bracket cannot shrink further
        log.debug("bisection stalled on h_%d at u=%g with residual %g", i, lo, glo)
        return lo
    raise RootFindingError(f"no convergence for h_{i} after {config.max_iter} bisections")


@dataclass(frozen=True)
class SelectorPolicy:
    """Min-composition of ``K_0 .. K_p`` for one problem.

    ``u_min`` is an optional lower clamp absent from the plain selector law;
    it is off by default and only counts when it binds.
    """

    problem: Problem
    root_solver: RootSolverConfig = RootSolverConfig()
    tie_break: str = "lowest-index"
    u_min: float | None = None

    def __post_init__(self):
        if self.tie_break != "lowest-index":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")

    def gains(self, x) -> np.ndarray:
        """All candidate inputs ``[K_0, K_1, ..., K_p]`` at state x."""
        pr = self.problem
        sys = pr.system
        if isinstance(sys, LinearSystem):
            if np.any(sys.D <= 0):
                raise ValueError("selector needs D > 0 for every output")
            k = (pr.y_max - sys.C @ x) / sys.D
        else:
            k = np.array(
                [
                    solve_constraint_equation(sys, x, i, pr.y_max, self.root_solver, pr.u_max)
                    for i in range(1, sys.p + 1)
                ]
            )
        return np.concatenate(([pr.u_max], k))

    def __call__(self, x) -> tuple[float, int]:
        return selector_policy(self, x)


def selector_policy(policy: SelectorPolicy, x) -> tuple[float, int]:
    """Evaluate ``u = min(K_0(x), ..., K_p(x))`` and the (lowest) argmin index."""
    k = policy.gains(x)
    idx = int(np.argmin(k))
    u = float(k[idx])
    if policy.u_min is not None and u < policy.u_min:
        u = policy.u_min
    return u, idx


def run_selector(problem: Problem, policy: SelectorPolicy | None = None, tol_active: float = TOL_ACTIVE) -> Trajectory:
    """Closed-loop run of the selector policy over the problem horizon."""
    policy = policy or SelectorPolicy(problem)
    if policy.problem is not problem:
        policy = SelectorPolicy(problem, policy.root_solver, policy.tie_break, policy.u_min)
    sys = problem.system
    steps = problem.steps
    x = np.empty((steps, sys.n))
    u = np.empty(steps)
    y = np.empty((steps, sys.p))
    cost = np.empty(steps)
    winner = np.empty(steps, dtype=int)
    clamped = 0
    xt = problem.x0.copy()
    for t in range(steps):
        x[t] = xt
        ut, idx = selector_policy(policy, xt)
        if policy.u_min is not None and ut == policy.u_min:
            clamped += 1
        u[t] = ut
        winner[t] = idx
        y[t] = sys.h(xt, ut)
        cost[t] = sys.L(xt, ut)
        if t < problem.t_f:
            xt = np.asarray(sys.f(xt, ut), dtype=float)
            if not np.all(np.isfinite(xt)):
                raise ModelBlowUp(t + 1, "state")
    if clamped:
        log.warning("lower input clamp u_min=%g bound on %d of %d steps", policy.u_min, clamped, steps)
    return make_trajectory(problem, x, u, y, cost, tol_active, winner=winner)
