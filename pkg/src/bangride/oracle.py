"""Ground-truth machinery for cross-checking the selector.

Everything here takes a different computational route from
:mod:`bangride.selector`: exhaustive enumeration of open-loop input
sequences on a grid, a greedy one-step maximizer that only evaluates ``h``,
and the closed-form two-step counterexample.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import TOL_ACTIVE, LinearSystem, Problem, Trajectory, make_trajectory, simulate

ENUMERATION_BUDGET = 2_000_000
_CHUNK = 200_000


class BudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Per-step input grid: ``points`` equispaced values on ``[u_lo, u_hi]``.

    ``include`` adds extra values to every step; ``values`` (one sequence per
    step) replaces the equispaced grid entirely.
    """

    u_lo: float
    u_hi: float
    points: int
    t_f: int
    include: tuple = ()
    values: tuple | None = None

    def __post_init__(self):
        if self.values is not None:
            if len(self.values) != self.t_f + 1:
                raise ValueError(f"values needs {self.t_f + 1} per-step grids")
            object.__setattr__(self, "values", tuple(tuple(float(v) for v in vs) for vs in self.values))
            return
        if self.points < 2:
            raise ValueError("points must be >= 2")
        if not self.u_lo < self.u_hi:
            raise ValueError("u_lo must be < u_hi")
        object.__setattr__(self, "include", tuple(float(v) for v in self.include))

    def levels(self, t: int) -> np.ndarray:
        if self.values is not None:
            return np.unique(np.asarray(self.values[t], dtype=float))
        base = np.linspace(self.u_lo, self.u_hi, self.points)
        return np.unique(np.concatenate((base, self.include)))

    def size(self) -> int:
        return math.prod(len(self.levels(t)) for t in range(self.t_f + 1))


@dataclass(frozen=True)
class OracleResult:
    inputs: np.ndarray | None
    cost: float
    feasible_count: int
    evaluated: int


def _better(cost: float, seq: tuple, best_cost: float, best_seq) -> bool:
    # max cost, ties broken by the lexicographically largest sequence
    if best_seq is None or cost > best_cost:
        return True
    return cost == best_cost and seq > best_seq


def _linear_batch(problem: Problem, U: np.ndarray, tol: float):
    """Simulate a block of input sequences (rows of U) for a linear system."""
    sys: LinearSystem = problem.system
    m = U.shape[0]
    X = np.broadcast_to(problem.x0, (m, sys.n)).copy()
    J = np.zeros(m)
    ok = np.all(U <= problem.u_max + tol, axis=1)
    for t in range(problem.steps):
        ut = U[:, t]
        Y = X @ sys.C.T + np.outer(ut, sys.D)
        ok &= np.all(Y <= problem.y_max + tol, axis=1)
        J += X @ sys.E + sys.F * ut
        X = X @ sys.A.T + np.outer(ut, sys.B)
    return ok, J


def grid_oracle(
    problem: Problem, grid: GridSpec, tol: float = 0.0, budget: int = ENUMERATION_BUDGET
) -> OracleResult:
    """Exhaustive search for the best feasible input sequence on the grid.

    Every sequence in the Cartesian product of the per-step grids is
    simulated; among those satisfying all constraints to ``tol`` the one with
    the largest cost wins.
    """
    if grid.t_f != problem.t_f:
        raise ValueError(f"grid horizon {grid.t_f} != problem horizon {problem.t_f}")
    levels = [grid.levels(t) for t in range(problem.steps)]
    total = math.prod(len(lv) for lv in levels)
    if total > budget:
        raise BudgetExceeded(f"{total} sequences exceed the enumeration budget {budget}")

    best_cost, best_seq, feasible = -math.inf, None, 0
    product = itertools.product(*levels)
    if isinstance(problem.system, LinearSystem):
        while True:
            block = np.array(list(itertools.islice(product, _CHUNK)), dtype=float)
            if block.size == 0:
                break
            block = block.reshape(-1, problem.steps)
            ok, J = _linear_batch(problem, block, tol)
            feasible += int(ok.sum())
            if not ok.any():
                continue
            Jf = np.where(ok, J, -np.inf)
            top = Jf.max()
            rows = block[Jf == top]
            # lexsort's last key is primary, so feed columns reversed
            seq = tuple(rows[np.lexsort(rows.T[::-1])[-1]].tolist())
            if _better(float(top), seq, best_cost, best_seq):
                best_cost, best_seq = float(top), seq
    else:
        bounds = problem.bounds()
        for seq in product:
            traj = simulate(problem, seq)
            vals = np.column_stack((traj.u, traj.y))
            if np.any(vals > bounds + tol):
                continue
            feasible += 1
            if _better(traj.J, seq, best_cost, best_seq):
                best_cost, best_seq = traj.J, seq
    inputs = None if best_seq is None else np.array(best_seq)
    return OracleResult(inputs, best_cost, feasible, total)


def _largest_feasible(pred, u_hi: float, tol: float = 1e-13) -> float:
    """Largest u <= u_hi with pred(u) true, for a predicate monotone in u."""
    if pred(u_hi):
        return u_hi
    lo, step = u_hi, 1.0
    while True:
        lo = u_hi - step
        if pred(lo):
            break
        step *= 2.0
        if step > 1e12 * max(1.0, abs(u_hi)):
            raise ValueError("no feasible input found below u_max")
    hi = lo + step / 2.0 if step > 1.0 else u_hi
    while hi - lo > tol * (1.0 + abs(lo)):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def greedy_maximal(
    problem: Problem, lookahead: int = 0, u_floor: float = 0.0, tol_active: float = TOL_ACTIVE
) -> Trajectory:
    """Pick, step by step, the largest input that keeps the constraints satisfied.

    With ``lookahead = 0`` and an output affine in u, the per-constraint
    limit is read off two evaluations of ``h`` (value and slope); otherwise
    the limit is found by bisection on joint feasibility. ``lookahead = k``
    also requires the next k steps to stay feasible when the inputs there are
    held at ``u_floor``.
    """
    if lookahead < 0:
        raise ValueError("lookahead must be >= 0")
    sys = problem.system
    affine = isinstance(sys, LinearSystem) and lookahead == 0
    steps = problem.steps
    x = np.empty((steps, sys.n))
    u = np.empty(steps)
    y = np.empty((steps, sys.p))
    cost = np.empty(steps)
    xt = problem.x0.copy()

    def feasible_from(state, first: float, horizon: int) -> bool:
        s, v = state, first
        for k in range(horizon + 1):
            if np.any(np.asarray(sys.h(s, v)) > problem.y_max):
                return False
            s = sys.f(s, v)
            v = u_floor
        return True

    for t in range(steps):
        x[t] = xt
        if affine:
            y0 = np.asarray(sys.h(xt, 0.0), dtype=float)
            slope = np.asarray(sys.h(xt, 1.0), dtype=float) - y0
            limits = [(problem.y_max[i] - y0[i]) / slope[i] for i in range(sys.p)]
            ut = min([problem.u_max] + limits)
        else:
            horizon = min(lookahead, problem.t_f - t)
            ut = _largest_feasible(lambda v: feasible_from(xt, v, horizon), problem.u_max)
        u[t] = ut
        y[t] = sys.h(xt, ut)
        cost[t] = sys.L(xt, ut)
        if t < problem.t_f:
            xt = np.asarray(sys.f(xt, ut), dtype=float)
    return make_trajectory(problem, x, u, y, cost, tol_active)


def verify_bangride(trajectory: Trajectory, problem: Problem, tol: float = 1e-9):
    """True iff every step has ``u >= u_max - tol`` or some ``y_i >= y_max_i - tol``.

    Returns ``(ok, first_inactive_step)``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    bang = trajectory.u >= problem.u_max - tol
    ride = np.any(trajectory.y >= problem.y_max - tol, axis=1)
    idle = np.flatnonzero(~(bang | ride))
    if idle.size:
        return False, int(idle[0])
    return True, None


def counterexample_gap(CB, D, u_max: float):
    """Costs of the bang-ride sequence and of ``{0, u_max}`` on the two-step instance.

    ``gamma = min_i (D_i - CB_i) / D_i``; the bang-ride sequence is
    ``{u_max, gamma*u_max}`` with cost ``(1 + gamma) u_max`` against
    ``u_max`` for the alternative, so bang-ride loses whenever gamma < 0.
    """
    CB = np.atleast_1d(np.asarray(CB, dtype=float))
    D = np.atleast_1d(np.asarray(D, dtype=float))
    if np.any(D <= 0):
        raise ValueError("D must be positive entrywise")
    if not u_max > 0:
        raise ValueError("u_max must be positive")
    gamma = float(np.min((D - CB) / D))
    return gamma, (1.0 + gamma) * u_max, float(u_max)


def counterexample_problem(C=2.0, D=1.0, A=1.0, B=1.0, u_max: float = 1.0) -> Problem:
    """Two-step instance with ``x0 = 0``, ``E = 0``, ``F = 1`` and ``y_max = D u_max``.

    Scalar arguments build a single-state system; vectors for C and D give
    p outputs sharing the same state.
    """
    C = np.atleast_1d(np.asarray(C, dtype=float)).reshape(-1, 1)
    D = np.atleast_1d(np.asarray(D, dtype=float))
    sys = LinearSystem(A=[[A]], B=[B], C=C, D=D, E=[0.0], F=1.0)
    return Problem(sys, x0=[0.0], t_f=1, u_max=u_max, y_max=D * u_max)
