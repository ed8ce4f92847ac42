"""System models, problems, trajectories and forward simulation.

Constraint indices are shared across the package: index 0 is the input
bound ``u <= u_max`` and index ``i`` in ``1..p`` is the output bound
``y_i <= y_max[i-1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

TOL_ACTIVE = 1e-9


class ModelBlowUp(RuntimeError):
    """A simulated quantity became non-finite."""

    def __init__(self, step: int, what: str):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step
        self.what = what


def _vector(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.reshape(-1)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """``x+ = A x + B u``, ``y = C x + D u``, ``L = E x + F u`` with scalar u.

    B, D and E are stored as flat vectors of length n, p and n.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = _vector(self.B, "B")
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = _vector(self.D, "D")
        E = _vector(self.E, "E")
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape != (n,):
            raise ValueError(f"B must have length {n}, got {B.shape}")
        if C.ndim != 2 or C.shape[1] != n or C.shape[0] < 1:
            raise ValueError(f"C must be p x {n}, got {C.shape}")
        if D.shape != (C.shape[0],):
            raise ValueError(f"D must have length {C.shape[0]}, got {D.shape}")
        if E.shape != (n,):
            raise ValueError(f"E must have length {n}, got {E.shape}")
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D), ("E", E)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "F", float(self.F))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def f(self, x, u: float) -> np.ndarray:
        return self.A @ x + self.B * u

    def h(self, x, u: float) -> np.ndarray:
        return self.C @ x + self.D * u

    def L(self, x, u: float) -> float:
        return float(self.E @ x + self.F * u)

    def replace(self, **changes) -> "LinearSystem":
        fields = dict(A=self.A, B=self.B, C=self.C, D=self.D, E=self.E, F=self.F)
        fields.update(changes)
        return LinearSystem(**fields)

    def as_nonlinear(self) -> "NonlinearSystem":
        """Wrap the matrices as callables (used for consistency checks)."""
        return NonlinearSystem(f=self.f, h=self.h, L=self.L, n=self.n, p=self.p)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
            "E": self.E.tolist(),
            "F": self.F,
        }


@dataclass(frozen=True, eq=False)
class NonlinearSystem:
    f: Callable[[np.ndarray, float], np.ndarray]
    h: Callable[[np.ndarray, float], np.ndarray]
    L: Callable[[np.ndarray, float], float]
    n: int
    p: int

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")


SystemModel = Union[LinearSystem, NonlinearSystem]


@dataclass(frozen=True, eq=False)
class Problem:
    system: SystemModel
    x0: np.ndarray
    t_f: int
    u_max: float
    y_max: np.ndarray

    def __post_init__(self):
        x0 = _vector(self.x0, "x0")
        y_max = _vector(self.y_max, "y_max")
        if x0.shape != (self.system.n,):
            raise ValueError(f"x0 must have length {self.system.n}, got {x0.shape}")
        if y_max.shape != (self.system.p,):
            raise ValueError(f"y_max must have length {self.system.p}, got {y_max.shape}")
        if int(self.t_f) != self.t_f or self.t_f < 0:
            raise ValueError(f"t_f must be a nonnegative integer, got {self.t_f}")
        if not math.isfinite(self.u_max) or not np.all(np.isfinite(y_max)):
            raise ValueError("u_max and y_max must be finite")
        x0.flags.writeable = False
        y_max.flags.writeable = False
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "y_max", y_max)
        object.__setattr__(self, "t_f", int(self.t_f))
        object.__setattr__(self, "u_max", float(self.u_max))

    @property
    def steps(self) -> int:
        return self.t_f + 1

    def bounds(self) -> np.ndarray:
        """Bounds for all constraints, input first."""
        return np.concatenate(([self.u_max], self.y_max))

    def with_horizon(self, t_f: int) -> "Problem":
        return Problem(self.system, self.x0, t_f, self.u_max, self.y_max)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-indexed record of a run, ``t = 0..t_f``.

    ``active[t]`` holds the constraint indices that hold with equality (to
    tolerance) at step t. ``winner`` is the selector index per step for
    closed-loop runs and None for open-loop simulation.
    """

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    J: float
    active: tuple
    cost: np.ndarray = field(repr=False, default=None)
    winner: np.ndarray | None = field(repr=False, default=None)

    @property
    def t_f(self) -> int:
        return len(self.u) - 1

    def active_index(self) -> np.ndarray:
        """Smallest active constraint index per step, -1 when none is active."""
        return np.array([min(s) if s else -1 for s in self.active], dtype=int)


def active_sets(problem: Problem, u, y, tol_active: float = TOL_ACTIVE) -> tuple:
    """Active constraint sets; bound b counts as active within tol*(1+|b|)."""
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float).reshape(len(u), -1)
    values = np.column_stack((u, y))
    bounds = problem.bounds()
    hit = bounds - values <= tol_active * (1.0 + np.abs(bounds))
    return tuple(frozenset(np.flatnonzero(row).tolist()) for row in hit)


def make_trajectory(problem: Problem, x, u, y, cost, tol_active=TOL_ACTIVE, winner=None) -> Trajectory:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    cost = np.asarray(cost, dtype=float)
    for arr in (x, u, y, cost):
        arr.flags.writeable = False
    if winner is not None:
        winner = np.asarray(winner, dtype=int)
        winner.flags.writeable = False
    return Trajectory(
        x=x,
        u=u,
        y=y,
        J=float(math.fsum(cost)),
        active=active_sets(problem, u, y, tol_active),
        cost=cost,
        winner=winner,
    )


def simulate(problem: Problem, inputs: Sequence[float], tol_active: float = TOL_ACTIVE) -> Trajectory:
    """Run the open-loop recursion for ``t_f + 1`` inputs.

    Constraints are not enforced; use :func:`check_feasible` on the result.
    """
    u = np.asarray(inputs, dtype=float).reshape(-1)
    if u.shape != (problem.steps,):
        raise ValueError(f"expected {problem.steps} inputs for t_f={problem.t_f}, got {u.size}")
    if not np.all(np.isfinite(u)):
        raise ValueError("inputs must be finite")
    sys = problem.system
    n, p, steps = sys.n, sys.p, problem.steps
    x = np.empty((steps, n))
    y = np.empty((steps, p))
    cost = np.empty(steps)
    xt = problem.x0.copy()
    for t in range(steps):
        x[t] = xt
        yt = np.asarray(sys.h(xt, u[t]), dtype=float).reshape(-1)
        if yt.shape != (p,):
            raise ValueError(f"h returned {yt.size} outputs, expected {p}")
        y[t] = yt
        cost[t] = sys.L(xt, u[t])
        if not (np.all(np.isfinite(yt)) and math.isfinite(cost[t])):
            raise ModelBlowUp(t, "output or cost")
        if t < problem.t_f:
            xt = np.asarray(sys.f(xt, u[t]), dtype=float).reshape(-1)
            if not np.all(np.isfinite(xt)):
                raise ModelBlowUp(t + 1, "state")
    return make_trajectory(problem, x, u, y, cost, tol_active)


def evaluate_cost(problem: Problem, trajectory: Trajectory) -> float:
    """Recompute the accumulated running cost along a recorded trajectory."""
    if trajectory.x.shape != (problem.steps, problem.system.n) or trajectory.u.shape != (problem.steps,):
        raise ValueError("trajectory does not match problem dimensions")
    L = problem.system.L
    return float(math.fsum(L(xt, ut) for xt, ut in zip(trajectory.x, trajectory.u)))


@dataclass(frozen=True)
class Violation:
    t: int
    index: int
    amount: float


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple
    max_violation: float
    per_constraint: tuple

    @property
    def feasible(self) -> bool:
        return not self.violations

    def steps(self) -> list[int]:
        return sorted({v.t for v in self.violations})


def check_feasible(problem: Problem, trajectory: Trajectory, tol: float = 0.0) -> FeasibilityReport:
    """List every constraint exceeded by more than ``tol``.

    ``max_violation`` is the largest positive excess over the raw bound
    (0 when everything holds), regardless of ``tol``.
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    values = np.column_stack((trajectory.u, trajectory.y))
    excess = values - problem.bounds()
    worst = np.maximum(excess, 0.0).max(axis=0)
    ts, idx = np.nonzero(excess > tol)
    violations = tuple(Violation(int(t), int(i), float(excess[t, i])) for t, i in zip(ts, idx))
    return FeasibilityReport(
        violations=violations,
        max_violation=float(worst.max()),
        per_constraint=tuple(float(w) for w in worst),
    )
