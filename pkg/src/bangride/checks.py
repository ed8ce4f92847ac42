"""Executable checks of the monotonicity hypotheses.

Linear systems are checked exactly from their matrices. Nonlinear systems
can only be probed: :func:`probe_nonlinear_monotonicity` searches for
counterexamples inside a user-supplied box and never proves anything.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import LinearSystem, NonlinearSystem

D_POSITIVE = 1e-12


class DecoupledOutputError(ValueError):
    """The output never responds to the input."""


@dataclass
class AssumptionReport:
    cost_monotone: bool
    dynamics_monotone: bool
    output_strictly_increasing_in_u: bool
    impulse_decreasing: bool | None = None
    first_violation_index: int | None = None
    witnesses: list = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        flags = [self.cost_monotone, self.dynamics_monotone, self.output_strictly_increasing_in_u]
        if self.impulse_decreasing is not None:
            flags.append(self.impulse_decreasing)
        return all(flags)

    def to_dict(self) -> dict:
        return {
            "cost_monotone": self.cost_monotone,
            "dynamics_monotone": self.dynamics_monotone,
            "output_strictly_increasing_in_u": self.output_strictly_increasing_in_u,
            "impulse_decreasing": self.impulse_decreasing,
            "first_violation_index": self.first_violation_index,
            "witnesses": [list(w) for w in self.witnesses],
        }


def impulse_response(sys: LinearSystem, t_f: int) -> np.ndarray:
    """Markov parameters ``g_0 = D``, ``g_t = C A^(t-1) B``, shape (t_f+1, p)."""
    if t_f < 0:
        raise ValueError("t_f must be nonnegative")
    g = np.empty((t_f + 1, sys.p))
    g[0] = sys.D
    v = sys.B.copy()
    for t in range(1, t_f + 1):
        g[t] = sys.C @ v
        v = sys.A @ v
    return g


def is_decreasing(g, t_f: int):
    """Check ``g[t+1, i] <= g[t, i]`` on ``[0, t_f]``.

    Returns ``(ok, t, i)`` where ``(t, i)`` is the first violation in time
    order (smallest output index on ties), or ``(True, None, None)``.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if len(g) < t_f + 1:
        raise ValueError(f"need {t_f + 1} samples, got {len(g)}")
    rising = np.diff(g[: t_f + 1], axis=0) > 0
    bad = np.argwhere(rising)
    if len(bad) == 0:
        return True, None, None
    t, i = bad[0]
    return False, int(t), int(i)


def check_linear_assumptions(sys: LinearSystem, t_f: int) -> AssumptionReport:
    witnesses = []
    for name, arr in (("A", sys.A), ("B", sys.B)):
        for loc in np.argwhere(np.atleast_1d(arr) < 0):
            witnesses.append((f"{name}{list(map(int, loc))}", f"{name} entry {arr[tuple(loc)]:.6g} < 0"))
    dynamics = bool(np.all(sys.A >= 0) and np.all(sys.B >= 0))

    for loc in np.argwhere(sys.E < 0):
        witnesses.append((f"E{list(map(int, loc))}", f"E entry {sys.E[tuple(loc)]:.6g} < 0"))
    if sys.F < 0:
        witnesses.append(("F", f"F = {sys.F:.6g} < 0"))
    cost = bool(np.all(sys.E >= 0) and sys.F >= 0)

    for loc in np.argwhere(sys.D <= D_POSITIVE):
        witnesses.append((f"D{list(map(int, loc))}", f"D entry {sys.D[tuple(loc)]:.6g} not > 0"))
    output = bool(np.all(sys.D > D_POSITIVE))

    ok, t, i = is_decreasing(impulse_response(sys, t_f), t_f)
    if not ok:
        witnesses.append((f"g[{t + 1}][{i}]", f"impulse response rises between t={t} and t={t + 1}"))
    return AssumptionReport(
        cost_monotone=cost,
        dynamics_monotone=dynamics,
        output_strictly_increasing_in_u=output,
        impulse_decreasing=ok,
        first_violation_index=t,
        witnesses=witnesses,
    )


@dataclass(frozen=True)
class Box:
    """Axis-aligned operating region over-approximating the reachable set."""

    x_lo: np.ndarray
    x_hi: np.ndarray
    u_lo: float
    u_hi: float

    def __post_init__(self):
        x_lo = np.atleast_1d(np.asarray(self.x_lo, dtype=float))
        x_hi = np.atleast_1d(np.asarray(self.x_hi, dtype=float))
        if x_lo.shape != x_hi.shape or np.any(x_lo > x_hi) or self.u_lo > self.u_hi:
            raise ValueError("empty or malformed box")
        object.__setattr__(self, "x_lo", x_lo)
        object.__setattr__(self, "x_hi", x_hi)


def probe_nonlinear_monotonicity(
    sys: NonlinearSystem, box: Box, samples: int = 1000, seed: int = 0
) -> AssumptionReport:
    """Randomized falsification of the monotone cost/dynamics/output hypotheses.

    Each trial draws ordered pairs ``x <= x_hat`` and ``u <= u_hat`` from
    the box and tests ``f``, ``L`` for increase in both arguments and ``h``
    for strict increase in u. A True flag only means no counterexample
    turned up.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if box.x_lo.shape != (sys.n,):
        raise ValueError(f"box state dimension {box.x_lo.size} != n={sys.n}")
    rng = np.random.default_rng(seed)
    dyn = out = cost = True
    witnesses = []
    for _ in range(samples):
        x = rng.uniform(box.x_lo, box.x_hi)
        x_hat = rng.uniform(x, box.x_hi)
        u = rng.uniform(box.u_lo, box.u_hi)
        u_hat = rng.uniform(u, box.u_hi)

        fx = np.asarray(sys.f(x, u), dtype=float)
        fx_hat = np.asarray(sys.f(x_hat, u_hat), dtype=float)
        if dyn and np.any(fx_hat < fx):
            dyn = False
            witnesses.append(((x.tolist(), u, x_hat.tolist(), u_hat), "f decreases along an ordered pair"))

        if cost and sys.L(x_hat, u_hat) < sys.L(x, u):
            cost = False
            witnesses.append(((x.tolist(), u, x_hat.tolist(), u_hat), "L decreases along an ordered pair"))

        if out and u_hat > u:
            hx = np.asarray(sys.h(x, u), dtype=float)
            hx_hat = np.asarray(sys.h(x, u_hat), dtype=float)
            if np.any(hx_hat <= hx):
                out = False
                witnesses.append(((x.tolist(), u, u_hat), "h not strictly increasing in u"))
    return AssumptionReport(
        cost_monotone=cost,
        dynamics_monotone=dyn,
        output_strictly_increasing_in_u=out,
        impulse_decreasing=None,
        witnesses=witnesses,
    )


def _output_row(sys: LinearSystem, i: int) -> int:
    if not 1 <= i <= sys.p:
        raise IndexError(f"output index must be in 1..{sys.p}, got {i}")
    return i - 1


def relative_degree(sys: LinearSystem, i: int) -> int:
    """Input-to-output delay of output ``i`` (1-based).

    Returns -1 when the output already has direct feedthrough, otherwise the
    smallest ``d`` in ``[0, n-1]`` with ``C_i A^d B != 0``.
    """
    row = _output_row(sys, i)
    if sys.D[row] != 0:
        return -1
    c = sys.C[row]
    v = sys.B.copy()
    for d in range(sys.n):
        if c @ v != 0:
            return d
        v = sys.A @ v
    raise DecoupledOutputError(f"output {i} is decoupled from the input")


def lift_output(sys: LinearSystem, i: int) -> LinearSystem:
    """Replace output ``i`` by its ``d+1``-step-ahead value.

    The new row is ``C_i A^(d+1)`` with feedthrough ``C_i A^d B``, so the
    lifted output at t equals the original output at ``t + d + 1``.
    """
    d = relative_degree(sys, i)
    if d < 0:
        raise ValueError(f"output {i} already has direct feedthrough; nothing to lift")
    row = _output_row(sys, i)
    c = sys.C[row].copy()
    for _ in range(d):
        c = c @ sys.A
    C = sys.C.copy()
    D = sys.D.copy()
    D[row] = c @ sys.B
    C[row] = c @ sys.A
    return sys.replace(C=C, D=D)


def lift_all(sys: LinearSystem) -> tuple[LinearSystem, list[int]]:
    """Lift every output without feedthrough; returns the system and the delays d."""
    delays = []
    for i in range(1, sys.p + 1):
        d = relative_degree(sys, i)
        if d >= 0:
            sys = lift_output(sys, i)
        delays.append(d)
    return sys, delays
