"""PID-selector: one discrete PID loop per output, combined by a min selector.

Each loop i computes

    u_i(t) = kp*e_i(t) + ki*sum_{k<t} e_i(k) + kd*(e_i(t) - e_i(t-1))
             + kw*sum_{k<t} (u(k) - u_i(k))

with ``e_i = y_max_i - y_i`` and ``e_i(-1) = 0``. The last term is
back-calculation anti-windup: while another loop (or ``u_max``) is selected
it drags the candidate towards the applied input. The plant receives
``u(t) = min(u_max, u_1(t), ..., u_p(t))``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import TOL_ACTIVE, Problem, Trajectory, make_trajectory


class PidDivergenceError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"PID-selector loop diverged at step {step}")
        self.step = step


@dataclass(frozen=True)
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    kw: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(g) for g in (self.kp, self.ki, self.kd, self.kw)):
            raise ValueError("PID gains must be finite")


# gains from an impulse-response based tuning, and from a generic tuner
MTNS_GAINS = PidGains(kp=1.0, ki=4.0, kd=0.5, kw=4.0)
TUNER_GAINS = PidGains(kp=43.23, ki=0.366, kd=0.0, kw=0.366)


@dataclass
class PidLoop:
    gains: PidGains
    integral: float = 0.0
    prev_error: float = 0.0
    windup: float = 0.0
    # optional histories for checkpoint verification
    errors: list | None = field(default=None, repr=False)
    candidates: list | None = field(default=None, repr=False)
    applied: list | None = field(default=None, repr=False)

    def record(self):
        self.errors, self.candidates, self.applied = [], [], []
        return self

    def update(self, e: float, candidate: float, u: float) -> None:
        self.integral += e
        self.prev_error = e
        self.windup += u - candidate
        if self.errors is not None:
            self.errors.append(e)
            self.candidates.append(candidate)
            self.applied.append(u)


def pid_candidate(loop: PidLoop, e: float) -> float:
    """Candidate input from the accumulators up to t-1; the loop is not updated."""
    g = loop.gains
    return g.kp * e + g.ki * loop.integral + g.kd * (e - loop.prev_error) + g.kw * loop.windup


@dataclass
class PidBank:
    loops: list
    u_max: float

    @classmethod
    def from_gains(cls, gains, u_max: float, record: bool = False) -> "PidBank":
        loops = [PidLoop(g) for g in gains]
        if record:
            for lp in loops:
                lp.record()
        return cls(loops, float(u_max))

    def step(self, y, y_max) -> tuple[float, int]:
        return pid_bank_step(self, y, y_max)

    def state_dict(self) -> dict:
        return {
            "u_max": self.u_max,
            "loops": [
                {"gains": asdict(lp.gains), "integral": lp.integral, "prev_error": lp.prev_error, "windup": lp.windup}
                for lp in self.loops
            ],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "PidBank":
        loops = [
            PidLoop(PidGains(**d["gains"]), d["integral"], d["prev_error"], d["windup"]) for d in state["loops"]
        ]
        return cls(loops, state["u_max"])


def pid_bank_step(bank: PidBank, y, y_max) -> tuple[float, int]:
    """One selector step: candidates, min with ``u_max``, then accumulator updates.

    Returns the applied input and the smallest winning index (0 = ``u_max``).
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    y_max = np.asarray(y_max, dtype=float).reshape(-1)
    if y.shape != (len(bank.loops),):
        raise ValueError(f"expected {len(bank.loops)} outputs, got {y.size}")
    errors = y_max - y
    candidates = [pid_candidate(lp, float(e)) for lp, e in zip(bank.loops, errors)]
    u, winner = bank.u_max, 0
    for i, c in enumerate(candidates, start=1):
        if c < u:
            u, winner = c, i
    for lp, e, c in zip(bank.loops, errors, candidates):
        lp.update(float(e), c, u)
    return u, winner


@dataclass(frozen=True)
class PidRun:
    trajectory: Trajectory
    errors: np.ndarray  # loop errors as seen by the controllers, shape (t_f+1, p)
    candidates: np.ndarray
    bank: PidBank = field(repr=False)


def run_pid_selector(problem: Problem, gains, tol_active: float = TOL_ACTIVE, record: bool = False) -> PidRun:
    """Closed-loop PID-selector run.

    The controllers see ``h(x_t, u_{t-1})`` (with ``u_{-1} = 0``): the output
    sampled before the new input is applied, which removes the algebraic
    loop through the feedthrough term. The trajectory records the true
    ``y_t = h(x_t, u_t)``.
    """
    gains = list(gains)
    sys = problem.system
    if len(gains) != sys.p:
        raise ValueError(f"need {sys.p} gain sets, got {len(gains)}")
    bank = PidBank.from_gains(gains, problem.u_max, record=record)
    steps = problem.steps
    x = np.empty((steps, sys.n))
    u = np.empty(steps)
    y = np.empty((steps, sys.p))
    cost = np.empty(steps)
    errs = np.empty((steps, sys.p))
    cands = np.empty((steps, sys.p))
    winner = np.empty(steps, dtype=int)
    xt = problem.x0.copy()
    u_prev = 0.0
    for t in range(steps):
        x[t] = xt
        measured = np.asarray(sys.h(xt, u_prev), dtype=float)
        errs[t] = problem.y_max - measured
        cands[t] = [pid_candidate(lp, float(e)) for lp, e in zip(bank.loops, errs[t])]
        ut, winner[t] = pid_bank_step(bank, measured, problem.y_max)
        if not (math.isfinite(ut) and np.all(np.isfinite(cands[t]))):
            raise PidDivergenceError(t)
        u[t] = ut
        y[t] = sys.h(xt, ut)
        cost[t] = sys.L(xt, ut)
        if t < problem.t_f:
            xt = np.asarray(sys.f(xt, ut), dtype=float)
            if not np.all(np.isfinite(xt)):
                raise PidDivergenceError(t + 1)
        u_prev = ut
    traj = make_trajectory(problem, x, u, y, cost, tol_active, winner=winner)
    return PidRun(traj, errs, cands, bank)
