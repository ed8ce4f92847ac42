"""Scenario files, trace/metrics artifacts and run post-processing."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import battery
from .core import TOL_ACTIVE, LinearSystem, Problem, Trajectory, simulate
from .oracle import GridSpec, counterexample_problem
from .pid import PidGains

MODELS = ("ecm", "spm", "linear", "counterexample")
STRATEGIES = ("selector", "pid", "greedy", "oracle")

_PARAM_KEYS = {
    "ecm": {"R0", "R1", "R2", "C1", "C2", "Q", "Q_Ah", "beta"},
    "spm": {"a1", "a2", "b1", "b2", "b3", "c1", "c2", "c3"},
    "linear": {"A", "B", "C", "D", "E", "F"},
    "counterexample": {"A", "B", "C", "D"},
}
_GRID_KEYS = {"u_lo", "u_hi", "points", "include"}
_OUTPUT_KEYS = {"trace", "metrics"}


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field."""


def _finite(value, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite")
    return v


def _check_keys(block: dict, allowed: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


@dataclass
class Scenario:
    model: str
    t_f: int
    strategy: str = "selector"
    parameters: dict = field(default_factory=dict)
    t_s: float = 1.0
    u_max: float | None = None
    y_max: list | None = None
    x0: list | None = None
    gains: list | None = None
    grid: dict | None = None
    lookahead: int = 0
    output: dict = field(default_factory=lambda: {"trace": "trace.csv", "metrics": "metrics.json"})
    seed: int = 0
    tol_active: float = TOL_ACTIVE
    hold: int = 3

    KEYS = (
        "model", "t_f", "strategy", "parameters", "t_s", "u_max", "y_max", "x0",
        "gains", "grid", "lookahead", "output", "seed", "tol_active", "hold",
    )  # fmt: skip

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        _check_keys(raw, set(cls.KEYS), "scenario")
        for key in ("model", "t_f"):
            if key not in raw:
                raise ConfigError(f"{key}: required")
        scn = cls(model=raw["model"], t_f=raw["t_f"])
        for key in cls.KEYS:
            if key in raw:
                setattr(scn, key, raw[key])
        scn.validate()
        return scn

    def validate(self):
        if self.model not in MODELS:
            raise ConfigError(f"model: {self.model!r} not one of {', '.join(MODELS)}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy: {self.strategy!r} not one of {', '.join(STRATEGIES)}")
        if isinstance(self.t_f, bool) or not isinstance(self.t_f, int) or self.t_f < 0:
            raise ConfigError("t_f: must be a nonnegative integer")
        self.t_s = _finite(self.t_s, "t_s")
        if self.t_s <= 0:
            raise ConfigError("t_s: must be positive")
        if self.u_max is not None:
            self.u_max = _finite(self.u_max, "u_max")
        if self.y_max is not None:
            if not isinstance(self.y_max, list):
                self.y_max = [self.y_max]
            self.y_max = [_finite(v, f"y_max[{i}]") for i, v in enumerate(self.y_max)]
        if self.x0 is not None:
            self.x0 = [_finite(v, f"x0[{i}]") for i, v in enumerate(self.x0)]
        _check_keys(self.parameters, _PARAM_KEYS[self.model], "parameters")
        _check_keys(self.output, _OUTPUT_KEYS, "output")
        self.tol_active = _finite(self.tol_active, "tol_active")
        if self.tol_active < 0:
            raise ConfigError("tol_active: must be nonnegative")
        for key in ("seed", "lookahead", "hold"):
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"{key}: must be a nonnegative integer")
        if self.hold < 1:
            raise ConfigError("hold: must be >= 1")
        if self.model == "counterexample":
            if self.t_f != 1:
                raise ConfigError("t_f: the counterexample instance has t_f = 1")
            if self.y_max is not None:
                raise ConfigError("y_max: derived as D*u_max for the counterexample; do not set it")
        elif self.u_max is None or self.y_max is None:
            raise ConfigError("u_max: required" if self.u_max is None else "y_max: required")
        if self.strategy == "pid":
            if not isinstance(self.gains, list) or not self.gains:
                raise ConfigError("gains: required (one object per output) for the pid strategy")
            for i, g in enumerate(self.gains):
                _check_keys(g, {"kp", "ki", "kd", "kw"}, f"gains[{i}]")
                for k, v in g.items():
                    _finite(v, f"gains[{i}].{k}")
        if self.grid is not None:
            _check_keys(self.grid, _GRID_KEYS, "grid")
            for k in ("u_lo", "u_hi", "points"):
                if k not in self.grid:
                    raise ConfigError(f"grid.{k}: required")
        if self.strategy == "oracle" and self.grid is None:
            raise ConfigError("grid: required for the oracle strategy")
        # numeric parameter checks happen in the model builders
        self.build_problem()

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.KEYS}

    def pid_gains(self) -> list[PidGains]:
        return [PidGains(**{k: float(v) for k, v in g.items()}) for g in self.gains]

    def grid_spec(self, include_extra=()) -> GridSpec:
        g = self.grid
        try:
            return GridSpec(
                u_lo=_finite(g["u_lo"], "grid.u_lo"),
                u_hi=_finite(g["u_hi"], "grid.u_hi"),
                points=int(g["points"]),
                t_f=self.t_f,
                include=tuple(g.get("include", ())) + tuple(include_extra),
            )
        except ValueError as exc:
            raise ConfigError(f"grid: {exc}") from None

    def build_problem(self) -> Problem:
        prm = self.parameters
        try:
            if self.model == "ecm":
                params = battery.EcmParams.from_dict(prm)
                sys = battery.build_ecm(params, self.t_s).system
            elif self.model == "spm":
                sys = battery.build_spm(battery.SpmParams(**prm), self.t_s).system
            elif self.model == "linear":
                sys = LinearSystem(**prm)
            else:
                kw = {k: float(v) if not isinstance(v, list) else v for k, v in prm.items()}
                u_max = 1.0 if self.u_max is None else self.u_max
                return counterexample_problem(**kw, u_max=u_max)
        except TypeError as exc:
            raise ConfigError(f"parameters: {exc}") from None
        except ValueError as exc:
            msg = str(exc)
            name = msg.split()[0] if msg else ""
            raise ConfigError(f"parameters.{name}: {msg}" if name in prm else f"parameters: {msg}") from None
        x0 = np.zeros(sys.n) if self.x0 is None else self.x0
        try:
            return Problem(sys, x0, self.t_f, self.u_max, self.y_max)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def load_scenario(path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return Scenario.from_dict(raw)


def dump_scenario(scn: Scenario) -> str:
    return json.dumps(scn.to_dict(), indent=2, sort_keys=True) + "\n"


# --- switches -----------------------------------------------------------------


@dataclass(frozen=True)
class SwitchEvent:
    t: int
    time_s: float
    from_index: int
    to_index: int

    def to_dict(self) -> dict:
        return {"t": self.t, "time_s": self.time_s, "from": self.from_index, "to": self.to_index}


def detect_switches(source, hold: int = 3, t_s: float = 1.0) -> list[SwitchEvent]:
    """Debounced changes of the smallest active constraint index.

    ``source`` is a Trajectory or a sequence of per-step indices where -1
    means no active constraint. A new index counts only after it has held
    for ``hold`` consecutive steps; the event is stamped at the first of
    those steps. Steps without an active constraint break a pending run but
    keep the current index.
    """
    if hold < 1:
        raise ValueError("hold must be >= 1")
    idx = source.active_index() if isinstance(source, Trajectory) else np.asarray(source, dtype=int)
    events = []
    current = None
    run_val, run_start, run_len = None, 0, 0
    for t, v in enumerate(idx.tolist()):
        if v < 0:
            run_val, run_len = None, 0
            continue
        if current is None:
            current = v
            continue
        if v == current:
            run_val, run_len = None, 0
            continue
        if v == run_val:
            run_len += 1
        else:
            run_val, run_start, run_len = v, t, 1
        if run_len >= hold:
            events.append(SwitchEvent(run_start, run_start * t_s, current, v))
            current, run_val, run_len = v, None, 0
    return events


# --- metrics ------------------------------------------------------------------


@dataclass
class RunMetrics:
    J: float
    max_violation: list
    switches: list
    optimality_gap: dict
    feasible: bool
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        # wall time is left out so identical runs write identical files
        d = {
            "J": self.J,
            "max_violation": self.max_violation,
            "switches": [s.to_dict() for s in self.switches],
            "optimality_gap": self.optimality_gap,
            "feasible": self.feasible,
        }
        d.update(self.extra)
        return d


def step_gaps(problem: Problem, traj: Trajectory) -> np.ndarray:
    """``|bound_i - value_i|`` on the selected (or smallest active) constraint; NaN if none."""
    idx = traj.winner if traj.winner is not None else traj.active_index()
    values = np.column_stack((traj.u, traj.y))
    bounds = problem.bounds()
    gaps = np.full(len(idx), np.nan)
    ok = idx >= 0
    rows = np.flatnonzero(ok)
    gaps[rows] = np.abs(bounds[idx[rows]] - values[rows, idx[rows]])
    return gaps


def violation_flags(problem: Problem, traj: Trajectory, tol: float):
    values = np.column_stack((traj.u, traj.y))
    bounds = problem.bounds()
    excess = np.maximum(values - bounds, 0.0).max(axis=0)
    feasible = bool(np.all(excess <= tol * (1.0 + np.abs(bounds))))
    return [float(v) for v in excess], feasible


def compute_metrics(problem: Problem, traj: Trajectory, t_s: float, tol: float, hold: int) -> RunMetrics:
    excess, feasible = violation_flags(problem, traj, tol)
    gaps = step_gaps(problem, traj)
    defined = gaps[~np.isnan(gaps)]
    gap = {
        "max": float(defined.max()) if defined.size else None,
        "mean": float(defined.mean()) if defined.size else None,
        "final": None if np.isnan(gaps[-1]) else float(gaps[-1]),
        "steps": int(defined.size),
    }
    return RunMetrics(
        J=traj.J,
        max_violation=excess,
        switches=detect_switches(traj, hold, t_s),
        optimality_gap=gap,
        feasible=feasible,
    )


def write_metrics(path, metrics: RunMetrics):
    Path(path).write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")


# --- traces -------------------------------------------------------------------


def trace_header(n: int, p: int) -> list[str]:
    return (
        ["t", "time_s", "u"]
        + [f"y{i}" for i in range(1, p + 1)]
        + [f"x{i}" for i in range(1, n + 1)]
        + ["active_idx", "cost_cum"]
    )


def write_trace(path, traj: Trajectory, t_s: float):
    n, p = traj.x.shape[1], traj.y.shape[1]
    active = traj.active_index()
    cum = np.cumsum(traj.cost)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(n, p))
        for t in range(len(traj.u)):
            w.writerow(
                [t, repr(t * t_s), repr(float(traj.u[t]))]
                + [repr(float(v)) for v in traj.y[t]]
                + [repr(float(v)) for v in traj.x[t]]
                + [int(active[t]), repr(float(cum[t]))]
            )


@dataclass(frozen=True)
class TraceData:
    t: np.ndarray
    time_s: np.ndarray
    u: np.ndarray
    y: np.ndarray
    x: np.ndarray
    active_idx: np.ndarray
    cost_cum: np.ndarray

    @property
    def t_s(self) -> float:
        return float(self.time_s[1] - self.time_s[0]) if len(self.time_s) > 1 else 1.0


def read_trace(path) -> TraceData:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty trace")
    header, body = rows[0], rows[1:]
    ycols = [i for i, h in enumerate(header) if h.startswith("y")]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if header[:3] != ["t", "time_s", "u"] or header[-2:] != ["active_idx", "cost_cum"]:
        raise ConfigError(f"{path}: unexpected trace header")
    if header != trace_header(len(xcols), len(ycols)):
        raise ConfigError(f"{path}: unexpected trace header")
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    return TraceData(
        t=data[:, 0].astype(int),
        time_s=data[:, 1],
        u=data[:, 2],
        y=data[:, ycols],
        x=data[:, xcols],
        active_idx=data[:, -2].astype(int),
        cost_cum=data[:, -1],
    )


def resimulate_trace(problem: Problem, trace: TraceData) -> Trajectory:
    return simulate(problem, trace.u)
