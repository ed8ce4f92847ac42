"""Discrete-time battery models for the fast-charging case studies.

Units are SI throughout (ohm, farad, ampere, volt, second); capacity given
in Ah is converted at the boundary.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .checks import check_linear_assumptions, lift_output
from .core import LinearSystem, Problem

AH = 3600.0


def _require_positive(obj):
    for f in fields(obj):
        v = getattr(obj, f.name)
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{f.name} must be positive and finite, got {v}")


@dataclass(frozen=True)
class SpmParams:
    """Single-particle model in charging-current sign convention.

    ``x1' = -a1 x1 + b1 u``, ``x2' = -a2 x2 + b2 u``, ``x3' = b3 u``,
    ``y = c1 x1 + c2 x2 + c3 x3`` (surface concentration).
    """

    a1: float
    a2: float
    b1: float
    b2: float
    b3: float
    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        _require_positive(self)


@dataclass(frozen=True)
class EcmParams:
    """Two-RC equivalent circuit; ``Q`` in A*s, ``beta`` in V per unit charge state."""

    R0: float
    R1: float
    R2: float
    C1: float
    C2: float
    Q: float
    beta: float

    def __post_init__(self):
        _require_positive(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EcmParams":
        d = dict(d)
        if "Q_Ah" in d:
            if "Q" in d:
                raise ValueError("give either Q (A*s) or Q_Ah, not both")
            d["Q"] = float(d.pop("Q_Ah")) * AH
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


# Parameters of the ECM fast-charging experiment (R in ohm, C in F, Q = 50 Ah).
REFERENCE_ECM = EcmParams(R0=1e-3, R1=1.5e-3, R2=1e-3, C1=2000e3, C2=500e3, Q=50 * AH, beta=0.1)
REFERENCE_ECM_TS = 0.05
REFERENCE_ECM_U_MAX = 100.0
REFERENCE_ECM_Y_MAX = 0.2
# horizon not given with the experiment; 3000 s covers the switch and the riding phase
REFERENCE_ECM_T_F = 60_000


@dataclass(frozen=True)
class SpmModel:
    system: LinearSystem  # lifted: y_t = C A x_t + C B u_t
    raw: LinearSystem  # original output, no feedthrough
    t_s: float
    ts_bound: float
    ts_valid: bool
    impulse_decreasing: bool | None


def build_spm(params: SpmParams, t_s: float, t_f: int | None = None) -> SpmModel:
    """Euler-discretized SPM with its output lifted one step ahead.

    ``ts_valid`` reports ``t_s <= 1/max(a1, a2)`` (nonnegative diagonal);
    ``impulse_decreasing`` is evaluated on ``[0, t_f]`` when a horizon is given.
    """
    if not t_s > 0:
        raise ValueError("t_s must be positive")
    p = params
    raw = LinearSystem(
        A=np.diag([1 - p.a1 * t_s, 1 - p.a2 * t_s, 1.0]),
        B=[p.b1 * t_s, p.b2 * t_s, p.b3 * t_s],
        C=[[p.c1, p.c2, p.c3]],
        D=[0.0],
        E=[0.0, 0.0, 1.0],
        F=0.0,
    )
    lifted = lift_output(raw, 1)
    bound = 1.0 / max(p.a1, p.a2)
    decreasing = None
    if t_f is not None:
        decreasing = check_linear_assumptions(lifted, t_f).impulse_decreasing
    return SpmModel(lifted, raw, t_s, bound, bool(t_s <= bound), decreasing)


@dataclass(frozen=True)
class EcmModel:
    system: LinearSystem
    t_s: float
    ts1: float  # largest t_s keeping the dynamics monotone
    ts2: float  # largest t_s with g_0 >= g_1

    @property
    def ts_valid(self) -> bool:
        return self.t_s <= min(self.ts1, self.ts2)


def build_ecm(params: EcmParams, t_s: float) -> EcmModel:
    """Forward-Euler ECM; output is the over-potential, cost is the charge state."""
    if not t_s > 0:
        raise ValueError("t_s must be positive")
    p = params
    sys = LinearSystem(
        A=np.diag([1 - t_s / (p.R1 * p.C1), 1 - t_s / (p.R2 * p.C2), 1.0]),
        B=[t_s / p.C1, t_s / p.C2, t_s / p.Q],
        C=[[1.0, 1.0, p.beta]],
        D=[p.R0],
        E=[0.0, 0.0, 1.0],
        F=0.0,
    )
    ts1 = min(p.R1 * p.C1, p.R2 * p.C2)
    ts2 = p.R0 / (1 / p.C1 + 1 / p.C2 + p.beta / p.Q)
    return EcmModel(sys, t_s, ts1, ts2)


def ecm_problem(params: EcmParams, t_s: float, t_f: int, u_max: float, y_max: float, x0=None) -> Problem:
    model = build_ecm(params, t_s)
    x0 = np.zeros(3) if x0 is None else x0
    return Problem(model.system, x0, t_f, u_max, [y_max])


def paper_ecm_scenario() -> Problem:
    return ecm_problem(REFERENCE_ECM, REFERENCE_ECM_TS, REFERENCE_ECM_T_F, REFERENCE_ECM_U_MAX, REFERENCE_ECM_Y_MAX)
