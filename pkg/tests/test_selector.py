import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bangride.checks import check_linear_assumptions
from bangride.core import LinearSystem, NonlinearSystem, Problem
from bangride.oracle import verify_bangride
from bangride.selector import (
    NonMonotoneOutputError,
    RootSolverConfig,
    SelectorPolicy,
    UnreachableBoundError,
    run_selector,
    selector_gain_linear,
    selector_policy,
    solve_constraint_equation,
)


def cubic():
    return NonlinearSystem(f=lambda x, u: x, h=lambda x, u: np.array([x[0] + u**3]), L=lambda x, u: float(x[0]), n=1, p=1)


def test_linear_gain_back_substitution():
    sys = LinearSystem(A=np.eye(2), B=[1, 1], C=[[1, 1]], D=[0.5], E=[0, 0])
    x = np.array([0.4, 0.2])
    k = selector_gain_linear(sys, x, 1, [1.0])
    assert k == pytest.approx(0.8, rel=1e-15)
    assert sys.h(x, k)[0] == pytest.approx(1.0, rel=1e-15)


def test_linear_gain_on_boundary_is_zero():
    sys = LinearSystem(A=np.eye(2), B=[1, 1], C=[[1, 1]], D=[0.5], E=[0, 0])
    assert selector_gain_linear(sys, np.array([0.5, 0.5]), 1, [1.0]) == 0.0


def test_linear_gain_needs_positive_feedthrough():
    sys = LinearSystem(A=np.eye(1), B=[1], C=[[1]], D=[0.0], E=[0])
    with pytest.raises(ValueError):
        selector_gain_linear(sys, np.zeros(1), 1, [1.0])


def test_ecm_voltage_law_at_rest(ecm_problem):
    assert selector_gain_linear(ecm_problem.system, np.zeros(3), 1, ecm_problem.y_max) == pytest.approx(200.0)


def test_root_matches_linear_gain():
    sys = LinearSystem(A=np.eye(2), B=[1, 1], C=[[1, 2]], D=[0.25], E=[0, 0])
    for x in (np.array([0.4, 0.2]), np.array([-3.0, 1.0]), np.array([10.0, 5.0])):
        exact = selector_gain_linear(sys, x, 1, [1.0])
        root = solve_constraint_equation(sys.as_nonlinear(), x, 1, [1.0])
        assert root == pytest.approx(exact, rel=1e-9, abs=1e-9)
        assert sys.h(x, root)[0] <= 1.0


def test_cube_root():
    u = solve_constraint_equation(cubic(), np.array([1.0]), 1, [9.0])
    assert u == pytest.approx(2.0, rel=1e-9)
    assert abs(1 + u**3 - 9) <= 1e-10 * 10


def test_bounded_output_gives_infinite_gain():
    sys = NonlinearSystem(f=lambda x, u: x, h=lambda x, u: np.array([x[0] + math.tanh(u)]), L=lambda x, u: 0.0, n=1, p=1)
    assert solve_constraint_equation(sys, np.zeros(1), 1, [2.0]) == math.inf


def test_decreasing_output_detected():
    sys = NonlinearSystem(f=lambda x, u: x, h=lambda x, u: np.array([-u]), L=lambda x, u: 0.0, n=1, p=1)
    with pytest.raises(NonMonotoneOutputError):
        solve_constraint_equation(sys, np.zeros(1), 1, [1.0])


def test_output_above_bound_everywhere():
    sys = NonlinearSystem(f=lambda x, u: x, h=lambda x, u: np.array([5 + math.atan(u)]), L=lambda x, u: 0.0, n=1, p=1)
    with pytest.raises(UnreachableBoundError):
        solve_constraint_equation(sys, np.zeros(1), 1, [1.0], RootSolverConfig(bound_factor=1e3))


def test_policy_ecm_at_rest_is_current_limited(ecm_problem):
    assert selector_policy(SelectorPolicy(ecm_problem), np.zeros(3)) == (100.0, 0)


def test_policy_may_discharge_on_boundary():
    sys = LinearSystem(A=np.eye(1), B=[1], C=[[1]], D=[1.0], E=[1])
    pr = Problem(sys, [0.0], 2, 5.0, [1.0])
    u, idx = selector_policy(SelectorPolicy(pr), np.array([3.0]))
    assert (u, idx) == (-2.0, 1)


def test_policy_tie_goes_to_lowest_index():
    sys = LinearSystem(A=np.eye(1), B=[1], C=[[1], [2]], D=[1.0, 1.0], E=[1])
    pr = Problem(sys, [0.0], 2, 1.0, [1.0, 1.0])
    assert selector_policy(SelectorPolicy(pr), np.zeros(1)) == (1.0, 0)


def test_policy_clamp_off_by_default_and_optional():
    sys = LinearSystem(A=np.eye(1), B=[1], C=[[1]], D=[1.0], E=[1])
    pr = Problem(sys, [0.0], 2, 5.0, [1.0])
    assert SelectorPolicy(pr).u_min is None
    u, _ = selector_policy(SelectorPolicy(pr, u_min=0.0), np.array([3.0]))
    assert u == 0.0


def test_unknown_tie_break_rejected(ecm_problem):
    with pytest.raises(ValueError):
        SelectorPolicy(ecm_problem, tie_break="random")


def test_zero_input_limit_holds_at_zero():
    sys = LinearSystem(A=[[0.5]], B=[1.0], C=[[1.0]], D=[1.0], E=[1.0])
    pr = Problem(sys, [0.0], 10, 0.0, [1.0])
    tr = run_selector(pr)
    assert not tr.u.any()
    assert set(tr.winner.tolist()) == {0}


def test_ecm_run_starts_current_limited(ecm_selector_run):
    assert ecm_selector_run.u[0] == 100.0 and ecm_selector_run.winner[0] == 0


def _random_case(seed, nonlinear=False):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(1, 4)), int(rng.integers(1, 3))
    sys = LinearSystem(rng.uniform(0, 1 / n, (n, n)), rng.uniform(0, 1, n), rng.uniform(0, 1, (p, n)),
                       rng.uniform(0.1, 1, p), rng.uniform(0, 1, n), rng.uniform(0, 1))  # fmt: skip
    pr = Problem(sys, rng.uniform(0, 0.5, n), int(rng.integers(0, 12)), rng.uniform(0.5, 2), rng.uniform(0.5, 3, p))
    return pr, rng


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_bang_ride_activity_by_construction(seed):
    pr, _ = _random_case(seed)
    tr = run_selector(pr)
    assert all(tr.active)
    assert verify_bangride(tr, pr, 1e-9)[0]


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_one_step_maximality(seed):
    pr, rng = _random_case(seed)
    policy = SelectorPolicy(pr)
    for _ in range(5):
        x = rng.uniform(-1, 2, pr.system.n)
        u, idx = selector_policy(policy, x)
        eps = 1e-6 * (1 + abs(u))
        if idx == 0:
            assert u + eps > pr.u_max
        else:
            assert pr.system.h(x, u + eps)[idx - 1] > pr.y_max[idx - 1]


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_linear_and_wrapped_runs_agree(seed):
    pr, _ = _random_case(seed)
    wrapped = Problem(pr.system.as_nonlinear(), pr.x0, pr.t_f, pr.u_max, pr.y_max)
    a, b = run_selector(pr), run_selector(wrapped)
    scale = 1 + np.max(np.abs(a.u))
    np.testing.assert_allclose(b.u, a.u, rtol=0, atol=1e-8 * scale)


def test_nonlinear_run_rides_the_boundary():
    sys = NonlinearSystem(
        f=lambda x, u: np.array([0.9 * x[0] + 0.1 * u]),
        h=lambda x, u: np.array([x[0] + u**3]),
        L=lambda x, u: float(x[0] + u),
        n=1,
        p=1,
    )
    pr = Problem(sys, [0.0], 30, 1.2, [2.0])
    tr = run_selector(pr)
    assert tr.winner[0] == 0
    assert verify_bangride(tr, pr, 1e-9)[0]
    assert np.all(tr.y <= 2.0 + 1e-12)
