from pathlib import Path

import hypothesis
import numpy as np
import pytest

from bangride.battery import paper_ecm_scenario
from bangride.pid import MTNS_GAINS, TUNER_GAINS, run_pid_selector
from bangride.selector import run_selector

hypothesis.settings.register_profile("default", deadline=None, max_examples=100)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

_criteria: dict = {}


@pytest.fixture(scope="session")
def scenarios_dir():
    return SCENARIOS


@pytest.fixture(scope="session")
def ecm_problem():
    return paper_ecm_scenario()


@pytest.fixture(scope="session")
def ecm_selector_run(ecm_problem):
    return run_selector(ecm_problem)


@pytest.fixture(scope="session")
def ecm_pid_runs(ecm_problem):
    return {
        "mtns": run_pid_selector(ecm_problem, [MTNS_GAINS]),
        "tuner": run_pid_selector(ecm_problem, [TUNER_GAINS]),
    }


def random_nonneg_system(rng, n, p, d_lo=0.05):
    """Random system with A, B, C, E, F >= 0 and D in [d_lo, 1]."""
    from bangride.core import LinearSystem

    return LinearSystem(
        A=rng.uniform(0, 1.0 / n, (n, n)),
        B=rng.uniform(0, 1, n),
        C=rng.uniform(0, 1, (p, n)),
        D=rng.uniform(d_lo, 1, p),
        E=rng.uniform(0, 1, n),
        F=rng.uniform(0, 1),
    )


def pytest_runtest_logreport(report):
    crit = [m for m in report.keywords if m.startswith("criterion_")]
    if not crit or report.when not in ("setup", "call"):
        return
    key = crit[0]
    if report.when == "setup" and not report.failed:
        return
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    prev = _criteria.get(key)
    if prev != "FAIL":
        _criteria[key] = status if prev in (None, "PASS") or status == "FAIL" else prev


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k.split("_")[1])):
        terminalreporter.write_line(f"criterion {key.split('_')[1]}: {_criteria[key]}")


def pytest_configure(config):
    for i in range(1, 10):
        config.addinivalue_line("markers", f"criterion_{i}: acceptance criterion {i}")
