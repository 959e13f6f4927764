"""Shared fixtures for the acceptance suite.

The expensive artifacts (critical-length brackets, polished virtual levels,
rate sweeps) are computed once per session and chained: the virtual levels are
seeded from the located critical lengths, and the critical-junction sweep from
the polished level.  Unit-test modules stay self-contained and ignore these.
"""

from __future__ import annotations

import pytest

from twistband import (
    CountingGridSpec,
    GridPolicy,
    OverlapCase,
    ThresholdGridSpec,
    TRANSVERSE_THRESHOLD,
    WindowCase,
    find_critical_length,
    run_case,
    solve_virtual_level,
)
from twistband.convergence import DEFAULT_LAMBDA, EPS_DEFAULT

#: noncritical half-overlap used by the rate sweeps (comfortably inside
#: (0, ell_1) but away from both endpoints)
NONCRITICAL_ELL = 0.14

#: verdict lines collected by the acceptance tests, echoed after the run
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in VERDICTS:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def verdict_log() -> list[str]:
    return VERDICTS


@pytest.fixture(scope="session")
def noncritical_ell() -> float:
    return NONCRITICAL_ELL


@pytest.fixture(scope="session")
def critical_lengths() -> dict[int, dict[str, object]]:
    """Brackets for the first two critical half-overlaps on three grids."""
    spec = CountingGridSpec()
    out: dict[int, dict[str, object]] = {}
    for n in (1, 2):
        out[n] = {
            "base": find_critical_length(n, tol=1e-3, spec=spec),
            "halved": find_critical_length(n, tol=1e-3, spec=spec.refined()),
            "widened": find_critical_length(n, tol=1e-3, spec=spec.widened(5.0)),
        }
    return out


@pytest.fixture(scope="session")
def virtual_levels(critical_lengths):
    """Polished virtual levels seeded from the located critical lengths."""
    return {
        n: solve_virtual_level(critical_lengths[n]["base"].value, n, ThresholdGridSpec())
        for n in (1, 2)
    }


@pytest.fixture(scope="session")
def overlap_tables(virtual_levels):
    """Default-policy error sweeps at a noncritical and the critical junction."""
    policy = GridPolicy()
    noncritical = run_case(OverlapCase(NONCRITICAL_ELL), DEFAULT_LAMBDA, None, EPS_DEFAULT, policy)
    critical = run_case(
        OverlapCase(virtual_levels[1].ell, critical_index=1),
        DEFAULT_LAMBDA,
        None,
        EPS_DEFAULT,
        policy,
    )
    return {"noncritical": noncritical, "critical": critical}


@pytest.fixture(scope="session")
def window_tables():
    """Default-policy error sweeps for the two window models at L = 1."""
    policy = GridPolicy()
    return {
        "inside": run_case(WindowCase(1.0, 0.0), DEFAULT_LAMBDA, None, EPS_DEFAULT, policy),
        "outside": run_case(
            WindowCase(1.0, TRANSVERSE_THRESHOLD), DEFAULT_LAMBDA, None, EPS_DEFAULT, policy
        ),
    }
