from types import SimpleNamespace

import pytest
from hypothesis import HealthCheck, settings

from saddlefold.continuation import branch_start, detect_fold, refine_fold_moore_spence, trace_branch
from saddlefold.mesh import build_grid
from saddlefold.model import power_coupled, scalar_abc
from saddlefold.sublinear import baseline_state

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def traced(spec, grid):
    wbar, report = baseline_state(spec, grid)
    branch = trace_branch(spec, grid, branch_start(spec, grid, wbar))
    brackets = detect_fold(branch)
    fold = refine_fold_moore_spence(spec, grid, branch, brackets[0])
    return SimpleNamespace(grid=grid, spec=spec, wbar=wbar, baseline=report, branch=branch,
                           brackets=brackets, fold=fold)


@pytest.fixture(scope="session")
def abc127():
    """Scalar concave-convex problem q=0.5, gamma=3, a=b=1 on (0,1) with n=127."""
    grid = build_grid(1, (1.0,), (127,))
    return traced(scalar_abc(grid), grid)


@pytest.fixture(scope="session")
def coupled127():
    grid = build_grid(1, (1.0,), (127,))
    return traced(power_coupled(grid, m=2), grid)


@pytest.fixture
def tiny():
    """1D, n=3, h=0.25."""
    return build_grid(1, (1.0,), (3,))


# ---------------------------------------------------------------- acceptance summary

_criteria = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome == "failed":
        prev = _criteria.get(crit, "PASS")
        _criteria[crit] = "FAIL" if report.outcome == "failed" or prev == "FAIL" else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_criteria):
        terminalreporter.write_line(f"criterion {crit:2d}: {_criteria[crit]}")
