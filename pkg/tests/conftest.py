"""Shared fixtures.

Every call to ``plan`` / ``plan_baseline`` made anywhere in the session is
recorded in ``PLAN_LOG`` so the acceptance suite can audit the termination
and monotonicity properties over all of them. The acceptance module is
moved to the end of the run so the log is complete when it is checked.
"""

import functools

import pytest

import activeplan
from activeplan import bench, cli, planner

PLAN_LOG = []
ACCEPTANCE_LINES = []

_original_plan = planner.plan
_original_baseline = planner.plan_baseline


def _recording(fn):
    @functools.wraps(fn)
    def wrapper(scenario, *args, **kwargs):
        report = fn(scenario, *args, **kwargs)
        PLAN_LOG.append((scenario.n_obs, report))
        return report

    return wrapper


for _module in (planner, bench, cli, activeplan):
    if hasattr(_module, "plan"):
        _module.plan = _recording(_original_plan)
    if hasattr(_module, "plan_baseline"):
        _module.plan_baseline = _recording(_original_baseline)


def pytest_collection_modifyitems(config, items):
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")


@pytest.fixture(scope="session")
def plan_log():
    return PLAN_LOG


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
