from __future__ import annotations

import re

import pytest
from hypothesis import settings

from semloc import load_sod
from semloc.study import data_path, default_study

settings.register_profile("default", max_examples=1000, deadline=None, database=None)
settings.load_profile("default")

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def kitchen_sod():
    return load_sod(data_path("kitchen_sod.json"))


@pytest.fixture(scope="session")
def mib_sod():
    return load_sod(data_path("mib_sod.json"))


@pytest.fixture(scope="session")
def study():
    return default_study()


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        outcome = "PASS" if report.passed else "FAIL"
        if n not in _CRITERIA or outcome == "FAIL":
            _CRITERIA[n] = (outcome, m.group(2).replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcome, name = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {outcome}  {name}")
