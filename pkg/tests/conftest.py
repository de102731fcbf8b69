"""Shared fixtures and the acceptance-summary report hook."""

from __future__ import annotations

import re

import numpy as np
import pytest

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")

# nodeid fragment -> (number, outcome); populated as acceptance tests run.
_acceptance_results: dict[int, str] = {}
_acceptance_names: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION_RE.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    _acceptance_names.setdefault(n, report.nodeid.split("::")[-1])
    if report.when == "call":
        _acceptance_results[n] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and not report.passed:
        # Fixture errors and skips count against the criterion.
        _acceptance_results[n] = "SKIP" if report.skipped else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for n in sorted(_acceptance_results):
        outcome = _acceptance_results[n]
        label = _acceptance_names[n].removeprefix(f"test_criterion_{n:02d}_")
        label = label.replace("_", " ")
        tw.write_line(f"ACCEPTANCE {n:2d}: {outcome}  ({label})")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
