import re
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adamdp import toy_counterexample  # noqa: E402

_criteria = {}


@pytest.fixture
def toy():
    return toy_counterexample(0.5, -1)


@pytest.fixture
def toy_plus():
    return toy_counterexample(0.5, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not match:
        return
    key = (int(match.group(1)), match.group(2))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _criteria[key] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), outcome in sorted(_criteria.items()):
        terminalreporter.write_line(f"criterion {num:2d} {name.replace('_', ' ')}: {outcome}")
