from __future__ import annotations

import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_collection_modifyitems(config, items):
    if os.environ.get("NLTRAFFIC_FULL_RESOLUTION") == "1":
        return
    skip = pytest.mark.skip(reason="set NLTRAFFIC_FULL_RESOLUTION=1 to run 10000-cell checks")
    for item in items:
        if "full_resolution" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    def report(number, passed: bool, detail: str, informative: bool = False) -> None:
        tag = "INFO" if informative else ("PASS" if passed else "FAIL")
        ACCEPTANCE_LINES.append(f"criterion {number}: {tag}  {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
