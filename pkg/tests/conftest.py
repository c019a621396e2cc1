import numpy as np
import pytest

from focaldepth.optics import LensConfig, default_schedule


@pytest.fixture
def lens():
    return LensConfig()


@pytest.fixture
def schedule():
    return default_schedule()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion (printed in the summary)."""

    def record(number: int, passed: bool, detail: str):
        CRITERIA[number] = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        print(CRITERIA[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
