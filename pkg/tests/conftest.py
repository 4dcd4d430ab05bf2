import numpy as np
import pytest

from ads_ilfo.core import DemoSet, Trajectory


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def make_demos(arrays) -> DemoSet:
    return DemoSet(tuple(Trajectory(np.asarray(a, dtype=float)) for a in arrays))


_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """``criterion(n, passed, detail)`` records one acceptance line for the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
