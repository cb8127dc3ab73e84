import numpy as np
import pytest

from fiberdensity.spaces import make_system


@pytest.fixture
def four_point():
    """{a, b} over y1 and {c, d} over y2, unit weights."""
    return make_system({"a": "y1", "b": "y1", "c": "y2", "d": "y2"})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; printed in the terminal summary."""
    def record(number: int, passed: bool, detail: str):
        _ACCEPTANCE[number] = (passed, detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
