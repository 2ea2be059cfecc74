import numpy as np
import pytest

from tonewton import _kernels

ACCEPTANCE_LINES = []


def report(criterion: str, passed: bool, detail: str) -> None:
    """Record one acceptance line; printed at once and again in the terminal summary."""
    line = f"ACCEPTANCE {criterion:<4} {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append((criterion, line))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(_kernels.backends()))
def backend(request):
    return _kernels.backends()[request.param]
