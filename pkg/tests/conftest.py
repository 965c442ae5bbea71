import numpy as np
import pytest

from cosood import _accel

ACCEPTANCE_LINES = []


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Run a test once per kernel backend, restoring the original afterwards."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    before = _accel.backend()
    _accel.set_backend(request.param)
    yield request.param
    _accel.set_backend(before)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one pass/fail line."""
    def record(n, ok, detail):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
