import numpy as np
import pytest

from lipbandit import kernels
from lipbandit.arm import ArmModel
from lipbandit.models import make_nonindexable_arm, make_restart_arm

BACKENDS = sorted(kernels.BACKENDS)


@pytest.fixture(scope="session")
def nonindexable():
    return make_nonindexable_arm()


@pytest.fixture(scope="session")
def small_restart():
    return make_restart_arm(0.7, 0.5, x_max=40)


@pytest.fixture
def two_state():
    k = np.array([[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.6, 0.4]]])
    return ArmModel(kernel=k, reward=np.array([[0.0, 1.0], [0.5, 2.0]]), label="two")


_ACCEPTANCE = []


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion."""

    def _record(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
