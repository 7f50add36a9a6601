import numpy as np
import pytest

from tocsynth.poly import Q


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dyadic(rng, size, bits=6):
    """Random rationals ``k / 2^bits`` in [-1, 1]."""
    scale = 2**bits
    return tuple(Q(int(k), scale) for k in rng.integers(-scale, scale + 1, size=size))


ACCEPTANCE_LINES = []


def record(label, ok, detail):
    """Store a one-line verdict for the terminal summary, then assert it."""
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
