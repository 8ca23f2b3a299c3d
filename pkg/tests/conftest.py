import itertools

import numpy as np
import pytest


def rand_bits(rng, shape, p=0.5):
    return (rng.random(shape) < p).astype(np.uint8)


def all_assignments(n):
    """Every bit vector of length ``n``, as rows of a uint8 array."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict = {}


def record(criterion: int, ok, detail: str, soft: bool = False):
    """Store one acceptance outcome for the terminal summary, then assert it."""
    status = "PASS" if ok else ("SOFT-PASS" if soft else "FAIL")
    ACCEPTANCE[criterion] = f"acceptance {criterion}: {status} ({detail})"
    print(ACCEPTANCE[criterion])
    assert ok or soft, ACCEPTANCE[criterion]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
