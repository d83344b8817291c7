import numpy as np
import pytest

from warpattn.rng import SeededRng
from warpattn.tensor import Tensor


@pytest.fixture
def rng():
    return SeededRng(42)


@pytest.fixture
def nprng():
    return np.random.default_rng(42)


def rand_tensor(rng, shape, lo=-1.0, hi=1.0, requires_grad=False, dtype="f64"):
    return Tensor(rng.uniform(shape, lo, hi), dtype=dtype, requires_grad=requires_grad)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
