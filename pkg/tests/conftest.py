import math
import sys

import numpy as np
import pytest

from rdplab.core import DistortionSpec, Pmf


def h2(x: float) -> float:
    """Binary entropy in bits, straight from the definition."""
    if x <= 0 or x >= 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


@pytest.fixture
def uniform2():
    return Pmf.uniform([0, 1])


@pytest.fixture
def hamming2():
    return DistortionSpec.hamming(2)


def random_pmf(rng: np.random.Generator, k: int, full: bool = False) -> Pmf:
    p = rng.dirichlet(np.ones(k))
    if not full and k > 2 and rng.random() < 0.3:
        p[rng.integers(k)] = 0.0
        p /= p.sum()
    return Pmf.from_probs(p)


def pytest_terminal_summary(terminalreporter):
    # acceptance criteria get one pass/fail line each at the end of the run
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results):
            terminalreporter.write_line(line)
