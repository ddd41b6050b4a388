import sys

import numpy as np
import pytest

from attrpi.data import ExperimentData, Network


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    A = rng.normal(size=(n, rank))
    return A @ A.T / max(rank, 1)


def small_network_data(rng, n=12, p=0.3, n_treated=None):
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    src, dst = np.nonzero(mask)
    x = np.zeros(n, dtype=int)
    x[rng.choice(n, n_treated or n // 2, replace=False)] = 1
    y = rng.integers(0, 2, n).astype(float)
    return ExperimentData(y, x, Network(n, src, dst), {"age": rng.integers(0, 3, n)})


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
