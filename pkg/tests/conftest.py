import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from fgwild import Dataset  # noqa: E402


def random_dataset(rng, n, q, censor_missing=False, binary=False):
    """Small censoring-complete dataset with distinct type-1 times."""
    while True:
        time = np.round(rng.exponential(1.0, n), 6) + 1e-3
        event = rng.choice([0, 1, 2], size=n, p=[0.25, 0.5, 0.25])
        extra = rng.exponential(1.0, n)
        cens = np.where(event == 0, time, time + extra)
        if binary:
            z = rng.integers(0, 2, (n, q)).astype(float)
        else:
            z = np.round(rng.normal(size=(n, q)), 3)
        if censor_missing:
            cens = np.where(event == 1, np.nan, cens)
        t1 = time[event == 1]
        if t1.size >= 2 and np.unique(t1).size == t1.size:
            return Dataset(time, event, z, censoring=cens)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def toy():
    """Six subjects, one covariate, two competing events."""
    time = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    event = [1, 2, 1, 0, 1, 2]
    cens = [7.0, 6.5, 8.0, 4.0, 9.0, 6.0]
    z = [[0.0], [1.0], [1.0], [0.0], [0.5], [1.0]]
    return Dataset(time, event, z, censoring=cens)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
