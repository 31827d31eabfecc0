import itertools

import numpy as np
import pytest


def elementary_counts_ok(points: np.ndarray, m: int, t: int) -> bool:
    """Every elementary box of volume 2^(t-m) holds exactly 2^t points."""
    n, d = points.shape
    ints = np.floor(points * 2**m).astype(np.int64)
    for ks in itertools.product(range(m - t + 1), repeat=d):
        if sum(ks) != m - t:
            continue
        cell = np.zeros(n, dtype=np.int64)
        for j, k in enumerate(ks):
            cell = (cell << k) | (ints[:, j] >> (m - k))
        counts = np.bincount(cell, minlength=2 ** (m - t))
        if not np.all(counts == 2**t):
            return False
    return True


def t_value(points: np.ndarray, m: int) -> int:
    for t in range(m + 1):
        if elementary_counts_ok(points, m, t):
            return t
    return m


def as_set(points: np.ndarray) -> set:
    return {tuple(row) for row in np.asarray(points).tolist()}


@pytest.fixture
def helpers():
    class H:
        pass

    H.elementary_counts_ok = staticmethod(elementary_counts_ok)
    H.t_value = staticmethod(t_value)
    H.as_set = staticmethod(as_set)
    return H


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
