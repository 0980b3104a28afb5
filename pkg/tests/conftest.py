import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from mdpembed import FiniteMdp  # noqa: E402


def chain(P, c):
    """Single-action finite MDP from a dense matrix and cost vector."""
    P = np.asarray(P, dtype=float)
    return FiniteMdp.from_arrays(P[:, None, :], np.asarray(c, dtype=float)[:, None])


@pytest.fixture
def two_cycle():
    return chain([[0, 1], [1, 0]], [0, 2])


@pytest.fixture
def three_chain():
    return chain([[0, 1, 0], [0, 0, 1], [0.5, 0, 0.5]], [4, 0, 1])


def cesaro_stationary(P, n_iter=4000):
    """Stationary law by powering the lazy chain; independent of the library's solve."""
    P = np.asarray(P, dtype=float)
    L = 0.5 * (P + np.eye(len(P)))
    M = np.linalg.matrix_power(L, n_iter)
    return M[0]
