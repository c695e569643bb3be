import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable


def random_psd(n, rng, rank=None, unit_diag=True):
    """Random PSD Gram matrix (Gram of random features)."""
    rank = rank or max(2, n // 2)
    X = rng.standard_normal((n, rank))
    K = X @ X.T
    if unit_diag:
        d = np.sqrt(np.diag(K))
        d[d == 0] = 1.0
        K = K / np.outer(d, d)
        np.fill_diagonal(K, 1.0)
    return 0.5 * (K + K.T)


def random_bundle(n, M, rng, unit_diag=True):
    return [random_psd(n, rng, unit_diag=unit_diag) for _ in range(M)]


def random_likelihoods(n, l, rng, sharpness=1.0):
    """Valid membership matrix: softmax of random scores."""
    z = sharpness * rng.standard_normal((n, l))
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def balanced_labels(n, rng):
    y = np.ones(n)
    y[: n // 2] = -1.0
    return y[rng.permutation(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
