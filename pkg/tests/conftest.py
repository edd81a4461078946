import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def dense_from_tensors(tensors):
    """Independent site-by-site contraction to a state vector (oracle)."""
    acc = np.asarray(tensors[0], dtype=complex)[0]  # (q, D)
    for t in tensors[1:]:
        t = np.asarray(t, dtype=complex)
        acc = np.tensordot(acc, t, axes=(acc.ndim - 1, 0))
        acc = acc.reshape(-1, t.shape[2])
    return acc[:, 0]


def kron_all(mats):
    out = np.array([[1.0]], dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out
