"""Shared oracles and helpers for the test suite."""

import numpy as np
import pytest


def central_difference(f, x, eps=1e-5):
    """Numerical gradient of scalar f at x via central differences.

    Independent of any analytic backward pass; the reference oracle for
    every gradient check in the suite.
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a, b):
    """Norm-based relative error ||a - b|| / max(||a||, ||b||, eps)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
