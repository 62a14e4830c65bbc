"""Finite-difference gradient oracle shared by the layer and model tests."""

import numpy as np


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar ``f`` with respect to every entry of ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for idx in range(flat.size):
        old = flat[idx]
        flat[idx] = old + eps
        up = f()
        flat[idx] = old - eps
        down = f()
        flat[idx] = old
        gflat[idx] = (up - down) / (2 * eps)
    return g


def max_rel_error(analytic, numeric, floor=1e-6):
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))
