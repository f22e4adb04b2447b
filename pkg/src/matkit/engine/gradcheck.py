"""Finite-difference validation of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(f, x: Tensor, h: float = 1e-3) -> float:
    """Compare analytic gradients of a scalar-valued f against central differences.

    x must be float64 for the differences to have enough headroom.
    Returns the max relative error with denominator max(|analytic|,
    |numeric|, 1e-8).
    """
    assert x.dtype == np.float64, "grad_check requires float64 inputs"
    x.requires_grad = True
    x.zero_grad()
    out = f(x)
    out.backward()
    analytic = x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.ravel()
    num_flat = numeric.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(Tensor(x.data.copy())).data)
        flat[i] = orig - h
        lo = float(f(Tensor(x.data.copy())).data)
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
