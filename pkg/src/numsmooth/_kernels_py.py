"""Pure numpy implementations of the compiled kernels."""
from __future__ import annotations

import numpy as np


def factor_product(x0, a, b, y):
    """Evaluate ``x0_j * prod_n (a[p,j,n] + b[p,j,n] * y[p,q])`` and its y-derivative.

    Returns two arrays of shape ``(P, Q, d)``.
    """
    P, d, N = a.shape
    Q = y.shape[1]
    prod = np.empty((P, Q, d))
    prod[...] = x0
    dprod = np.zeros((P, Q, d))
    yy = y[:, :, None]
    for n in range(N):
        bn = b[:, None, :, n]
        f = a[:, None, :, n] + bn * yy
        dprod *= f
        dprod += prod * bn
        prod *= f
    return prod, dprod


def weighted_residual(x0, a, b, y, c, level):
    x, dx = factor_product(x0, a, b, y)
    return x @ c - level, dx @ c
