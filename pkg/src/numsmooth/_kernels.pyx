# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops; see ``_kernels_py`` for the reference numpy versions."""
import numpy as np

cimport cython


def factor_product(const double[::1] x0, const double[:, :, ::1] a,
                   const double[:, :, ::1] b, const double[:, ::1] y):
    cdef Py_ssize_t P = a.shape[0], d = a.shape[1], N = a.shape[2], Q = y.shape[1]
    out = np.empty((P, Q, d))
    dout = np.empty((P, Q, d))
    cdef double[:, :, ::1] xv = out
    cdef double[:, :, ::1] dxv = dout
    cdef Py_ssize_t p, q, j, n
    cdef double prod, dprod, f, yy, bn
    with nogil:
        for p in range(P):
            for q in range(Q):
                yy = y[p, q]
                for j in range(d):
                    prod = x0[j]
                    dprod = 0.0
                    for n in range(N):
                        bn = b[p, j, n]
                        f = a[p, j, n] + bn * yy
                        dprod = dprod * f + prod * bn
                        prod = prod * f
                    xv[p, q, j] = prod
                    dxv[p, q, j] = dprod
    return out, dout


def weighted_residual(const double[::1] x0, const double[:, :, ::1] a,
                      const double[:, :, ::1] b, const double[:, ::1] y,
                      const double[::1] c, double level):
    """``sum_j c_j X_j(y) - level`` and its y-derivative, without storing per-asset values."""
    cdef Py_ssize_t P = a.shape[0], d = a.shape[1], N = a.shape[2], Q = y.shape[1]
    res = np.empty((P, Q))
    dres = np.empty((P, Q))
    cdef double[:, ::1] rv = res
    cdef double[:, ::1] drv = dres
    cdef Py_ssize_t p, q, j, n
    cdef double prod, dprod, f, yy, bn, acc, dacc
    with nogil:
        for p in range(P):
            for q in range(Q):
                yy = y[p, q]
                acc = -level
                dacc = 0.0
                for j in range(d):
                    if c[j] == 0.0:
                        continue
                    prod = x0[j]
                    dprod = 0.0
                    for n in range(N):
                        bn = b[p, j, n]
                        f = a[p, j, n] + bn * yy
                        dprod = dprod * f + prod * bn
                        prod = prod * f
                    acc = acc + c[j] * prod
                    dacc = dacc + c[j] * dprod
                rv[p, q] = acc
                drv[p, q] = dacc
    return res, dres
