# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled kernel backend: direct grouped convolution and max pooling.

Loops are ordered so the innermost axis is contiguous in both operands,
which gcc vectorizes at -O3. Accumulation order is fixed, so results are
bitwise reproducible run to run.
"""

import numpy as np


def conv_same(double[:, :, ::1] xp, double[:, :, ::1] w, int groups):
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[1], Lp = xp.shape[2]
    cdef Py_ssize_t Co = w.shape[0], Cg = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t L = Lp - K + 1
    cdef Py_ssize_t Og = Co // groups
    y_arr = np.zeros((B, Co, L), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t b, o, c, ci, k, t, g
    cdef double wv
    for b in range(B):
        for o in range(Co):
            g = o // Og
            for c in range(Cg):
                ci = g * Cg + c
                for k in range(K):
                    wv = w[o, c, k]
                    for t in range(L):
                        y[b, o, t] += wv * xp[b, ci, t + k]
    return y_arr


def conv_wgrad(double[:, :, ::1] xp, double[:, :, ::1] gy, int groups,
               int kernel):
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t Co = gy.shape[1], L = gy.shape[2]
    cdef Py_ssize_t Cg = C // groups
    cdef Py_ssize_t Og = Co // groups
    gw_arr = np.zeros((Co, Cg, kernel), dtype=np.float64)
    cdef double[:, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, o, c, ci, k, t, g
    cdef double acc
    for o in range(Co):
        g = o // Og
        for c in range(Cg):
            ci = g * Cg + c
            for k in range(kernel):
                acc = 0.0
                for b in range(B):
                    for t in range(L):
                        acc += gy[b, o, t] * xp[b, ci, t + k]
                gw[o, c, k] = acc
    return gw_arr


def maxpool_same(double[:, :, ::1] xp, int kernel, int pad_left):
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[1], Lp = xp.shape[2]
    cdef Py_ssize_t L = Lp - kernel + 1
    y_arr = np.empty((B, C, L), dtype=np.float64)
    src_arr = np.empty((B, C, L), dtype=np.int64)
    cdef double[:, :, ::1] y = y_arr
    cdef long long[:, :, ::1] src = src_arr
    cdef Py_ssize_t b, c, t, k, best_k
    cdef double best, v
    for b in range(B):
        for c in range(C):
            for t in range(L):
                best = xp[b, c, t]
                best_k = 0
                for k in range(1, kernel):
                    v = xp[b, c, t + k]
                    if v > best:  # strict: ties keep the earliest source
                        best = v
                        best_k = k
                y[b, c, t] = best
                src[b, c, t] = t + best_k - pad_left
    return y_arr, src_arr


def maxpool_scatter(long long[:, :, ::1] src, double[:, :, ::1] gy):
    cdef Py_ssize_t B = gy.shape[0], C = gy.shape[1], L = gy.shape[2]
    gx_arr = np.zeros((B, C, L), dtype=np.float64)
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, c, t
    for b in range(B):
        for c in range(C):
            for t in range(L):
                gx[b, c, src[b, c, t]] += gy[b, c, t]
    return gx_arr
