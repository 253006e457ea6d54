# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: the recurrent encoder sweep and the log-domain
scaling loop.  Mirrors the numpy fallbacks in ``creatlab.backend``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh, INFINITY

cnp.import_array()


def gru_sweep(double[:, ::1] xw, double[:, ::1] uz, double[:, ::1] ur,
              double[:, ::1] uh, double[::1] h0):
    """Run the gated recurrence over precomputed input projections.

    ``xw`` is (L, 3d): per step the concatenated update/reset/candidate
    input terms (x @ W + b).  Returns the (L, d) array of hidden states.
    """
    cdef Py_ssize_t L = xw.shape[0]
    cdef Py_ssize_t d = h0.shape[0]
    out_arr = np.empty((L, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] h = np.array(h0, dtype=np.float64)
    cdef double[::1] z = np.empty(d, dtype=np.float64)
    cdef double[::1] r = np.empty(d, dtype=np.float64)
    cdef double[::1] hc = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t t, i, j
    cdef double s

    for t in range(L):
        for j in range(d):
            s = xw[t, j]
            for i in range(d):
                s += h[i] * uz[i, j]
            z[j] = 1.0 / (1.0 + exp(-s))
            s = xw[t, d + j]
            for i in range(d):
                s += h[i] * ur[i, j]
            r[j] = 1.0 / (1.0 + exp(-s))
        for j in range(d):
            s = xw[t, 2 * d + j]
            for i in range(d):
                s += r[i] * h[i] * uh[i, j]
            hc[j] = tanh(s)
        for j in range(d):
            h[j] = (1.0 - z[j]) * h[j] + z[j] * hc[j]
            out[t, j] = h[j]
    return out_arr


def sinkhorn_log(double[:, ::1] logK, double[::1] logr, double[::1] logc,
                 double f1, double f2, Py_ssize_t max_iters, double tol):
    """Alternating log-domain scaling updates with marginal exponents f1/f2.

    Returns (logu, logv, iterations_run).  Entries with zero marginal mass
    (log == -inf) stay at -inf.
    """
    cdef Py_ssize_t n = logK.shape[0]
    cdef Py_ssize_t m = logK.shape[1]
    logu_arr = np.zeros(n, dtype=np.float64)
    logv_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] logu = logu_arr
    cdef double[::1] logv = logv_arr
    cdef double[::1] pu = np.zeros(n, dtype=np.float64)
    cdef double[::1] pv = np.zeros(m, dtype=np.float64)
    cdef Py_ssize_t it, i, j
    cdef double mx, s, lse, delta, d1
    cdef Py_ssize_t iters_run = 0

    for i in range(n):
        if logr[i] == -INFINITY:
            logu[i] = -INFINITY
    for j in range(m):
        if logc[j] == -INFINITY:
            logv[j] = -INFINITY

    for it in range(max_iters):
        iters_run = it + 1
        for i in range(n):
            pu[i] = logu[i]
        for j in range(m):
            pv[j] = logv[j]
        for i in range(n):
            if logr[i] == -INFINITY:
                continue
            mx = -INFINITY
            for j in range(m):
                s = logK[i, j] + logv[j]
                if s > mx:
                    mx = s
            if mx == -INFINITY:
                logu[i] = INFINITY  # flagged below
            else:
                s = 0.0
                for j in range(m):
                    s += exp(logK[i, j] + logv[j] - mx)
                logu[i] = f1 * (logr[i] - (mx + log(s)))
        for j in range(m):
            if logc[j] == -INFINITY:
                continue
            mx = -INFINITY
            for i in range(n):
                s = logK[i, j] + logu[i]
                if s > mx:
                    mx = s
            if mx == -INFINITY:
                logv[j] = INFINITY
            else:
                s = 0.0
                for i in range(n):
                    s += exp(logK[i, j] + logu[i] - mx)
                logv[j] = f2 * (logc[j] - (mx + log(s)))
        delta = 0.0
        for i in range(n):
            if logr[i] == -INFINITY:
                continue
            if logu[i] == INFINITY or logu[i] != logu[i]:
                return logu_arr, logv_arr, -iters_run
            d1 = logu[i] - pu[i]
            if d1 < 0.0:
                d1 = -d1
            if d1 > delta:
                delta = d1
        for j in range(m):
            if logc[j] == -INFINITY:
                continue
            if logv[j] == INFINITY or logv[j] != logv[j]:
                return logu_arr, logv_arr, -iters_run
            d1 = logv[j] - pv[j]
            if d1 < 0.0:
                d1 = -d1
            if d1 > delta:
                delta = d1
        if delta < tol:
            break
    return logu_arr, logv_arr, iters_run
