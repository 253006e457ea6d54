"""Kernel dispatch: compiled extension when importable, numpy fallback else.

Set ``CREAT_LAB_NO_EXT=1`` to force the pure-python kernels (used by the
parity tests and the benchmark).  Both implementations share signatures and
semantics; ``sinkhorn_log`` signals a numerical failure by returning a
negative iteration count, which callers turn into ``NumericalError``.
"""

from __future__ import annotations

import os

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def gru_sweep_py(xw: np.ndarray, uz: np.ndarray, ur: np.ndarray,
                 uh: np.ndarray, h0: np.ndarray) -> np.ndarray:
    """Gated recurrence over precomputed input projections (L, 3d) -> (L, d)."""
    L = xw.shape[0]
    d = h0.shape[0]
    out = np.empty((L, d))
    h = h0.copy()
    for t in range(L):
        row = xw[t]
        z = _sigmoid(row[:d] + h @ uz)
        r = _sigmoid(row[d:2 * d] + h @ ur)
        hc = np.tanh(row[2 * d:] + (r * h) @ uh)
        h = (1.0 - z) * h + z * hc
        out[t] = h
    return out


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis)
    safe = np.where(np.isfinite(m), m, 0.0)
    s = np.exp(a - np.expand_dims(safe, axis)).sum(axis=axis)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(m), safe + np.log(s), -np.inf)


def sinkhorn_log_py(logK: np.ndarray, logr: np.ndarray, logc: np.ndarray,
                    f1: float, f2: float, max_iters: int, tol: float):
    """Alternating log-domain scaling updates with marginal exponents f1/f2.

    Returns (logu, logv, iterations_run); a negative iteration count flags a
    non-finite intermediate at that (1-based) iteration.
    """
    n, m = logK.shape
    logu = np.zeros(n)
    logv = np.zeros(m)
    live_r = np.isfinite(logr)
    live_c = np.isfinite(logc)
    logu[~live_r] = -np.inf
    logv[~live_c] = -np.inf
    iters_run = 0
    for it in range(max_iters):
        iters_run = it + 1
        pu, pv = logu, logv
        with np.errstate(invalid="ignore"):
            logu = f1 * (logr - _logsumexp(logK + logv[None, :], axis=1))
            logu = np.where(live_r, logu, -np.inf)
            logv = f2 * (logc - _logsumexp(logK + logu[:, None], axis=0))
            logv = np.where(live_c, logv, -np.inf)
        if not (np.all(np.isfinite(logu[live_r])) and np.all(np.isfinite(logv[live_c]))):
            return logu, logv, -iters_run
        delta = 0.0
        if live_r.any():
            delta = max(delta, np.max(np.abs(logu[live_r] - pu[live_r])))
        if live_c.any():
            delta = max(delta, np.max(np.abs(logv[live_c] - pv[live_c])))
        if delta < tol:
            break
    return logu, logv, iters_run


def _extension_disabled() -> bool:
    return os.environ.get("CREAT_LAB_NO_EXT", "0") not in ("", "0")


try:
    from . import _speedups  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - build-dependent
    _speedups = None

USING_EXT = _speedups is not None and not _extension_disabled()

if USING_EXT:
    def gru_sweep(xw, uz, ur, uh, h0):
        return _speedups.gru_sweep(
            np.ascontiguousarray(xw), np.ascontiguousarray(uz),
            np.ascontiguousarray(ur), np.ascontiguousarray(uh),
            np.ascontiguousarray(h0))

    def sinkhorn_log(logK, logr, logc, f1, f2, max_iters, tol):
        return _speedups.sinkhorn_log(
            np.ascontiguousarray(logK), np.ascontiguousarray(logr),
            np.ascontiguousarray(logc), f1, f2, max_iters, tol)
else:
    gru_sweep = gru_sweep_py
    sinkhorn_log = sinkhorn_log_py
