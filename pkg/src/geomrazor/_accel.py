"""Hot numeric kernels, compiled with numba when available.

Every kernel exists twice: a loop-style version that numba compiles with
``@njit`` and a vectorized pure-numpy version.  The module-level names
(``power_iteration``, ``batched_power_iteration``, ...) point at one or the
other, picked once at import time:

* ``GEOMRAZOR_DISABLE_JIT=1`` forces the numpy path;
* a missing/broken numba install falls back to numpy silently.

Both paths are kept importable as ``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so
tests and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_DISABLED = os.environ.get("GEOMRAZOR_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def _njit(fn):
    if _numba is None:  # pragma: no cover
        return None
    return _numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# power iteration on a symmetric PSD matrix


def _power_iteration_loops(gram, v0, tol, max_iter):
    n = gram.shape[0]
    v = v0.copy()
    nrm = 0.0
    for k in range(n):
        nrm += v[k] * v[k]
    nrm = np.sqrt(nrm)
    for k in range(n):
        v[k] /= nrm
    w = np.empty(n)
    lam = 0.0
    resid = np.inf
    for it in range(1, max_iter + 1):
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += gram[r, c] * v[c]
            w[r] = acc
        lam = 0.0
        for k in range(n):
            lam += v[k] * w[k]
        rr = 0.0
        wn = 0.0
        for k in range(n):
            d = w[k] - lam * v[k]
            rr += d * d
            wn += w[k] * w[k]
        resid = np.sqrt(rr)
        if lam <= 0.0:
            return 0.0, v, 0.0, it
        if resid <= tol * lam:
            return lam, v, resid, it
        wn = np.sqrt(wn)
        for k in range(n):
            v[k] = w[k] / wn
    return lam, v, resid, max_iter


def _power_iteration_numpy(gram, v0, tol, max_iter):
    v = v0 / np.linalg.norm(v0)
    lam = 0.0
    resid = np.inf
    for it in range(1, max_iter + 1):
        w = gram @ v
        lam = float(v @ w)
        resid = float(np.linalg.norm(w - lam * v))
        if lam <= 0.0:
            return 0.0, v, 0.0, it
        if resid <= tol * lam:
            return lam, v, resid, it
        v = w / np.linalg.norm(w)
    return lam, v, resid, max_iter


def _make_batched_loops(single):
    def batched(grams, tol, max_iter):
        b, n, _ = grams.shape
        lam = np.zeros(b)
        resid = np.zeros(b)
        iters = np.zeros(b, dtype=np.int64)
        v0 = np.ones(n)
        for j in range(b):
            lj, _, rj, ij = single(grams[j], v0, tol, max_iter)
            lam[j] = lj
            resid[j] = rj
            iters[j] = ij
        return lam, resid, iters

    return batched


def _batched_power_iteration_numpy(grams, tol, max_iter):
    b, n, _ = grams.shape
    v = np.full((b, n), 1.0 / np.sqrt(n))
    lam = np.zeros(b)
    resid = np.full(b, np.inf)
    iters = np.full(b, max_iter, dtype=np.int64)
    active = np.ones(b, dtype=bool)
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        va = v[idx]
        w = np.einsum("bij,bj->bi", grams[idx], va)
        la = np.einsum("bi,bi->b", va, w)
        ra = np.linalg.norm(w - la[:, None] * va, axis=1)
        zero = la <= 0.0
        la = np.where(zero, 0.0, la)
        ra = np.where(zero, 0.0, ra)
        done = zero | (ra <= tol * la)
        lam[idx] = la
        resid[idx] = ra
        iters[idx[done]] = it
        active[idx[done]] = False
        keep = ~done
        wn = np.linalg.norm(w[keep], axis=1)
        v[idx[keep]] = w[keep] / wn[:, None]
    return lam, resid, iters


# ---------------------------------------------------------------------------
# 1-D polyline length and composite trapezoid


def _polyline_length_loops(x, y):
    total = 0.0
    for k in range(x.shape[0] - 1):
        dx = x[k + 1] - x[k]
        dy = y[k + 1] - y[k]
        total += np.sqrt(dx * dx + dy * dy)
    return total


def _polyline_length_numpy(x, y):
    return float(np.sum(np.hypot(np.diff(x), np.diff(y))))


def _trapezoid_loops(x, fx):
    total = 0.0
    for k in range(x.shape[0] - 1):
        total += 0.5 * (x[k + 1] - x[k]) * (fx[k] + fx[k + 1])
    return total


def _trapezoid_numpy(x, fx):
    return float(np.sum(0.5 * np.diff(x) * (fx[:-1] + fx[1:])))


# ---------------------------------------------------------------------------
# half-space membership (hull rejection sampling)


def _halfspace_contains_loops(points, equations, tol):
    n, d = points.shape
    m = equations.shape[0]
    out = np.ones(n, dtype=np.bool_)
    for p in range(n):
        for f in range(m):
            acc = equations[f, d]
            for k in range(d):
                acc += equations[f, k] * points[p, k]
            if acc > tol:
                out[p] = False
                break
    return out


def _halfspace_contains_numpy(points, equations, tol):
    vals = points @ equations[:, :-1].T + equations[:, -1]
    return np.all(vals <= tol, axis=1)


NUMPY_KERNELS = SimpleNamespace(
    power_iteration=_power_iteration_numpy,
    batched_power_iteration=_batched_power_iteration_numpy,
    polyline_length=_polyline_length_numpy,
    trapezoid=_trapezoid_numpy,
    halfspace_contains=_halfspace_contains_numpy,
)

if HAVE_NUMBA:
    _pi_nb = _njit(_power_iteration_loops)
    NUMBA_KERNELS = SimpleNamespace(
        power_iteration=_pi_nb,
        batched_power_iteration=_numba.njit(nogil=True)(_make_batched_loops(_pi_nb)),
        polyline_length=_njit(_polyline_length_loops),
        trapezoid=_njit(_trapezoid_loops),
        halfspace_contains=_njit(_halfspace_contains_loops),
    )
else:  # pragma: no cover
    NUMBA_KERNELS = None

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def power_iteration(gram: np.ndarray, v0: np.ndarray, tol: float, max_iter: int):
    """Dominant eigenpair of a symmetric PSD ``gram``.

    Returns ``(lam, v, resid, iters)``; convergence means
    ``resid = ||gram v - lam v|| <= tol * lam``.
    """
    return _ACTIVE.power_iteration(
        np.ascontiguousarray(gram, dtype=np.float64),
        np.ascontiguousarray(v0, dtype=np.float64),
        float(tol),
        int(max_iter),
    )


def batched_power_iteration(grams: np.ndarray, tol: float, max_iter: int):
    """Vectorized :func:`power_iteration` over a ``(b, n, n)`` stack.

    Uses the all-ones start for every matrix. Returns ``(lam, resid, iters)``.
    """
    return _ACTIVE.batched_power_iteration(
        np.ascontiguousarray(grams, dtype=np.float64), float(tol), int(max_iter)
    )


def polyline_length(x: np.ndarray, y: np.ndarray) -> float:
    return float(_ACTIVE.polyline_length(np.ascontiguousarray(x, dtype=np.float64),
                                         np.ascontiguousarray(y, dtype=np.float64)))


def trapezoid(x: np.ndarray, fx: np.ndarray) -> float:
    return float(_ACTIVE.trapezoid(np.ascontiguousarray(x, dtype=np.float64),
                                   np.ascontiguousarray(fx, dtype=np.float64)))


def halfspace_contains(points: np.ndarray, equations: np.ndarray, tol: float) -> np.ndarray:
    """Rows of ``points`` satisfying ``A p + c <= tol`` for every facet ``[A | c]``."""
    return np.asarray(_ACTIVE.halfspace_contains(
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(equations, dtype=np.float64),
        float(tol),
    ), dtype=bool)
