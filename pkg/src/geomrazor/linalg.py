"""Dense float64 matrices/vectors, norms and the power-iteration spectral norm.

Matrices and vectors are plain ``numpy.ndarray`` objects; :func:`as_matrix`
and :func:`as_vector` are the validating constructors used at API edges.
"""

from __future__ import annotations

import numpy as np

from . import _accel

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


class SpectralNormError(ArithmeticError):
    """Power iteration did not reach the requested residual."""

    def __init__(self, message: str, estimate: float, vector: np.ndarray, residual: float, iterations: int):
        super().__init__(message)
        self.estimate = estimate
        self.vector = vector
        self.residual = residual
        self.iterations = iterations


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=np.float64, copy=True)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def as_vector(a, name: str = "vector") -> np.ndarray:
    if np.ndim(a) > 1:
        raise ValueError(f"{name} must be 1-D, got {np.ndim(a)} dimensions")
    v = np.array(a, dtype=np.float64, copy=True).reshape(-1)
    if v.size < 1:
        raise ValueError(f"{name} must be nonempty")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} has non-finite entries")
    return v


def frobenius_norm_sq(m) -> float:
    """Sum of squared entries (any shape)."""
    a = np.asarray(m, dtype=np.float64)
    return float(np.dot(a.ravel(), a.ravel()))


def _gram(m: np.ndarray) -> np.ndarray:
    # the smaller Gram matrix has the same top eigenvalue and is cheaper
    return m.T @ m if m.shape[1] <= m.shape[0] else m @ m.T


def spectral_norm(m, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    """Largest singular value of ``m`` by power iteration on its Gram matrix.

    The iteration starts from the normalized all-ones vector and stops once
    the eigen-residual ``||G v - lam v||`` drops below ``tol * lam``, which
    bounds the relative error of the returned value by ``tol / 2``.  If the
    all-ones start happens to lie in the null space of ``G`` (so the estimate
    falls below the largest diagonal entry, a hard lower bound for the top
    eigenvalue), it restarts from the coordinate vector of that diagonal.

    Raises :class:`SpectralNormError` when ``max_iter`` is exhausted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"spectral_norm needs a nonempty matrix, got shape {m.shape}")
    g = _gram(m)
    diag = np.diag(g)
    floor = float(diag.max())
    if floor == 0.0:
        return 0.0
    n = g.shape[0]
    if n == 1:
        return float(np.sqrt(g[0, 0]))
    lam, v, resid, it = _accel.power_iteration(g, np.ones(n), tol, max_iter)
    if lam < floor * (1.0 - 10.0 * tol):
        start = np.zeros(n)
        start[int(np.argmax(diag))] = 1.0
        lam, v, resid, it = _accel.power_iteration(g, start, tol, max_iter)
    if not resid <= tol * lam:
        raise SpectralNormError(
            f"power iteration did not converge in {max_iter} iterations "
            f"(relative residual {resid / lam:.3e} > tol {tol:.1e})",
            estimate=float(np.sqrt(max(lam, 0.0))), vector=np.asarray(v), residual=float(resid), iterations=int(it),
        )
    return float(np.sqrt(lam))


def spectral_norms(stack, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """:func:`spectral_norm` of every matrix in a ``(b, r, c)`` stack."""
    a = np.asarray(stack, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError(f"expected a (b, r, c) stack, got shape {a.shape}")
    if a.shape[0] == 0:
        return np.zeros(0)
    grams = np.einsum("bki,bkj->bij", a, a) if a.shape[2] <= a.shape[1] else np.einsum("bik,bjk->bij", a, a)
    if grams.shape[1] == 1:
        return np.sqrt(grams[:, 0, 0])
    lam, resid, _ = _accel.batched_power_iteration(grams, tol, max_iter)
    floors = np.einsum("bii->bi", grams).max(axis=1)
    out = np.sqrt(np.maximum(lam, 0.0))
    redo = (lam < floors * (1.0 - 10.0 * tol)) | ~(resid <= tol * lam)
    redo &= floors > 0
    for j in np.flatnonzero(redo):
        out[j] = spectral_norm(a[j], tol=tol, max_iter=max_iter)
    out[floors == 0] = 0.0
    return out
