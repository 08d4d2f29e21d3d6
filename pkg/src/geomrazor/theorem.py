"""Numerical checks of the input/parameter gradient-norm inequality.

For a scalar output ``f`` of an MLP and layer ``i`` with input ``h_i(x)``::

    ||df/dx||^2 * sum_i (1 + ||h_i||^2) / (||w_i||^2 ||h_i'||^2)  <=  ||df/dtheta||^2

where ``||w_i||`` is the spectral norm and ``||h_i'||`` the operator norm of
the sub-network Jacobian.  It is the sum over layers of two per-layer bounds:
``||df/dx||^2 ||h_i||^2 / A_i^2 <= ||df/dw_i||_F^2`` and
``||df/dx||^2 / A_i^2 <= ||df/db_i||^2`` with ``A_i = ||w_i|| ||h_i'||``.

Layers whose ``A_i`` falls below ``eps`` are skipped in the sum (dropping
non-negative terms keeps the inequality) and reported.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import frobenius_norm_sq, spectral_norm, spectral_norms
from .network import (
    ForwardTrace,
    JacobianBundle,
    Mlp,
    backward,
    forward,
    forward_batch,
    param_grad_norm_sq,
    parameter_gradients,
    predict_batch,
    subnetwork_input_jacobian,
    subnetwork_jacobians_batch,
    subnetwork_value,
)

DEFAULT_EPS = 1e-9
# spectral norms are underestimated by at most this relative amount, which
# keeps the lhs inflation far below the 1e-9 sweep tolerance
NORM_TOL = 1e-12
NORM_MAX_ITER = 1_000_000


class DegenerateLayerError(ValueError):
    """``||w_i|| ||h_i'(x)||`` (or ``||h_i||`` for weight perturbations) is ~0."""


@dataclass
class LayerDiagnostics:
    layer_index: int
    w_spectral: float
    h_norm_sq: float
    hprime_opnorm: float
    hprime_fronorm: float
    a_i: float
    weight_term: float | None
    bias_term: float | None
    degenerate: bool = False
    weight_degenerate: bool = False


@dataclass
class TheoremVerdict:
    lhs: float
    rhs: float
    slack: float
    per_layer: list[LayerDiagnostics]
    skipped_layers: list[tuple[int, str]] = field(default_factory=list)
    output_index: int = 0
    all_degenerate: bool = False

    def holds(self, rtol: float = 1e-9) -> bool:
        return self.lhs <= self.rhs + rtol * self.rhs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skipped_layers"] = [{"layer_index": i, "reason": r} for i, r in self.skipped_layers]
        return d


def weight_spectral_norms(mlp: Mlp) -> list[float]:
    return [spectral_norm(l.weight, tol=NORM_TOL, max_iter=NORM_MAX_ITER) for l in mlp.layers]


def _hprime_norms(mlp: Mlp, trace: ForwardTrace, i: int) -> tuple[float, float]:
    if i == 1:
        return 1.0, float(np.sqrt(mlp.input_dim))
    jac = subnetwork_input_jacobian(mlp, trace, i)
    return spectral_norm(jac, tol=NORM_TOL, max_iter=NORM_MAX_ITER), float(np.sqrt(frobenius_norm_sq(jac)))


def _grad_x_sq(mlp: Mlp, trace: ForwardTrace, output_index: int) -> float:
    return frobenius_norm_sq(parameter_gradients(mlp, trace, output_index).input_jacobian)


def layer_diagnostics(mlp: Mlp, trace: ForwardTrace, i: int, eps: float = DEFAULT_EPS,
                      output_index: int = 0, w_spectral: float | None = None,
                      grad_x_sq: float | None = None) -> LayerDiagnostics:
    """Per-layer quantities ``||w_i||``, ``||h_i||^2``, ``||h_i'||`` and ``A_i``."""
    h = subnetwork_value(trace, i)
    if w_spectral is None:
        w_spectral = spectral_norm(mlp.layers[i - 1].weight, tol=NORM_TOL, max_iter=NORM_MAX_ITER)
    if grad_x_sq is None:
        grad_x_sq = _grad_x_sq(mlp, trace, output_index)
    op, fro = _hprime_norms(mlp, trace, i)
    h2 = frobenius_norm_sq(h)
    a = w_spectral * op
    degenerate = a < eps
    weight_degenerate = degenerate or h2 < eps * eps
    return LayerDiagnostics(
        layer_index=i,
        w_spectral=w_spectral,
        h_norm_sq=h2,
        hprime_opnorm=op,
        hprime_fronorm=fro,
        a_i=a,
        weight_term=None if weight_degenerate else grad_x_sq * h2 / (a * a),
        bias_term=None if degenerate else grad_x_sq / (a * a),
        degenerate=degenerate,
        weight_degenerate=weight_degenerate,
    )


def check_theorem(mlp: Mlp, x, output_index: int = 0, eps: float = DEFAULT_EPS,
                  w_norms: list[float] | None = None) -> TheoremVerdict:
    """Evaluate both sides of the inequality at ``x`` for output ``output_index``."""
    trace = forward(mlp, x)
    bundle = parameter_gradients(mlp, trace, output_index)
    gx2 = frobenius_norm_sq(bundle.input_jacobian)
    rhs = param_grad_norm_sq(bundle)
    if w_norms is None:
        w_norms = weight_spectral_norms(mlp)
    per_layer, skipped = [], []
    total = 0.0
    for i in range(1, mlp.depth + 1):
        diag = layer_diagnostics(mlp, trace, i, eps, output_index, w_norms[i - 1], gx2)
        per_layer.append(diag)
        if diag.degenerate:
            skipped.append((i, f"A_i = {diag.a_i:.3e} < eps = {eps:.1e}"))
            continue
        total += (1.0 + diag.h_norm_sq) / (diag.a_i * diag.a_i)
    lhs = gx2 * total
    all_degenerate = len(skipped) == mlp.depth
    if all_degenerate:
        warnings.warn("every layer is degenerate at this input; lhs is 0", RuntimeWarning, stacklevel=2)
    return TheoremVerdict(lhs, rhs, rhs - lhs, per_layer, skipped, output_index, all_degenerate)


def _require_nondegenerate(mlp: Mlp, trace: ForwardTrace, i: int, eps: float) -> tuple[float, float]:
    w = spectral_norm(mlp.layers[i - 1].weight, tol=NORM_TOL, max_iter=NORM_MAX_ITER)
    op, _ = _hprime_norms(mlp, trace, i)
    if w * op < eps:
        raise DegenerateLayerError(f"layer {i}: ||w_i|| ||h_i'|| = {w * op:.3e} < eps = {eps:.1e}")
    return w, op


def weight_lemma_check(mlp: Mlp, trace: ForwardTrace, i: int, output_index: int = 0,
                       eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """``(||df/dx||^2 ||h_i||^2 / A_i^2,  ||df/dw_i||_F^2)``; expect lhs <= rhs."""
    w, op = _require_nondegenerate(mlp, trace, i, eps)
    bundle = parameter_gradients(mlp, trace, output_index)
    gx2 = frobenius_norm_sq(bundle.input_jacobian)
    h2 = frobenius_norm_sq(subnetwork_value(trace, i))
    return gx2 * h2 / (w * op) ** 2, frobenius_norm_sq(bundle.weight_grads[i - 1])


def bias_lemma_check(mlp: Mlp, trace: ForwardTrace, i: int, output_index: int = 0,
                     eps: float = DEFAULT_EPS) -> tuple[float, float]:
    """``(||df/dx||^2 / A_i^2,  ||df/db_i||^2)``; expect lhs <= rhs."""
    w, op = _require_nondegenerate(mlp, trace, i, eps)
    bundle = parameter_gradients(mlp, trace, output_index)
    gx2 = frobenius_norm_sq(bundle.input_jacobian)
    return gx2 / (w * op) ** 2, frobenius_norm_sq(bundle.bias_grads[i - 1])


def weight_perturbation(mlp: Mlp, trace: ForwardTrace, i: int, delta_x, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Rank-one change of ``w_i`` that mimics moving the input by ``delta_x``.

    ``u = (w_i h_i'(x) dx) h_i(x)^T / ||h_i(x)||^2`` so that
    ``(w_i + u) h_i(x) = w_i (h_i(x) + h_i'(x) dx)``.
    """
    h = subnetwork_value(trace, i)
    h2 = frobenius_norm_sq(h)
    if h2 < eps * eps:
        raise DegenerateLayerError(f"layer {i}: ||h_i(x)||^2 = {h2:.3e} is too small to divide by")
    dz = mlp.layers[i - 1].weight @ (subnetwork_input_jacobian(mlp, trace, i) @ np.asarray(delta_x, float))
    return np.outer(dz, h) / h2


def bias_perturbation(mlp: Mlp, trace: ForwardTrace, i: int, delta_x) -> np.ndarray:
    """``w_i h_i'(x) dx``: the bias shift that mimics moving the input by ``delta_x``."""
    return mlp.layers[i - 1].weight @ (subnetwork_input_jacobian(mlp, trace, i) @ np.asarray(delta_x, float))


def perturbation_residual(mlp: Mlp, x, i: int, delta_x, kind: str = "weight") -> float:
    """``||f_{p_i + u(dx)}(x) - f(x + dx)||`` for ``p`` the weights or biases of layer ``i``."""
    x = np.asarray(x, dtype=np.float64)
    trace = forward(mlp, x)
    moved = mlp.copy()
    if kind == "weight":
        moved.layers[i - 1].weight = moved.layers[i - 1].weight + weight_perturbation(mlp, trace, i, delta_x)
    elif kind == "bias":
        moved.layers[i - 1].bias = moved.layers[i - 1].bias + bias_perturbation(mlp, trace, i, delta_x)
    else:
        raise ValueError(f"kind must be 'weight' or 'bias', got {kind!r}")
    a = predict_batch(moved, x[None, :])[0]
    b = predict_batch(mlp, (x + np.asarray(delta_x, float))[None, :])[0]
    return float(np.linalg.norm(a - b))


def pythagoras_check(bundle: JacobianBundle) -> tuple[float, float]:
    """``(||flattened gradient||^2, sum of per-layer weight and bias parts)``."""
    flat = bundle.flatten()
    return float(flat @ flat), param_grad_norm_sq(bundle)


# ---------------------------------------------------------------------------
# vectorized sweep engine


@dataclass
class BatchVerdict:
    """Column arrays over ``n`` inputs; per-layer arrays have shape ``(n, l)``."""

    lhs: np.ndarray
    rhs: np.ndarray
    grad_x_sq: np.ndarray
    a: np.ndarray
    h_norm_sq: np.ndarray
    weight_lemma_lhs: np.ndarray
    weight_lemma_rhs: np.ndarray
    bias_lemma_lhs: np.ndarray
    bias_lemma_rhs: np.ndarray
    degenerate: np.ndarray

    @property
    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def any_degenerate(self) -> np.ndarray:
        return self.degenerate.any(axis=1)


def check_theorem_batch(mlp: Mlp, xs, output_index: int = 0, eps: float = DEFAULT_EPS,
                        w_norms: list[float] | None = None) -> BatchVerdict:
    """:func:`check_theorem` for many inputs at once, with per-layer lemma sides."""
    trace = forward_batch(mlp, xs)
    n = trace.output.shape[0]
    cot = np.zeros((n, mlp.output_dim))
    cot[:, output_index] = 1.0
    deltas, dx = backward(mlp, trace.pre_activations, cot)
    gx2 = np.einsum("nd,nd->n", dx, dx)
    if w_norms is None:
        w_norms = weight_spectral_norms(mlp)
    jacs = subnetwork_jacobians_batch(mlp, trace)
    l = mlp.depth
    a = np.empty((n, l))
    h2 = np.empty((n, l))
    wl_rhs = np.empty((n, l))
    bl_rhs = np.empty((n, l))
    for k in range(l):
        h = trace.layer_inputs[k]
        h2[:, k] = np.einsum("ni,ni->n", h, h)
        op = np.ones(n) if k == 0 else spectral_norms(jacs[k], tol=NORM_TOL, max_iter=NORM_MAX_ITER)
        a[:, k] = w_norms[k] * op
        d2 = np.einsum("no,no->n", deltas[k], deltas[k])
        # gradient of w_k is the outer product delta h^T
        wl_rhs[:, k] = d2 * h2[:, k]
        bl_rhs[:, k] = d2
    degenerate = a < eps
    safe = np.where(degenerate, 1.0, a)
    inv = np.where(degenerate, 0.0, 1.0 / (safe * safe))
    wl_lhs = gx2[:, None] * h2 * inv
    bl_lhs = gx2[:, None] * inv
    lhs = gx2 * np.sum((1.0 + h2) * inv, axis=1)
    rhs = np.sum(wl_rhs + bl_rhs, axis=1)
    return BatchVerdict(lhs, rhs, gx2, a, h2, wl_lhs, wl_rhs, bl_lhs, bl_rhs, degenerate)
