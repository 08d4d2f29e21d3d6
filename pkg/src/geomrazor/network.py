"""Dense multilayer perceptrons with exact input and parameter derivatives.

Layers are numbered ``1..l`` from the input side.  ``h_i`` denotes the
input seen by layer ``i`` (so ``h_1(x) = x``) and layer ``i`` computes
``a_i(w_i h_i + b_i)``.

Single-point operations (:func:`forward`, :func:`input_jacobian`,
:func:`parameter_gradients`, ...) follow the object model of a trace per
input; the ``*_batch`` helpers operate on ``(n, d)`` arrays of inputs and
are what training and quadrature use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import as_matrix, as_vector, frobenius_norm_sq


class Activation(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"

    def apply(self, z):
        z = np.asarray(z, dtype=np.float64)
        if self is Activation.IDENTITY:
            return z.copy()
        if self is Activation.RELU:
            return np.maximum(z, 0.0)
        if self is Activation.TANH:
            return np.tanh(z)
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def derivative(self, z):
        """Elementwise derivative; ReLU uses 0 at the kink."""
        z = np.asarray(z, dtype=np.float64)
        if self is Activation.IDENTITY:
            return np.ones_like(z)
        if self is Activation.RELU:
            return (z > 0.0).astype(np.float64)
        if self is Activation.TANH:
            t = np.tanh(z)
            return 1.0 - t * t
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return s * (1.0 - s)


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weight = as_matrix(self.weight, "weight")
        self.bias = as_vector(self.bias, "bias")
        self.activation = Activation(self.activation)
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ValueError(f"bias length {self.bias.shape[0]} does not match weight rows {self.weight.shape[0]}")

    @property
    def fan_in(self) -> int:
        return self.weight.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class Mlp:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an Mlp needs at least one layer")
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if cur.fan_in != prev.fan_out:
                raise ValueError(
                    f"layer {i + 1} expects {cur.fan_in} inputs but layer {i} produces {prev.fan_out}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def read_only(self) -> "Mlp":
        """A view sharing storage whose arrays refuse writes."""
        views = []
        for l in self.layers:
            w, b = l.weight.view(), l.bias.view()
            w.flags.writeable = False
            b.flags.writeable = False
            layer = Layer.__new__(Layer)
            layer.weight, layer.bias, layer.activation = w, b, l.activation
            views.append(layer)
        out = Mlp.__new__(Mlp)
        out.layers = views
        return out

    def parameters(self) -> np.ndarray:
        """Flattened parameters: per layer, weight (row-major) then bias."""
        return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in self.layers])

    def with_parameters(self, theta) -> "Mlp":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        layers, k = [], 0
        for l in self.layers:
            nw = l.weight.size
            w = theta[k:k + nw].reshape(l.weight.shape)
            k += nw
            b = theta[k:k + l.fan_out]
            k += l.fan_out
            layers.append(Layer(w, b, l.activation))
        return Mlp(layers)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return forward(self, x).output
        return predict_batch(self, x)


def init_mlp(widths: Sequence[int], activation="tanh", output_activation="identity", seed: int = 0) -> Mlp:
    """Glorot-uniform weights, zero biases.

    ``widths`` lists every layer width including input and output, e.g.
    ``[1, 300, 300, 300, 1]``.
    """
    if len(widths) < 2 or any(int(w) < 1 for w in widths):
        raise ValueError(f"widths must hold at least two positive sizes, got {list(widths)}")
    rng = np.random.default_rng(seed)
    act, out_act = Activation(activation), Activation(output_activation)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-a, a, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out), out_act if k == len(widths) - 2 else act))
    return Mlp(layers)


def linear_model(weight, bias) -> Mlp:
    return Mlp([Layer(np.atleast_2d(weight), np.atleast_1d(bias), Activation.IDENTITY)])


# ---------------------------------------------------------------------------
# forward pass


@dataclass
class ForwardTrace:
    input: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]

    @property
    def depth(self) -> int:
        return len(self.pre_activations)


@dataclass
class BatchTrace:
    """Row-stacked traces for ``n`` inputs; ``layer_inputs[i]`` is ``h_{i+1}``."""

    layer_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray = field(repr=False)


def _check_batch(mlp: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.input_dim:
        raise ValueError(f"layer 1 expects inputs of dimension {mlp.input_dim}, got array of shape {x.shape}")
    return x


def forward_batch(mlp: Mlp, x) -> BatchTrace:
    h = _check_batch(mlp, x)
    hs, zs = [], []
    for layer in mlp.layers:
        hs.append(h)
        z = h @ layer.weight.T + layer.bias
        zs.append(z)
        h = layer.activation.apply(z)
    return BatchTrace(hs, zs, h)


def predict_batch(mlp: Mlp, x) -> np.ndarray:
    return forward_batch(mlp, x).output


def forward(mlp: Mlp, x) -> ForwardTrace:
    x = as_vector(x, "x")
    if x.shape[0] != mlp.input_dim:
        raise ValueError(f"layer 1 expects input of dimension {mlp.input_dim}, got {x.shape[0]}")
    h = x
    zs, acts = [], []
    for layer in mlp.layers:
        z = layer.weight @ h + layer.bias
        h = layer.activation.apply(z)
        zs.append(z)
        acts.append(h)
    return ForwardTrace(x, zs, acts)


def _check_index(trace_depth: int, i: int) -> None:
    if not 1 <= i <= trace_depth:
        raise IndexError(f"layer index {i} out of range 1..{trace_depth}")


def subnetwork_value(trace: ForwardTrace, i: int) -> np.ndarray:
    """``h_i(x)``: the raw input for ``i = 1``, else the output of layer ``i - 1``."""
    _check_index(trace.depth, i)
    return trace.input if i == 1 else trace.activations[i - 2]


def subnetwork_input_jacobian(mlp: Mlp, trace: ForwardTrace, i: int) -> np.ndarray:
    """Jacobian of ``h_i`` at the traced input, shape ``(fan_in(i), input_dim)``."""
    _check_index(trace.depth, i)
    jac = np.eye(mlp.input_dim)
    for k in range(i - 1):
        layer = mlp.layers[k]
        jac = layer.activation.derivative(trace.pre_activations[k])[:, None] * (layer.weight @ jac)
    return jac


def subnetwork_jacobians_batch(mlp: Mlp, trace: BatchTrace) -> list[np.ndarray]:
    """Forward-mode ``h_i'(x)`` for every layer and input: list of ``(n, fan_in(i), d)``."""
    n, d = trace.layer_inputs[0].shape
    jac = np.broadcast_to(np.eye(d), (n, d, d))
    out = [jac]
    for k, layer in enumerate(mlp.layers[:-1]):
        wj = np.einsum("oi,nid->nod", layer.weight, jac)
        jac = layer.activation.derivative(trace.pre_activations[k])[:, :, None] * wj
        out.append(jac)
    return out


# ---------------------------------------------------------------------------
# reverse mode


def backward(mlp: Mlp, pre_activations: Sequence[np.ndarray], cotangent: np.ndarray):
    """Back-propagate output cotangents through a (batch) trace.

    ``cotangent`` has shape ``(m, output_dim)``; ``pre_activations`` rows are
    either ``m`` or ``1`` (broadcast).  Returns ``(deltas, dx)`` where
    ``deltas[i]`` is the cotangent of layer ``i+1``'s pre-activation.
    """
    g = np.asarray(cotangent, dtype=np.float64)
    deltas: list[np.ndarray] = [None] * mlp.depth  # type: ignore[list-item]
    for k in range(mlp.depth - 1, -1, -1):
        layer = mlp.layers[k]
        delta = g * layer.activation.derivative(np.atleast_2d(pre_activations[k]))
        deltas[k] = delta
        g = delta @ layer.weight
    return deltas, g


@dataclass
class JacobianBundle:
    input_jacobian: np.ndarray
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    output_index: int | str

    def flatten(self) -> np.ndarray:
        """Parameter gradient in :meth:`Mlp.parameters` order."""
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weight_grads, self.bias_grads)])


def input_jacobian(mlp: Mlp, trace: ForwardTrace) -> np.ndarray:
    """Exact ``df/dx`` at the traced input, shape ``(output_dim, input_dim)``."""
    _, dx = backward(mlp, trace.pre_activations, np.eye(mlp.output_dim))
    return dx


def parameter_gradients(mlp: Mlp, trace: ForwardTrace, output_index: int = 0) -> JacobianBundle:
    if not 0 <= output_index < mlp.output_dim:
        raise IndexError(f"output_index {output_index} out of range 0..{mlp.output_dim - 1}")
    cot = np.zeros((1, mlp.output_dim))
    cot[0, output_index] = 1.0
    deltas, dx = backward(mlp, trace.pre_activations, cot)
    weight_grads, bias_grads = [], []
    for i, delta in enumerate(deltas):
        h = subnetwork_value(trace, i + 1)
        weight_grads.append(np.outer(delta[0], h))
        bias_grads.append(delta[0].copy())
    return JacobianBundle(dx, weight_grads, bias_grads, output_index)


def param_grad_norm_sq(bundle: JacobianBundle) -> float:
    """``sum_i ||grad_{w_i} f||_F^2 + ||grad_{b_i} f||^2`` in layer order."""
    total = 0.0
    for w, b in zip(bundle.weight_grads, bundle.bias_grads):
        total += frobenius_norm_sq(w)
        total += frobenius_norm_sq(b)
    return total


def input_jacobians_batch(mlp: Mlp, x) -> np.ndarray:
    """``(n, output_dim, input_dim)`` stack of exact input Jacobians."""
    trace = forward_batch(mlp, x)
    n = trace.output.shape[0]
    out = np.empty((n, mlp.output_dim, mlp.input_dim))
    for k in range(mlp.output_dim):
        cot = np.zeros((n, mlp.output_dim))
        cot[:, k] = 1.0
        _, dx = backward(mlp, trace.pre_activations, cot)
        out[:, k, :] = dx
    return out


# ---------------------------------------------------------------------------
# finite-difference oracles


def fd_input_jacobian(mlp: Mlp, x, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` in each input coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = as_vector(x, "x")
    d = x.shape[0]
    probes = np.concatenate([x + step * np.eye(d), x - step * np.eye(d)])
    f = predict_batch(mlp, probes)
    return ((f[:d] - f[d:]) / (2.0 * step)).T


def fd_parameter_gradients(mlp: Mlp, x, output_index: int = 0, step: float = 1e-5) -> JacobianBundle:
    """Central differences of ``f_k`` in every weight and bias.

    Perturbing entry ``(r, c)`` of ``w_i`` shifts pre-activation ``r`` of
    layer ``i`` by ``step * h_i[c]``; all perturbations of one layer are
    pushed through the remaining layers as a single batch.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = as_vector(x, "x")
    trace = forward(mlp, x)
    weight_grads, bias_grads = [], []
    for i, layer in enumerate(mlp.layers):
        h = subnetwork_value(trace, i + 1)
        z = trace.pre_activations[i]
        rows, cols = layer.weight.shape
        p = rows * cols + rows
        shift = np.zeros((p, rows))
        r_idx = np.repeat(np.arange(rows), cols)
        shift[np.arange(rows * cols), r_idx] = np.tile(h, rows)
        shift[rows * cols + np.arange(rows), np.arange(rows)] = 1.0
        zz = np.concatenate([z + step * shift, z - step * shift])
        out = layer.activation.apply(zz)
        for later in mlp.layers[i + 1:]:
            out = later.activation.apply(out @ later.weight.T + later.bias)
        g = (out[:p, output_index] - out[p:, output_index]) / (2.0 * step)
        weight_grads.append(g[:rows * cols].reshape(rows, cols))
        bias_grads.append(g[rows * cols:])
    jac = fd_input_jacobian(mlp, x, step)[output_index:output_index + 1]
    return JacobianBundle(jac, weight_grads, bias_grads, output_index)


# ---------------------------------------------------------------------------
# checkpoints


def mlp_to_dict(mlp: Mlp) -> dict:
    return {
        "input_dim": mlp.input_dim,
        "layers": [
            {
                "rows": l.fan_out,
                "cols": l.fan_in,
                "weight": [float(v) for v in l.weight.ravel()],
                "bias": [float(v) for v in l.bias],
                "activation": l.activation.value,
            }
            for l in mlp.layers
        ],
    }


def mlp_from_dict(d: dict) -> Mlp:
    try:
        layers = []
        for k, ld in enumerate(d["layers"]):
            rows, cols = int(ld["rows"]), int(ld["cols"])
            w = np.asarray(ld["weight"], dtype=np.float64)
            if w.size != rows * cols:
                raise ValueError(f"layers[{k}].weight has {w.size} entries, expected {rows}x{cols}")
            layers.append(Layer(w.reshape(rows, cols), ld["bias"], Activation(ld["activation"])))
        mlp = Mlp(layers)
    except KeyError as exc:
        raise ValueError(f"checkpoint is missing field {exc}") from None
    if int(d["input_dim"]) != mlp.input_dim:
        raise ValueError(f"input_dim {d['input_dim']} does not match layer 1 with {mlp.input_dim} columns")
    return mlp


def save_checkpoint(mlp: Mlp, path) -> None:
    # json writes floats with repr(), the shortest decimal that round-trips exactly
    Path(path).write_text(json.dumps(mlp_to_dict(mlp)))


def load_checkpoint(path) -> Mlp:
    return mlp_from_dict(json.loads(Path(path).read_text()))
