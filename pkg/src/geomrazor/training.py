"""Losses, the implicit-gradient-regularization penalty and plain minibatch SGD."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .complexity import Dataset, Interval, arc_length_1d, discrete_dirichlet_energy
from .linalg import as_vector
from .network import Mlp, backward, forward_batch

RECORD_COLUMNS = ["step", "train_loss", "discrete_de", "igr_penalty", "modified_loss", "arc_length", "param_norm_sq"]


class LossKind(str, Enum):
    HALF_SQUARED_ERROR = "half_squared_error"
    SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, step: int, last_record: "TrainRecord | None"):
        super().__init__(message)
        self.step = step
        self.last_record = last_record


def _check_one_hot(y: np.ndarray) -> None:
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=1) == 1.0)):
        raise ValueError("softmax cross-entropy needs one-hot targets")


def loss_terms(out: np.ndarray, y: np.ndarray, loss: LossKind) -> tuple[np.ndarray, np.ndarray]:
    """Per-example losses ``(n,)`` and their gradients w.r.t. the outputs ``(n, k)``."""
    loss = LossKind(loss)
    if out.shape != y.shape:
        raise ValueError(f"predictions {out.shape} and targets {y.shape} differ in shape")
    if loss is LossKind.HALF_SQUARED_ERROR:
        r = out - y
        return 0.5 * np.einsum("nk,nk->n", r, r), r
    _check_one_hot(y)
    m = out.max(axis=1, keepdims=True)
    e = np.exp(out - m)
    s = e.sum(axis=1, keepdims=True)
    lse = (m + np.log(s))[:, 0]
    return lse - np.einsum("nk,nk->n", out, y), e / s - y


def loss_value(mlp: Mlp, dataset: Dataset, loss: LossKind) -> float:
    per, _ = loss_terms(forward_batch(mlp, dataset.x).output, dataset.y, loss)
    return float(np.mean(per))


def _loss_backward(mlp: Mlp, x: np.ndarray, y: np.ndarray, loss: LossKind):
    trace = forward_batch(mlp, x)
    per, cot = loss_terms(trace.output, y, loss)
    deltas, _ = backward(mlp, trace.pre_activations, cot)
    return per, trace, deltas


def per_example_loss_gradient(mlp: Mlp, x, y, loss: LossKind) -> np.ndarray:
    """Flattened ``dL(x, theta)/dtheta`` in :meth:`Mlp.parameters` order."""
    x, y = as_vector(x, "x"), as_vector(y, "y")
    _, trace, deltas = _loss_backward(mlp, x[None, :], y[None, :], loss)
    parts = []
    for h, d in zip(trace.layer_inputs, deltas):
        parts.append(np.outer(d[0], h[0]).ravel())
        parts.append(d[0])
    return np.concatenate(parts)


def per_example_grad_norm_sq(mlp: Mlp, dataset: Dataset, loss: LossKind) -> np.ndarray:
    """``||dL(x_j)/dtheta||^2`` for every example, without materializing gradients.

    The weight gradient of one example is the outer product ``delta h^T``,
    whose squared Frobenius norm is ``||delta||^2 ||h||^2``.
    """
    _, trace, deltas = _loss_backward(mlp, dataset.x, dataset.y, loss)
    total = np.zeros(len(dataset))
    for h, d in zip(trace.layer_inputs, deltas):
        total += np.einsum("no,no->n", d, d) * (np.einsum("ni,ni->n", h, h) + 1.0)
    return total


def igr_penalty(mlp: Mlp, dataset: Dataset, loss: LossKind) -> float:
    """``1/(4|D|) sum_x ||dL(x)/dtheta||^2``; the modified loss adds ``h`` times this."""
    return float(np.sum(per_example_grad_norm_sq(mlp, dataset, loss))) / (4.0 * len(dataset))


def batch_gradient(mlp: Mlp, x: np.ndarray, y: np.ndarray, loss: LossKind):
    """Mean loss over the rows and its gradient as per-layer ``(dW, db)`` pairs."""
    per, trace, deltas = _loss_backward(mlp, x, y, loss)
    n = x.shape[0]
    grads = [(d.T @ h / n, d.sum(axis=0) / n) for h, d in zip(trace.layer_inputs, deltas)]
    return float(np.mean(per)), grads


def loss_surface_slope(mlp: Mlp, dataset: Dataset, loss: LossKind) -> float:
    """Squared norm of the full-batch loss gradient."""
    _, grads = batch_gradient(mlp, dataset.x, dataset.y, loss)
    return float(sum(np.sum(gw * gw) + np.sum(gb * gb) for gw, gb in grads))


def residual_decomposition_check(mlp: Mlp, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Half-squared-error gradient computed directly and as ``(f(x) - y) df/dtheta``."""
    if mlp.output_dim != 1:
        raise ValueError("the signed-residual form needs a scalar-output network")
    x, y = as_vector(x, "x"), as_vector(y, "y")
    direct = per_example_loss_gradient(mlp, x, y, LossKind.HALF_SQUARED_ERROR)
    trace = forward_batch(mlp, x[None, :])
    deltas, _ = backward(mlp, trace.pre_activations, np.ones((1, 1)))
    grad_f = np.concatenate([np.concatenate([np.outer(d[0], h[0]).ravel(), d[0]])
                             for h, d in zip(trace.layer_inputs, deltas)])
    residual = trace.output[0, 0] - y[0]
    return direct, residual * grad_f


# ---------------------------------------------------------------------------
# SGD


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    steps: int
    batch_size: int
    seed: int = 0
    track_every: int = 100
    loss: LossKind = LossKind.HALF_SQUARED_ERROR

    def __post_init__(self):
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError("learning_rate must be finite and >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.track_every < 1:
            raise ValueError("track_every must be >= 1")
        object.__setattr__(self, "loss", LossKind(self.loss))


@dataclass
class TrainRecord:
    step: int
    train_loss: float
    discrete_de: float
    igr_penalty: float
    modified_loss: float
    arc_length: Optional[float]
    param_norm_sq: float

    def is_finite(self) -> bool:
        vals = [self.train_loss, self.discrete_de, self.igr_penalty, self.param_norm_sq]
        return bool(np.all(np.isfinite(vals)))


Hook = Callable[[int, Mlp, Optional[TrainRecord]], None]


def data_interval(dataset: Dataset) -> Interval | None:
    if dataset.input_dim != 1 or dataset.output_dim != 1:
        return None
    lo, hi = float(dataset.x.min()), float(dataset.x.max())
    return Interval(lo, hi) if lo < hi else None


def compute_record(mlp: Mlp, dataset: Dataset, config: TrainConfig, step: int,
                   arc_segments: int = 1024) -> TrainRecord:
    """All tracked metrics on the full dataset."""
    train_loss = loss_value(mlp, dataset, config.loss)
    penalty = igr_penalty(mlp, dataset, config.loss)
    interval = data_interval(dataset)
    theta = mlp.parameters()
    return TrainRecord(
        step=step,
        train_loss=train_loss,
        discrete_de=discrete_dirichlet_energy(mlp, dataset),
        igr_penalty=penalty,
        modified_loss=train_loss + config.learning_rate * penalty,
        arc_length=None if interval is None else arc_length_1d(mlp, interval, arc_segments),
        param_norm_sq=float(theta @ theta),
    )


def sgd_train(mlp: Mlp, dataset: Dataset, config: TrainConfig, hooks: Iterable[Hook] = (),
              arc_segments: int = 1024) -> tuple[Mlp, list[TrainRecord]]:
    """Vanilla minibatch SGD on a copy of ``mlp``.

    Minibatches come from a fresh seeded permutation each epoch (the last
    batch of an epoch may be short).  Records are taken at step 0, every
    ``track_every`` steps, and at the final step.  Hooks are called after
    every step (and once at step 0) with a read-only view of the network and
    the record for that step, or ``None`` if the step is not tracked.
    """
    if config.batch_size > len(dataset):
        raise ValueError(f"batch_size {config.batch_size} exceeds dataset size {len(dataset)}")
    if dataset.input_dim != mlp.input_dim or dataset.output_dim != mlp.output_dim:
        raise ValueError("dataset and network dimensions disagree")
    hooks = list(hooks)
    net = mlp.copy()
    rng = np.random.default_rng(config.seed)
    n, bs, lr = len(dataset), config.batch_size, config.learning_rate

    record = compute_record(net, dataset, config, 0, arc_segments)
    records = [record]
    for hook in hooks:
        hook(0, net.read_only(), record)

    order, pos = rng.permutation(n), 0
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, config.steps + 1):
            if pos >= n:
                order, pos = rng.permutation(n), 0
            idx = order[pos:pos + bs]
            pos += bs
            batch_loss, grads = batch_gradient(net, dataset.x[idx], dataset.y[idx], config.loss)
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(f"minibatch loss became {batch_loss} at step {step}", step, records[-1])
            for layer, (gw, gb) in zip(net.layers, grads):
                layer.weight -= lr * gw
                layer.bias -= lr * gb
            record = None
            if step % config.track_every == 0 or step == config.steps:
                record = compute_record(net, dataset, config, step, arc_segments)
                if not record.is_finite():
                    raise TrainingDiverged(f"metrics became non-finite at step {step}", step, records[-1])
                records.append(record)
            if hooks:
                view = net.read_only()
                for hook in hooks:
                    hook(step, view, record)
    return net, records


def write_records_csv(records: Iterable[TrainRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for r in records:
            d = asdict(r)
            w.writerow(["" if d[c] is None else repr(d[c]) for c in RECORD_COLUMNS])


def read_records_csv(path) -> list[TrainRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for f in fields(TrainRecord):
                v = row[f.name]
                kw[f.name] = int(v) if f.name == "step" else (None if v == "" else float(v))
            out.append(TrainRecord(**kw))
    return out
