"""Dataset generators, experiment specs and the two headline studies.

``run_regression_1d`` trains a wide ReLU net on a handful of 1-D points and
compares the learned arc length with the shortest interpolating path.
``run_lr_sweep`` trains a small classifier at several learning rates and
records the Dirichlet energy at the step of best validation accuracy.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import spearmanr

from .complexity import Dataset, chord_path_length
from .network import Mlp, init_mlp, predict_batch
from .training import (
    LossKind,
    TrainConfig,
    TrainingDiverged,
    TrainRecord,
    data_interval,
    loss_surface_slope,
    sgd_train,
)

SNAPSHOT_GRID = 512
SWEEP_COLUMNS = ["learning_rate", "seed", "best_val_accuracy", "step_of_best",
                 "discrete_de_at_best", "slope_at_best", "diverged"]


# ---------------------------------------------------------------------------
# datasets


def make_1d_dataset(n_points: int = 10, x_range=(-1.0, 1.0), generator: str = "random_smooth",
                    seed: int = 0) -> Dataset:
    """Seeded 1-D regression points with distinct, sorted x values.

    ``random_smooth``: both range endpoints plus uniform interior points,
    targets from a random sum of three sinusoids with N(0, 0.05^2) noise.
    ``fixed_seeded``: evenly spaced x, targets uniform on [-1, 1].
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    lo, hi = map(float, x_range)
    if not lo < hi:
        raise ValueError("x_range must satisfy lo < hi")
    rng = np.random.default_rng(seed)
    if generator == "fixed_seeded":
        x = np.linspace(lo, hi, n_points)
        return Dataset(x, rng.uniform(-1.0, 1.0, n_points))
    if generator != "random_smooth":
        raise ValueError(f"unknown 1-D generator {generator!r}")
    while True:
        x = np.sort(np.concatenate([[lo, hi], rng.uniform(lo, hi, n_points - 2)]))
        if np.all(np.diff(x) > 0):
            break
    amp = rng.uniform(0.2, 0.5, 3)
    freq = rng.uniform(1.0, 4.0, 3)
    phase = rng.uniform(0.0, 2 * np.pi, 3)
    y = np.sin(np.outer(x, freq) + phase) @ amp + 0.05 * rng.standard_normal(n_points)
    return Dataset(x, y)


def class_counts(kind: str, n: int, n_classes: int = 2) -> list[int]:
    if kind == "two_moons":
        return [n // 2, n - n // 2]
    return [len(range(c, n, n_classes)) for c in range(n_classes)]


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    return np.eye(k)[labels]


def make_classification_dataset(kind: str = "two_moons", n: int = 1000, noise: float = 0.1,
                                seed: int = 0, n_classes: int = 2) -> tuple[Dataset, Dataset]:
    """Seeded toy classification data with a stratified 80/20 train/val split."""
    if n < 10:
        raise ValueError("n must be >= 10")
    rng = np.random.default_rng(seed)
    if kind == "two_moons":
        n_outer = n // 2
        t_out = rng.uniform(0.0, np.pi, n_outer)
        t_in = rng.uniform(0.0, np.pi, n - n_outer)
        x = np.concatenate([np.c_[np.cos(t_out), np.sin(t_out)],
                            np.c_[1.0 - np.cos(t_in), 0.5 - np.sin(t_in)]])
        labels = np.r_[np.zeros(n_outer, int), np.ones(n - n_outer, int)]
        k = 2
    elif kind == "gaussian_blobs":
        k = n_classes
        angles = 2 * np.pi * np.arange(k) / k
        centers = 5.0 * np.c_[np.cos(angles), np.sin(angles)]
        labels = np.arange(n) % k
        x = centers[labels]
    else:
        raise ValueError(f"unknown classification dataset {kind!r}")
    x = x + noise * rng.standard_normal(x.shape)
    train_idx, val_idx = [], []
    for c in range(k):
        idx = rng.permutation(np.flatnonzero(labels == c))
        cut = int(round(0.8 * len(idx)))
        train_idx.append(idx[:cut])
        val_idx.append(idx[cut:])
    tr = rng.permutation(np.concatenate(train_idx))
    va = rng.permutation(np.concatenate(val_idx))
    y = _one_hot(labels, k)
    return Dataset(x[tr], y[tr]), Dataset(x[va], y[va])


def accuracy(mlp: Mlp, dataset: Dataset) -> float:
    pred = np.argmax(predict_batch(mlp, dataset.x), axis=1)
    return float(np.mean(pred == np.argmax(dataset.y, axis=1)))


# ---------------------------------------------------------------------------
# experiment specs


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RegressionDataSpec(_Strict):
    generator: Literal["random_smooth", "fixed_seeded"]
    n_points: int = Field(10, ge=2)
    x_range: tuple[float, float] = (-1.0, 1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _range(self):
        if not self.x_range[0] < self.x_range[1]:
            raise ValueError("x_range must satisfy lo < hi")
        return self

    @property
    def train_size(self) -> int:
        return self.n_points


class ClassificationDataSpec(_Strict):
    generator: Literal["two_moons", "gaussian_blobs"]
    n: int = Field(1000, ge=10)
    noise: float = Field(0.1, ge=0)
    n_classes: int = Field(2, ge=2)
    seed: int = 0

    @property
    def train_size(self) -> int:
        return sum(int(round(0.8 * c)) for c in class_counts(self.generator, self.n, self.n_classes))


DatasetSpec = Annotated[Union[RegressionDataSpec, ClassificationDataSpec], Field(discriminator="generator")]


class ModelSpec(_Strict):
    hidden_widths: list[Annotated[int, Field(ge=1)]] = [64, 64]
    activation: Literal["identity", "relu", "tanh", "sigmoid"] = "tanh"
    output_activation: Literal["identity", "relu", "tanh", "sigmoid"] = "identity"
    init_seed: int = 0


class TrainConfigSpec(_Strict):
    learning_rate: float = Field(ge=0, allow_inf_nan=False)
    steps: int = Field(ge=0)
    batch_size: Optional[int] = Field(None, ge=1)
    seed: int = 0
    track_every: int = Field(100, ge=1)
    loss: Optional[Literal["half_squared_error", "softmax_cross_entropy"]] = None


class SweepSpec(_Strict):
    learning_rates: list[Annotated[float, Field(gt=0, allow_inf_nan=False)]] = Field(min_length=1)
    seeds: list[int] = Field(min_length=1)


class ExperimentSpec(_Strict):
    """Everything needed to reproduce a run, seeds included.

    ``batch_size`` defaults to the full training set and ``loss`` to half
    squared error for regression data and softmax cross-entropy for
    classification data.
    """

    name: str
    dataset: DatasetSpec
    model: ModelSpec = ModelSpec()
    train_config: TrainConfigSpec
    sweep: Optional[SweepSpec] = None
    snapshot_steps: Optional[list[Annotated[int, Field(ge=0)]]] = None
    arc_segments: int = Field(1024, ge=1)

    @model_validator(mode="after")
    def _consistency(self):
        steps = self.train_config.steps
        if self.snapshot_steps is not None:
            if list(self.snapshot_steps) != sorted(self.snapshot_steps):
                raise ValueError("snapshot_steps must be sorted")
            if self.snapshot_steps and self.snapshot_steps[-1] > steps:
                raise ValueError(f"snapshot_steps must lie within [0, {steps}]")
        bs = self.train_config.batch_size
        if bs is not None and bs > self.dataset.train_size:
            raise ValueError(f"train_config.batch_size {bs} exceeds the {self.dataset.train_size} training points")
        return self

    @property
    def is_regression(self) -> bool:
        return isinstance(self.dataset, RegressionDataSpec)

    def build_data(self) -> tuple[Dataset, Dataset | None]:
        d = self.dataset
        if isinstance(d, RegressionDataSpec):
            return make_1d_dataset(d.n_points, d.x_range, d.generator, d.seed), None
        return make_classification_dataset(d.generator, d.n, d.noise, d.seed, d.n_classes)

    def build_model(self, input_dim: int, output_dim: int, init_seed: int | None = None) -> Mlp:
        m = self.model
        widths = [input_dim, *m.hidden_widths, output_dim]
        seed = m.init_seed if init_seed is None else init_seed
        return init_mlp(widths, m.activation, m.output_activation, seed)

    def build_train_config(self, n_train: int, learning_rate: float | None = None,
                           seed: int | None = None) -> TrainConfig:
        t = self.train_config
        loss = t.loss or ("half_squared_error" if self.is_regression else "softmax_cross_entropy")
        return TrainConfig(
            learning_rate=t.learning_rate if learning_rate is None else learning_rate,
            steps=t.steps,
            batch_size=n_train if t.batch_size is None else t.batch_size,
            seed=t.seed if seed is None else seed,
            track_every=t.track_every,
            loss=LossKind(loss),
        )


# ---------------------------------------------------------------------------
# runners


def run_train(spec: ExperimentSpec) -> tuple[Mlp, list[TrainRecord]]:
    train, _ = spec.build_data()
    mlp = spec.build_model(train.input_dim, train.output_dim)
    return sgd_train(mlp, train, spec.build_train_config(len(train)), arc_segments=spec.arc_segments)


def run_regression_1d(spec: ExperimentSpec):
    """Train on 1-D data; return ``(records, snapshots, summary)``.

    ``snapshots`` maps each requested step to ``(x_grid, f(x_grid))`` on a
    512-point grid spanning the data.
    """
    if not spec.is_regression:
        raise ValueError("run_regression_1d needs a 1-D regression dataset")
    data, _ = spec.build_data()
    interval = data_interval(data)
    grid = np.linspace(interval.lo, interval.hi, SNAPSHOT_GRID)
    wanted = set(spec.snapshot_steps or ())
    snapshots: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def snap(step, mlp, _record):
        if step in wanted:
            snapshots[step] = (grid, predict_batch(mlp, grid[:, None])[:, 0])

    mlp = spec.build_model(1, 1)
    net, records = sgd_train(mlp, data, spec.build_train_config(len(data)), hooks=[snap],
                             arc_segments=spec.arc_segments)
    final = records[-1]
    chord = chord_path_length(data)
    summary = {
        "name": spec.name,
        "steps": spec.train_config.steps,
        "final_train_loss": final.train_loss,
        "final_arc_length": final.arc_length,
        "chord_path_length": chord,
        "arc_chord_ratio": final.arc_length / chord,
    }
    return records, snapshots, summary


def write_snapshots(snapshots: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for step in sorted(snapshots):
        x, fx = snapshots[step]
        p = out_dir / f"snapshot_step{step:06d}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "f_x"])
            w.writerows([repr(float(a)), repr(float(b))] for a, b in zip(x, fx))
        paths.append(p)
    return paths


@dataclass
class SweepRow:
    learning_rate: float
    seed: int
    best_val_accuracy: float
    step_of_best: int
    discrete_de_at_best: float
    slope_at_best: float
    diverged: bool = False


@dataclass
class SweepResult:
    rows: list[SweepRow]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                d = asdict(r)
                w.writerow([str(d[c]).lower() if c == "diverged" else repr(d[c]) for c in SWEEP_COLUMNS])

    def means_by_lr(self, column: str) -> tuple[np.ndarray, np.ndarray]:
        """Learning rates (ascending) and the mean of ``column`` over converged seeds."""
        lrs = sorted({r.learning_rate for r in self.rows if not r.diverged})
        means = [np.mean([getattr(r, column) for r in self.rows if r.learning_rate == lr and not r.diverged])
                 for lr in lrs]
        return np.array(lrs), np.array(means)

    def spearman(self, column: str) -> float:
        lrs, means = self.means_by_lr(column)
        if len(lrs) < 2:
            return float("nan")
        return float(spearmanr(lrs, means).statistic)


def _sweep_cell(spec: ExperimentSpec, lr: float, seed: int) -> SweepRow:
    train, val = spec.build_data()
    config = spec.build_train_config(len(train), learning_rate=lr, seed=seed)
    mlp = spec.build_model(train.input_dim, train.output_dim, init_seed=seed)
    best = {"acc": -1.0, "step": -1, "de": float("nan"), "slope": float("nan")}

    def track(step, net, record):
        if record is None:
            return
        acc = accuracy(net, val)
        # strict improvement keeps the earliest step reaching the running max
        if acc > best["acc"]:
            best.update(acc=acc, step=step, de=record.discrete_de,
                        slope=loss_surface_slope(net, train, config.loss))

    try:
        sgd_train(mlp, train, config, hooks=[track], arc_segments=spec.arc_segments)
    except TrainingDiverged:
        return SweepRow(lr, seed, best["acc"], best["step"], best["de"], best["slope"], diverged=True)
    return SweepRow(lr, seed, best["acc"], best["step"], best["de"], best["slope"])


def worker_count() -> int:
    env = os.environ.get("GEOMRAZOR_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_lr_sweep(spec: ExperimentSpec, workers: int | None = None) -> SweepResult:
    if spec.sweep is None:
        raise ValueError("run_lr_sweep needs a 'sweep' section")
    if spec.is_regression:
        raise ValueError("run_lr_sweep needs a classification dataset")
    cells = [(lr, s) for lr in spec.sweep.learning_rates for s in spec.sweep.seeds]
    workers = min(worker_count() if workers is None else workers, len(cells))
    if workers <= 1:
        rows = [_sweep_cell(spec, lr, s) for lr, s in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, [spec] * len(cells), *zip(*cells)))
    rows.sort(key=lambda r: (r.learning_rate, r.seed))
    return SweepResult(rows)
