"""Geometric complexity of a network over its training features.

All continuous measures integrate a function of the input gradient over a
feature polytope with a :class:`QuadratureRule`; the discrete Dirichlet
energy uses the data points themselves with volume element ``1/|D|``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import _accel
from .network import Mlp, input_jacobians_batch, predict_batch

HULL_TOL = 1e-12
MIN_REJECTION_EFFICIENCY = 1e-3


class DegeneratePolytopeError(ValueError):
    """The data features span a zero-volume set; only discrete measures apply."""


class RejectionEfficiencyError(RuntimeError):
    pass


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.array(self.x, dtype=np.float64, copy=True)
        self.y = np.array(self.y, dtype=np.float64, copy=True)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.y.ndim == 1:
            self.y = self.y[:, None]
        if self.x.ndim != 2 or self.y.ndim != 2:
            raise ValueError("dataset x and y must be 1-D or 2-D arrays")
        if self.x.shape[0] == 0:
            raise ValueError("dataset must be nonempty")
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.x.shape[0]} inputs but {self.y.shape[0]} targets")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("dataset has non-finite values")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def input_dim(self) -> int:
        return self.x.shape[1]

    @property
    def output_dim(self) -> int:
        return self.y.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        try:
            return cls(d["x"], d["y"])
        except KeyError as exc:
            raise ValueError(f"dataset file is missing field {exc}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# feature polytopes


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DegeneratePolytopeError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    dim = 1

    @property
    def volume(self) -> float:
        return self.hi - self.lo

    @property
    def bounds(self):
        return np.array([self.lo]), np.array([self.hi])

    def contains(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1)
        return (p >= self.lo) & (p <= self.hi)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D of equal length")
        if not np.all(lo < hi):
            raise DegeneratePolytopeError("box needs lo < hi in every coordinate")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def bounds(self):
        return np.array(self.lo), np.array(self.hi)

    def contains(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return np.all((p >= self.bounds[0]) & (p <= self.bounds[1]), axis=1)


class Hull:
    """Convex hull of points in 2 or 3 dimensions, kept in half-space form."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or not 2 <= pts.shape[1] <= 3:
            raise ValueError("Hull supports 2-D or 3-D points")
        if pts.shape[0] < pts.shape[1] + 1:
            raise DegeneratePolytopeError(f"need at least {pts.shape[1] + 1} points for a {pts.shape[1]}-D hull")
        try:
            hull = ConvexHull(pts)
        except QhullError as exc:
            raise DegeneratePolytopeError(f"feature points are affinely dependent: {exc}".splitlines()[0]) from None
        if not hull.volume > 0:
            raise DegeneratePolytopeError("feature hull has zero volume")
        self.vertices = pts[hull.vertices]
        self.equations = np.ascontiguousarray(hull.equations)
        self._volume = float(hull.volume)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def volume(self) -> float:
        return self._volume

    @property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def contains(self, pts) -> np.ndarray:
        return _accel.halfspace_contains(np.atleast_2d(pts), self.equations, HULL_TOL)

    def __repr__(self) -> str:
        return f"Hull(n_vertices={len(self.vertices)}, dim={self.dim}, volume={self.volume:.6g})"


FeaturePolytope = Union[Interval, Box, Hull]


def polytope_from_data(dataset: Dataset, mode: str = "auto") -> FeaturePolytope:
    """Tight interval/box, or the convex hull, of the dataset features."""
    x = dataset.x
    d = x.shape[1]
    lo, hi = x.min(axis=0), x.max(axis=0)
    if np.any(lo == hi):
        flat = np.flatnonzero(lo == hi).tolist()
        raise DegeneratePolytopeError(
            f"features are constant in coordinate(s) {flat}; the polytope has zero volume, "
            "use the discrete measures only"
        )
    if mode == "auto":
        mode = "interval" if d == 1 else ("hull" if d <= 3 else "box")
    if mode == "interval" or (mode == "hull" and d == 1):
        if d != 1:
            raise ValueError(f"interval polytope needs 1-D features, got {d}-D")
        return Interval(float(lo[0]), float(hi[0]))
    if mode == "box":
        return Box(tuple(lo), tuple(hi))
    if mode == "hull":
        if d > 3:
            raise ValueError("hull polytopes are limited to input_dim <= 3; use mode='box'")
        return Hull(x)
    raise ValueError(f"unknown polytope mode {mode!r}")


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class Grid1D:
    n_segments: int = 4096

    def __post_init__(self):
        if self.n_segments < 2:
            raise ValueError("Grid1D needs n_segments >= 2")


@dataclass(frozen=True)
class MonteCarlo:
    n_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("MonteCarlo needs n_samples >= 1")


QuadratureSpec = Union[Grid1D, MonteCarlo]


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    volume: float
    trapezoid: bool

    def integrate(self, values: np.ndarray) -> float:
        if self.trapezoid:
            return _accel.trapezoid(self.nodes[:, 0], values)
        return self.volume * float(np.mean(values))

    def standard_error(self, values: np.ndarray) -> float:
        """Sampling standard error (zero for the deterministic grid)."""
        if self.trapezoid or len(values) < 2:
            return 0.0
        return self.volume * float(np.std(values, ddof=1)) / np.sqrt(len(values))


def quadrature_rule(polytope: FeaturePolytope, quad: QuadratureSpec) -> QuadratureRule:
    if isinstance(quad, Grid1D):
        if not isinstance(polytope, Interval):
            raise ValueError("Grid1D quadrature needs an Interval; use MonteCarlo for boxes and hulls")
        nodes = np.linspace(polytope.lo, polytope.hi, quad.n_segments + 1)[:, None]
        return QuadratureRule(nodes, polytope.volume, True)
    rng = np.random.default_rng(quad.seed)
    lo, hi = polytope.bounds
    pts = rng.uniform(lo, hi, size=(quad.n_samples, polytope.dim))
    if isinstance(polytope, Hull):
        inside = polytope.contains(pts)
        eff = inside.mean()
        if eff < MIN_REJECTION_EFFICIENCY:
            raise RejectionEfficiencyError(
                f"hull rejection efficiency {eff:.2e} is below {MIN_REJECTION_EFFICIENCY:g}; "
                "use a Box polytope instead"
            )
        pts = pts[inside]
    return QuadratureRule(pts, polytope.volume, False)


def _grad_sq(mlp: Mlp, nodes: np.ndarray) -> np.ndarray:
    jac = input_jacobians_batch(mlp, nodes)
    return np.einsum("nkd,nkd->n", jac, jac)


def _check_dim(mlp: Mlp, polytope: FeaturePolytope) -> None:
    if polytope.dim != mlp.input_dim:
        raise ValueError(f"polytope is {polytope.dim}-D but the network takes {mlp.input_dim} inputs")


def _integrate(mlp, polytope, quad, integrand: Callable[[np.ndarray], np.ndarray]):
    _check_dim(mlp, polytope)
    rule = quadrature_rule(polytope, quad)
    vals = integrand(_grad_sq(mlp, rule.nodes))
    return rule.integrate(vals), rule.standard_error(vals)


# ---------------------------------------------------------------------------
# measures


@dataclass
class ComplexityReport:
    discrete_de: float | None = None
    continuous_de: float | None = None
    graph_volume: float | None = None
    polytope_volume: float | None = None
    taylor_residual: float | None = None
    arc_length: float | None = None
    continuous_de_stderr: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def discrete_dirichlet_energy(mlp: Mlp, dataset: Dataset) -> float:
    """``1/(2|D|) * sum_x ||df/dx(x)||_F^2`` over the dataset features."""
    if dataset.input_dim != mlp.input_dim:
        raise ValueError(f"dataset is {dataset.input_dim}-D but the network takes {mlp.input_dim} inputs")
    return float(np.sum(_grad_sq(mlp, dataset.x))) / (2.0 * len(dataset))


def continuous_dirichlet_energy(mlp: Mlp, polytope: FeaturePolytope, quad: QuadratureSpec,
                                return_stderr: bool = False):
    value, err = _integrate(mlp, polytope, quad, lambda z: 0.5 * z)
    return (value, err) if return_stderr else value


def graph_volume(mlp: Mlp, polytope: FeaturePolytope, quad: QuadratureSpec) -> float:
    """Quadrature of ``sqrt(1 + ||df/dx||^2)``; the arc length when ``d = 1``."""
    value, _ = _integrate(mlp, polytope, quad, lambda z: np.sqrt(1.0 + z))
    return value


def taylor_decomposition(mlp: Mlp, polytope: FeaturePolytope, quad: QuadratureSpec) -> ComplexityReport:
    """Graph volume split into polytope volume + Dirichlet energy + remainder.

    All three integrals share one set of nodes.  The remainder integrand
    ``sqrt(1+z) - 1 - z/2`` is evaluated as ``-z^2 / (2 (sqrt(1+z) + 1)^2)``
    so it stays non-positive without cancellation.
    """
    _check_dim(mlp, polytope)
    rule = quadrature_rule(polytope, quad)
    z = _grad_sq(mlp, rule.nodes)
    s = np.sqrt(1.0 + z)
    return ComplexityReport(
        graph_volume=rule.integrate(s),
        polytope_volume=rule.integrate(np.ones_like(z)),
        continuous_de=rule.integrate(0.5 * z),
        taylor_residual=rule.integrate(-z * z / (2.0 * (s + 1.0) ** 2)),
        continuous_de_stderr=rule.standard_error(0.5 * z),
    )


def quartic_gradient_integral(mlp: Mlp, polytope: FeaturePolytope, quad: QuadratureSpec) -> float:
    """Quadrature of ``||df/dx||^4``, the scale of the Taylor remainder."""
    value, _ = _integrate(mlp, polytope, quad, lambda z: z * z)
    return value


def arc_length_1d(mlp: Mlp, interval: Interval, n_segments: int = 4096) -> float:
    """Length of the polyline through ``(x, f(x))`` at ``n_segments + 1`` uniform nodes."""
    if mlp.input_dim != 1 or mlp.output_dim != 1:
        raise ValueError("arc length needs a scalar function of one variable")
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    x = np.linspace(interval.lo, interval.hi, n_segments + 1)
    fx = predict_batch(mlp, x[:, None])[:, 0]
    return _accel.polyline_length(x, fx)


def chord_path_length(dataset: Dataset) -> float:
    """Length of the x-sorted polyline through the 1-D data points."""
    if dataset.input_dim != 1 or dataset.output_dim != 1:
        raise ValueError("chord path length needs 1-D inputs and targets")
    order = np.argsort(dataset.x[:, 0], kind="stable")
    x, y = dataset.x[order, 0], dataset.y[order, 0]
    dup = np.flatnonzero(np.diff(x) == 0)
    if np.any(y[dup] != y[dup + 1]):
        raise ValueError(f"duplicate x value {x[dup[0]]} with different targets; no function interpolates them")
    return _accel.polyline_length(x, y)


def measure(mlp: Mlp, dataset: Dataset, quad: QuadratureSpec | None = None,
            polytope_mode: str = "auto") -> ComplexityReport:
    """Every applicable measure for ``mlp`` over ``dataset``.

    Continuous measures are skipped (left ``None``) when the feature polytope
    is degenerate.
    """
    report = ComplexityReport(discrete_de=discrete_dirichlet_energy(mlp, dataset))
    try:
        poly = polytope_from_data(dataset, polytope_mode)
    except DegeneratePolytopeError:
        return report
    if quad is None:
        quad = Grid1D() if isinstance(poly, Interval) else MonteCarlo()
    tay = taylor_decomposition(mlp, poly, quad)
    report.continuous_de = tay.continuous_de
    report.graph_volume = tay.graph_volume
    report.polytope_volume = tay.polytope_volume
    report.taylor_residual = tay.taylor_residual
    report.continuous_de_stderr = tay.continuous_de_stderr
    if isinstance(poly, Interval) and mlp.output_dim == 1:
        n = quad.n_segments if isinstance(quad, Grid1D) else 4096
        report.arc_length = arc_length_1d(mlp, poly, n)
    return report
