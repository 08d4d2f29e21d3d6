import math

import numpy as np
import pytest

from conftest import build_net
from geomrazor.complexity import (
    Box,
    Dataset,
    DegeneratePolytopeError,
    Grid1D,
    Hull,
    Interval,
    MonteCarlo,
    RejectionEfficiencyError,
    arc_length_1d,
    chord_path_length,
    continuous_dirichlet_energy,
    discrete_dirichlet_energy,
    graph_volume,
    measure,
    polytope_from_data,
    quadrature_rule,
    quartic_gradient_integral,
    taylor_decomposition,
)
from geomrazor.network import Layer, Mlp, linear_model
from oracles import richardson_derivative, richardson_integral

IDENT = linear_model([[1.0]], [0.0])


def const_net(d=1, c=0.7):
    return Mlp([Layer(np.zeros((1, d)), [c], "identity")])


def relu_net():
    return Mlp([Layer([[1.0]], [0.0], "relu")])


def tanh_net():
    return Mlp([Layer([[1.0]], [0.0], "tanh")])


class TestDataset:
    def test_promotes_and_round_trips(self, tmp_path):
        ds = Dataset(np.arange(3.0), np.ones(3))
        assert ds.x.shape == (3, 1) and ds.y.shape == (3, 1)
        ds.save(tmp_path / "d.json")
        back = Dataset.load(tmp_path / "d.json")
        np.testing.assert_array_equal(back.x, ds.x)
        np.testing.assert_array_equal(back.y, ds.y)

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 1)), np.zeros((2, 1)))


class TestDiscreteDirichletEnergy:
    def test_linear_model(self, rng):
        for _ in range(20):
            w = rng.standard_normal((1, 4))
            ds = Dataset(rng.standard_normal((9, 4)), np.zeros(9))
            assert discrete_dirichlet_energy(linear_model(w, [0.3]), ds) == pytest.approx(0.5 * float(np.sum(w * w)), rel=1e-12)

    def test_constant(self):
        assert discrete_dirichlet_energy(const_net(2), Dataset(np.ones((4, 2)), np.zeros(4))) == 0.0

    def test_relu_two_points(self):
        ds = Dataset([-1.0, 2.0], [0.0, 0.0])
        fd = [richardson_derivative(lambda t: max(t, 0.0), x, step=0.1) for x in (-1.0, 2.0)]
        assert discrete_dirichlet_energy(relu_net(), ds) == pytest.approx(0.25 * sum(g * g for g in fd), rel=1e-12)
        assert discrete_dirichlet_energy(relu_net(), ds) == 0.25

    def test_vector_output_sums_rows(self):
        w = np.array([[1.0, 2.0], [3.0, 0.0]])
        ds = Dataset(np.zeros((2, 2)), np.zeros((2, 2)))
        assert discrete_dirichlet_energy(linear_model(w, [0.0, 0.0]), ds) == pytest.approx(7.0)


class TestContinuousMeasures:
    def test_identity_on_unit_interval(self):
        for quad in (Grid1D(8), MonteCarlo(100)):
            assert continuous_dirichlet_energy(IDENT, Interval(0, 1), quad) == pytest.approx(0.5, rel=1e-14)
            assert graph_volume(IDENT, Interval(0, 1), quad) == pytest.approx(math.sqrt(2), rel=1e-14)

    def test_constant(self):
        assert continuous_dirichlet_energy(const_net(), Interval(-1, 3), Grid1D(16)) == 0.0
        assert graph_volume(const_net(), Interval(-1, 3), Grid1D(16)) == pytest.approx(4.0)

    def test_tanh_against_romberg(self):
        ref = richardson_integral(lambda t: 0.5 / math.cosh(t) ** 4, -2.0, 2.0)
        got = continuous_dirichlet_energy(tanh_net(), Interval(-2, 2), Grid1D(4096))
        assert abs(got - ref) / ref < 1e-4

    def test_linear_on_unit_box(self):
        w = np.array([[0.6, -1.3]])
        got = graph_volume(linear_model(w, [0.0]), Box((0, 0), (1, 1)), MonteCarlo(1000, seed=3))
        assert got == pytest.approx(math.sqrt(1 + float(np.sum(w * w))), rel=1e-14)

    def test_monte_carlo_seed_spread_within_three_stderr(self):
        mlp = build_net([2, 10, 1], "tanh", seed=5, scale=2.0)
        poly = Box((-1, -1), (1, 1))
        ref, _ = continuous_dirichlet_energy(mlp, poly, MonteCarlo(400_000, seed=99), return_stderr=True)
        for seed in range(5):
            val, se = continuous_dirichlet_energy(mlp, poly, MonteCarlo(20_000, seed=seed), return_stderr=True)
            assert abs(val - ref) < 3 * se * math.sqrt(1 + 20_000 / 400_000)

    def test_hull_volume_weighting(self):
        tri = Hull([[0, 0], [1, 0], [0, 1]])
        assert tri.volume == pytest.approx(0.5)
        w = np.array([[2.0, 1.0]])
        got = continuous_dirichlet_energy(linear_model(w, [0.0]), tri, MonteCarlo(5000, seed=1))
        assert got == pytest.approx(0.5 * 5.0 * 0.5, rel=1e-13)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            graph_volume(IDENT, Box((0, 0), (1, 1)), MonteCarlo(10))
        with pytest.raises(ValueError):
            quadrature_rule(Box((0, 0), (1, 1)), Grid1D(8))


class TestTaylor:
    def test_constant_residual_zero(self):
        rep = taylor_decomposition(const_net(), Interval(0, 2), Grid1D(64))
        assert rep.taylor_residual == 0.0
        assert rep.graph_volume == pytest.approx(rep.polytope_volume)

    def test_residual_nonpositive_and_sandwich(self):
        for seed in range(10):
            mlp = build_net([1, 16, 16, 1], "tanh", seed=seed, scale=3.0)
            rep = taylor_decomposition(mlp, Interval(-2, 2), Grid1D(2048))
            assert rep.taylor_residual <= 0
            assert rep.polytope_volume <= rep.graph_volume <= rep.polytope_volume + rep.continuous_de
            total = rep.polytope_volume + rep.continuous_de + rep.taylor_residual
            assert total == pytest.approx(rep.graph_volume, rel=1e-12)

    def test_small_gradient_bound(self):
        mlp = build_net([2, 8, 1], "tanh", seed=2, scale=0.05)
        poly = Box((-1, -1), (1, 1))
        rep = taylor_decomposition(mlp, poly, MonteCarlo(2000))
        q = quartic_gradient_integral(mlp, poly, MonteCarlo(2000))
        assert 0 <= -rep.taylor_residual <= q / 8


class TestArcLength:
    def test_examples(self):
        assert arc_length_1d(IDENT, Interval(0, 1), 7) == pytest.approx(math.sqrt(2))
        assert arc_length_1d(const_net(), Interval(-1, 2), 5) == pytest.approx(3.0)
        assert arc_length_1d(relu_net(), Interval(-1, 1), 10) == pytest.approx(1 + math.sqrt(2), rel=1e-14)

    def test_monotone_under_refinement(self):
        mlp = build_net([1, 20, 20, 1], "tanh", seed=7, scale=3.0)
        lengths = [arc_length_1d(mlp, Interval(-2, 2), 2 ** k) for k in range(1, 14)]
        assert all(b >= a for a, b in zip(lengths, lengths[1:]))

    def test_converges_to_graph_volume(self):
        for seed in range(3):
            mlp = build_net([1, 20, 20, 1], "tanh", seed=seed, scale=3.0)
            a = arc_length_1d(mlp, Interval(-2, 2), 2 ** 16)
            g = graph_volume(mlp, Interval(-2, 2), Grid1D(2 ** 16))
            assert abs(a - g) / g < 1e-4

    def test_requires_scalar_1d(self):
        with pytest.raises(ValueError):
            arc_length_1d(build_net([2, 1]), Interval(0, 1))


class TestChordPath:
    def test_examples(self):
        assert chord_path_length(Dataset([1.0, 0.0], [1.0, 0.0])) == pytest.approx(math.sqrt(2))
        assert chord_path_length(Dataset([0.0, 2.0, 1.0], [0.0, 2.0, 1.0])) == pytest.approx(2 * math.sqrt(2))

    def test_brute_force(self, rng):
        x, y = rng.uniform(-1, 1, 10), rng.standard_normal(10)
        pts = sorted(zip(x.tolist(), y.tolist()))
        ref = sum(math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:]))
        assert chord_path_length(Dataset(x, y)) == pytest.approx(ref, rel=1e-14)

    def test_conflicting_duplicates(self):
        with pytest.raises(ValueError):
            chord_path_length(Dataset([0.0, 0.0, 1.0], [1.0, 2.0, 0.0]))


class TestPolytopes:
    def test_interval(self):
        assert polytope_from_data(Dataset([-1.0, 0.0, 2.0], np.zeros(3))) == Interval(-1.0, 2.0)

    def test_square_hull_and_box(self):
        ds = Dataset([[0, 0], [1, 0], [0, 1], [1, 1]], np.zeros(4))
        hull = polytope_from_data(ds)
        assert isinstance(hull, Hull) and len(hull.vertices) == 4
        assert hull.volume == pytest.approx(1.0)
        assert polytope_from_data(ds, "box").volume == pytest.approx(hull.volume)

    def test_high_dim_defaults_to_box(self, rng):
        poly = polytope_from_data(Dataset(rng.standard_normal((20, 5)), np.zeros(20)))
        assert isinstance(poly, Box) and poly.dim == 5
        with pytest.raises(ValueError):
            polytope_from_data(Dataset(rng.standard_normal((20, 5)), np.zeros(20)), "hull")

    def test_degenerate(self):
        with pytest.raises(DegeneratePolytopeError):
            polytope_from_data(Dataset([[0, 1], [1, 1], [2, 1]], np.zeros(3)))
        with pytest.raises(DegeneratePolytopeError):
            Hull([[0, 0], [1, 1], [2, 2]])

    def test_hull_contains(self):
        tri = Hull([[0, 0], [1, 0], [0, 1]])
        np.testing.assert_array_equal(tri.contains([[0.2, 0.2], [0.6, 0.6], [0, 0]]), [True, False, True])

    def test_rejection_efficiency_guard(self):
        sliver = Hull([[0, 0], [1, 1], [1, 1 + 1e-5], [0, 1e-5]])
        with pytest.raises(RejectionEfficiencyError):
            quadrature_rule(sliver, MonteCarlo(10_000))

    def test_3d_hull_mc_volume(self):
        tet = Hull([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        rule = quadrature_rule(tet, MonteCarlo(200_000, seed=4))
        frac = len(rule.nodes) / 200_000
        assert frac == pytest.approx(1 / 6, abs=0.005)


class TestMeasure:
    def test_one_d_report(self):
        ds = Dataset(np.linspace(-1, 1, 5), np.zeros(5))
        rep = measure(IDENT, ds)
        assert rep.discrete_de == pytest.approx(0.5)
        assert rep.continuous_de == pytest.approx(1.0)
        assert rep.arc_length == pytest.approx(2 * math.sqrt(2))

    def test_degenerate_features_keep_discrete_only(self):
        ds = Dataset([[0, 1], [1, 1], [2, 1]], np.zeros(3))
        rep = measure(build_net([2, 1]), ds)
        assert rep.discrete_de is not None and rep.continuous_de is None
