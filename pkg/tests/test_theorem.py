import warnings

import numpy as np
import pytest

from conftest import build_net
from geomrazor.network import Layer, Mlp, fd_input_jacobian, forward, parameter_gradients, linear_model
from geomrazor.theorem import (
    DegenerateLayerError,
    bias_lemma_check,
    bias_perturbation,
    check_theorem,
    check_theorem_batch,
    layer_diagnostics,
    perturbation_residual,
    pythagoras_check,
    weight_lemma_check,
    weight_perturbation,
)
from oracles import jacobi_singular_values, straight_forward


def dead_relu_net():
    return Mlp([Layer([[1.0, 1.0], [1.0, -1.0]], [-10.0, -10.0], "relu"), Layer([[1.0, 1.0]], [0.0])])


def loglog_slope(mlp, x, i, direction, kind):
    sizes = 1e-2 * 0.5 ** np.arange(7)
    res = [perturbation_residual(mlp, x, i, s * direction, kind) for s in sizes]
    return np.polyfit(np.log(sizes), np.log(res), 1)[0]


class TestLayerDiagnostics:
    def test_first_layer(self):
        mlp = build_net([3, 4, 1], seed=1)
        x = np.array([1.0, -2.0, 0.5])
        d = layer_diagnostics(mlp, forward(mlp, x), 1)
        assert d.hprime_opnorm == 1.0
        assert d.h_norm_sq == pytest.approx(x @ x)

    def test_dead_relu(self):
        mlp = dead_relu_net()
        d = layer_diagnostics(mlp, forward(mlp, [0.3, 0.1]), 2)
        assert d.hprime_opnorm == 0.0 and d.degenerate
        assert d.bias_term is None and d.weight_term is None

    def test_a_i_against_fd_and_jacobi(self, rng):
        mlp = build_net([3, 6, 5, 1], "tanh", seed=3)
        x = rng.standard_normal(3)
        tr = forward(mlp, x)
        for i in (2, 3):
            sub = Mlp(mlp.layers[:i - 1])
            fd = fd_input_jacobian(sub, x, 1e-5)
            ref = jacobi_singular_values(mlp.layers[i - 1].weight)[0] * jacobi_singular_values(fd)[0]
            assert layer_diagnostics(mlp, tr, i).a_i == pytest.approx(ref, abs=1e-5)


class TestCheckTheorem:
    def test_single_linear_scalar_equality(self):
        w = np.array([[0.7, -1.1, 2.0]])
        x = np.array([0.5, 1.5, -0.25])
        v = check_theorem(linear_model(w, [0.3]), x)
        assert v.lhs == pytest.approx(1 + x @ x, rel=1e-13)
        assert v.rhs == pytest.approx(1 + x @ x, rel=1e-13)
        assert abs(v.slack) <= 1e-10 * v.rhs

    def test_constant_network_all_degenerate(self):
        mlp = Mlp([Layer(np.zeros((3, 2)), np.zeros(3), "tanh"), Layer(np.zeros((1, 3)), [0.0])])
        with pytest.warns(RuntimeWarning):
            v = check_theorem(mlp, [1.0, 2.0])
        assert v.all_degenerate and v.lhs == 0.0 and v.holds()
        assert len(v.skipped_layers) == 2

    def test_seeded_sweep_holds(self, rng):
        for seed in range(200):
            mlp = build_net([3, 8, 8, 2], "tanh", seed=seed, scale=1.5)
            v = check_theorem(mlp, rng.standard_normal(3), output_index=seed % 2)
            assert v.slack >= -1e-9 * v.rhs

    def test_partially_dead_layer_is_kept(self):
        mlp = Mlp([Layer([[1.0, 1.0], [1.0, -1.0]], [-10.0, 0.5], "relu"), Layer([[1.0, 1.0]], [0.0])])
        v = check_theorem(mlp, [0.3, 0.1])
        assert [i for i, _ in v.skipped_layers] == []
        assert v.holds()

    def test_relu_nets_including_kinks(self, rng):
        for seed in range(50):
            mlp = build_net([2, 12, 12, 1], "relu", seed=seed)
            x = rng.standard_normal(2)
            # move x so one first-layer unit sits exactly on its kink
            w, b = mlp.layers[0].weight[0], mlp.layers[0].bias[0]
            x_kink = x - (w @ x + b) / (w @ w) * w
            for point in (x, x_kink):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    v = check_theorem(mlp, point)
                assert v.slack >= -1e-9 * v.rhs

    def test_to_dict_has_all_fields(self):
        d = check_theorem(build_net([2, 3, 1]), [0.1, 0.2]).to_dict()
        assert set(d) >= {"lhs", "rhs", "slack", "per_layer", "skipped_layers"}
        assert set(d["per_layer"][0]) >= {"w_spectral", "h_norm_sq", "hprime_opnorm", "a_i", "degenerate"}


class TestLemmas:
    def test_weight_lemma_linear(self):
        mlp = linear_model([[1.0]], [0.0])
        lhs, rhs = weight_lemma_check(mlp, forward(mlp, [3.0]), 1)
        assert lhs == pytest.approx(9.0) and rhs == pytest.approx(9.0)

    def test_weight_lemma_zero_input(self):
        mlp = build_net([2, 3, 1], seed=2)
        lhs, rhs = weight_lemma_check(mlp, forward(mlp, [0.0, 0.0]), 1)
        assert lhs == 0.0 and rhs >= 0.0

    def test_bias_lemma_linear(self):
        mlp = linear_model([[2.0]], [0.0])
        lhs, rhs = bias_lemma_check(mlp, forward(mlp, [3.0]), 1)
        assert lhs == pytest.approx(1.0) and rhs == 1.0

    def test_dead_relu_raises(self):
        mlp = dead_relu_net()
        tr = forward(mlp, [0.3, 0.1])
        with pytest.raises(DegenerateLayerError):
            bias_lemma_check(mlp, tr, 2)
        with pytest.raises(DegenerateLayerError):
            weight_lemma_check(mlp, tr, 2)

    def test_three_layer_sweep(self, rng):
        mlp = build_net([2, 10, 10, 1], "tanh", seed=17, scale=1.5)
        for x in rng.standard_normal((300, 2)):
            tr = forward(mlp, x)
            for i in (1, 2, 3):
                for check in (weight_lemma_check, bias_lemma_check):
                    lhs, rhs = check(mlp, tr, i)
                    assert lhs <= rhs + 1e-9


class TestPerturbations:
    def test_zero_shift(self):
        mlp = build_net([2, 4, 1], seed=1)
        tr = forward(mlp, [0.5, 0.5])
        np.testing.assert_array_equal(weight_perturbation(mlp, tr, 2, np.zeros(2)), np.zeros((1, 4)))
        np.testing.assert_array_equal(bias_perturbation(mlp, tr, 2, np.zeros(2)), np.zeros(1))

    def test_linear_first_layer_exact(self, rng):
        mlp = build_net([3, 5, 1], "tanh", seed=4)
        x, dx = rng.standard_normal(3), 0.1 * rng.standard_normal(3)
        for kind in ("weight", "bias"):
            assert perturbation_residual(mlp, x, 1, dx, kind) < 1e-14

    def test_weight_perturbation_formula(self, rng):
        mlp = build_net([2, 4, 3, 1], "tanh", seed=6)
        x, dx = rng.standard_normal(2), rng.standard_normal(2)
        tr = forward(mlp, x)
        u = weight_perturbation(mlp, tr, 3, dx)
        h = tr.activations[1]
        lin = mlp.layers[2].weight @ (np.array(straight_forward(mlp, x + 1e-7 * dx, 2)) - h) / 1e-7
        np.testing.assert_allclose(u @ h, lin, rtol=1e-5, atol=1e-9)
        assert np.linalg.matrix_rank(u) == 1

    def test_zero_activation_raises(self):
        mlp = build_net([2, 3, 1], seed=1)
        with pytest.raises(DegenerateLayerError):
            weight_perturbation(mlp, forward(mlp, [0.0, 0.0]), 1, np.ones(2))

    def test_quadratic_residuals(self, rng):
        mlp = build_net([2, 8, 8, 1], "tanh", seed=9, scale=1.5)
        x = rng.standard_normal(2)
        direction = rng.standard_normal(2)
        for i in (2, 3):
            for kind in ("weight", "bias"):
                assert 1.8 <= loglog_slope(mlp, x, i, direction, kind) <= 2.2

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            perturbation_residual(build_net([1, 2, 1]), [0.5], 1, [0.1], "gain")


class TestPythagorasAndConsistency:
    def test_zero_gradients(self):
        mlp = Mlp([Layer(np.zeros((1, 2)), [0.0], "tanh"), Layer(np.zeros((1, 1)), [0.0], "relu")])
        assert pythagoras_check(parameter_gradients(mlp, forward(mlp, [1.0, 1.0]))) == (0.0, 0.0)

    def test_deep_net(self):
        mlp = build_net([4, 16, 16, 16, 3], "sigmoid", seed=8)
        total, parts = pythagoras_check(parameter_gradients(mlp, forward(mlp, np.ones(4)), 2))
        assert total == pytest.approx(parts, rel=1e-12)

    def test_lemmas_sum_to_theorem_sides(self, rng):
        mlp = build_net([3, 6, 6, 1], "tanh", seed=12)
        x = rng.standard_normal(3)
        tr = forward(mlp, x)
        v = check_theorem(mlp, x)
        w_parts = [weight_lemma_check(mlp, tr, i) for i in (1, 2, 3)]
        b_parts = [bias_lemma_check(mlp, tr, i) for i in (1, 2, 3)]
        lhs = sum(a for a, _ in w_parts) + sum(a for a, _ in b_parts)
        rhs = sum(b for _, b in w_parts) + sum(b for _, b in b_parts)
        total, parts = pythagoras_check(parameter_gradients(mlp, tr))
        assert lhs == pytest.approx(v.lhs, rel=1e-12)
        assert rhs == pytest.approx(parts, rel=1e-12) and parts == pytest.approx(v.rhs, rel=1e-12)
        assert total == pytest.approx(v.rhs, rel=1e-12)

    def test_batch_matches_single(self, rng):
        mlp = build_net([3, 7, 5, 2], "tanh", seed=14)
        xs = rng.standard_normal((25, 3))
        bv = check_theorem_batch(mlp, xs, output_index=1)
        for n, x in enumerate(xs):
            v = check_theorem(mlp, x, output_index=1)
            assert bv.lhs[n] == pytest.approx(v.lhs, rel=1e-10)
            assert bv.rhs[n] == pytest.approx(v.rhs, rel=1e-12)
        np.testing.assert_allclose(bv.weight_lemma_lhs.sum(1) + bv.bias_lemma_lhs.sum(1), bv.lhs, rtol=1e-12)

    def test_batch_flags_degenerate(self):
        mlp = dead_relu_net()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bv = check_theorem_batch(mlp, np.array([[0.3, 0.1], [0.2, 0.2]]))
        assert bv.degenerate[:, 1].all() and not bv.degenerate[:, 0].any()
        assert np.all(bv.slack >= 0)
