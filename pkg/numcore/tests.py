import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from numcore.constants.numcore_constants import ADAM, LINEAR, ORTHOGONAL, SGD, TANH, UNIFORM_SCALED, ZEROS
from numcore.exceptions import CorruptWeightFile, DimensionMismatch, ShapeMismatch, UnknownFormatVersion
from numcore.gradcheck import finite_difference_gradient, relative_error
from numcore.initializers import init_weights, orthogonal_matrix
from numcore.network import NetSpec, NetWeights, backward, forward
from numcore.optim import make_optimizer, optimizer_step, soft_update
from numcore.storage import load_net, net_paths, save_net


def _unit_net(weight, hidden_weight=1.0):
    spec = NetSpec(input_dim=1, hidden_size=1, hidden_layers=1, output_dim=1, output_activation=LINEAR)
    weights = NetWeights(
        weights=[np.array([[hidden_weight]]), np.array([[weight]])],
        biases=[np.zeros(1), np.zeros(1)],
    )
    return spec, weights


class ForwardTests(SimpleTestCase):

    def test_zero_weights_give_zero_output(self):
        spec = NetSpec(3, 5, 2, 2, output_activation=TANH)
        weights = init_weights(spec, ZEROS, seed=0)
        np.testing.assert_array_equal(forward(spec, weights, [0.3, -1.0, 7.0]), np.zeros(2))

    def test_leaky_relu_slope_on_negative_input(self):
        spec, weights = _unit_net(1.0)
        self.assertAlmostEqual(forward(spec, weights, [-1.0])[0], -0.01, places=15)

    def test_seeded_two_layer_net_matches_hand_computation(self):
        spec = NetSpec(4, 8, 1, 2, output_activation=TANH)
        weights = init_weights(spec, UNIFORM_SCALED, seed=7)
        x = np.array([0.5, -0.25, 1.0, 2.0])

        hidden = weights.weights[0] @ x + weights.biases[0]
        hidden = np.where(hidden > 0, hidden, 0.01 * hidden)
        expected = np.tanh(weights.weights[1] @ hidden + weights.biases[1])

        np.testing.assert_allclose(forward(spec, weights, x), expected, rtol=0, atol=1e-12)

    def test_forward_is_deterministic_and_batch_consistent(self):
        spec = NetSpec(4, 8, 2, 2, output_activation=TANH)
        weights = init_weights(spec, UNIFORM_SCALED, seed=3)
        batch = np.random.default_rng(1).normal(size=(6, 4))
        out = forward(spec, weights, batch)
        np.testing.assert_array_equal(out, forward(spec, weights, batch))
        for row, expected in zip(batch, out):
            np.testing.assert_allclose(forward(spec, weights, row), expected, atol=1e-14)

    def test_tanh_outputs_stay_inside_open_interval(self):
        spec = NetSpec(4, 16, 2, 2, output_activation=TANH)
        weights = init_weights(spec, UNIFORM_SCALED, seed=11)
        out = forward(spec, weights, np.random.default_rng(2).normal(size=(200, 4)))
        self.assertTrue(np.all(np.abs(out) < 1.0))

    def test_wrong_input_length_is_rejected(self):
        spec = NetSpec(4, 8, 1, 2)
        weights = init_weights(spec, UNIFORM_SCALED, seed=0)
        with self.assertRaises(DimensionMismatch):
            forward(spec, weights, [1.0, 2.0, 3.0])

    def test_invalid_spec_is_rejected(self):
        with self.assertRaises(ValueError):
            NetSpec(0, 8, 1, 2)
        with self.assertRaises(ValueError):
            NetSpec(4, 8, 1, 2, output_activation='relu')


class BackwardTests(SimpleTestCase):

    def test_zero_output_gradient_gives_zero_gradients(self):
        spec = NetSpec(3, 4, 2, 2, output_activation=TANH)
        weights = init_weights(spec, UNIFORM_SCALED, seed=0)
        result = backward(spec, weights, [1.0, 2.0, 3.0], np.zeros(2))
        for grad in result.parameter_gradients.parameters():
            self.assertFalse(np.any(grad))
        self.assertFalse(np.any(result.input_gradient))

    def test_chain_rule_on_scalar_net(self):
        w, x, g = 1.5, 0.8, -2.0
        spec, weights = _unit_net(w)
        result = backward(spec, weights, [x], [g])
        self.assertAlmostEqual(result.parameter_gradients.weights[1][0, 0], g * x)
        self.assertAlmostEqual(result.input_gradient[0], g * w)

    def test_gradient_shapes_mirror_weights(self):
        spec = NetSpec(5, 7, 3, 2)
        weights = init_weights(spec, UNIFORM_SCALED, seed=4)
        result = backward(spec, weights, np.ones(5), np.ones(2))
        for grad, param in zip(result.parameter_gradients.parameters(), weights.parameters()):
            self.assertEqual(grad.shape, param.shape)
        self.assertEqual(result.input_gradient.shape, (5,))

    def test_wrong_output_gradient_length_is_rejected(self):
        spec = NetSpec(2, 3, 1, 2)
        weights = init_weights(spec, UNIFORM_SCALED, seed=0)
        with self.assertRaises(DimensionMismatch):
            backward(spec, weights, [1.0, 1.0], [1.0, 2.0, 3.0])

    def test_backward_agrees_with_finite_differences_on_random_nets(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for case in range(100):
            spec = NetSpec(
                input_dim=int(rng.integers(1, 5)),
                hidden_size=int(rng.integers(1, 6)),
                hidden_layers=int(rng.integers(1, 3)),
                output_dim=int(rng.integers(1, 4)),
                output_activation=TANH if case % 2 else LINEAR,
            )
            weights = init_weights(spec, UNIFORM_SCALED, seed=case)
            for bias in weights.biases:
                bias[:] = rng.normal(scale=0.1, size=bias.shape)
            x = rng.normal(size=(3, spec.input_dim))
            g = rng.normal(size=(3, spec.output_dim))

            analytic = backward(spec, weights, x, g).parameter_gradients
            numeric = finite_difference_gradient(lambda w: np.sum(forward(spec, w, x) * g), weights)
            worst = max(worst, relative_error(analytic, numeric))
        self.assertLessEqual(worst, 1e-4)

    def test_input_gradient_agrees_with_finite_differences(self):
        spec = NetSpec(3, 6, 2, 2, output_activation=TANH)
        weights = init_weights(spec, UNIFORM_SCALED, seed=9)
        x = np.array([0.4, -0.7, 1.1])
        g = np.array([0.3, -1.2])
        analytic = backward(spec, weights, x, g).input_gradient
        numeric = finite_difference_gradient(lambda arrays: np.dot(forward(spec, weights, arrays[0]), g), [x.copy()])
        self.assertLessEqual(relative_error([analytic], numeric), 1e-4)


class FiniteDifferenceTests(SimpleTestCase):

    def test_quadratic_loss(self):
        w = np.array([1.0, 2.0])
        grad = finite_difference_gradient(lambda arrays: 0.5 * np.sum(arrays[0] ** 2), [w])
        np.testing.assert_allclose(grad[0], [1.0, 2.0], atol=1e-6)
        np.testing.assert_array_equal(w, [1.0, 2.0])

    def test_constant_loss(self):
        grad = finite_difference_gradient(lambda arrays: 3.0, [np.array([4.0, -1.0, 0.5])])
        np.testing.assert_allclose(grad[0], 0.0, atol=1e-9)

    def test_rejects_non_positive_epsilon(self):
        with self.assertRaises(ValueError):
            finite_difference_gradient(lambda arrays: 0.0, [np.zeros(1)], epsilon=0.0)


class InitTests(SimpleTestCase):

    def test_square_orthogonal_matrix(self):
        q = orthogonal_matrix((4, 4), np.random.default_rng(0))
        np.testing.assert_allclose(q.T @ q, np.eye(4), atol=1e-6)

    def test_tall_matrix_has_unit_columns(self):
        q = orthogonal_matrix((96, 32), np.random.default_rng(5))
        np.testing.assert_allclose(np.linalg.norm(q, axis=0), np.ones(32), atol=1e-6)
        self.assertLessEqual(np.max(np.abs(q.T @ q - np.eye(32))), 1e-6)

    def test_wide_matrix_has_orthonormal_rows(self):
        q = orthogonal_matrix((2, 96), np.random.default_rng(5))
        np.testing.assert_allclose(q @ q.T, np.eye(2), atol=1e-6)

    def test_same_seed_is_bitwise_identical(self):
        spec = NetSpec(5, 16, 3, 96)
        for scheme in (ORTHOGONAL, UNIFORM_SCALED):
            first = init_weights(spec, scheme, seed=42).flat()
            second = init_weights(spec, scheme, seed=42).flat()
            self.assertEqual(first.tobytes(), second.tobytes())

    def test_unknown_scheme(self):
        with self.assertRaises(ValueError):
            init_weights(NetSpec(1, 1, 1, 1), 'xavier', seed=0)


class OptimizerTests(SimpleTestCase):

    def test_sgd_step(self):
        opt = make_optimizer(SGD, 0.1, [np.array([1.0])])
        new, opt = optimizer_step(opt, [np.array([1.0])], [np.array([2.0])])
        self.assertAlmostEqual(new[0][0], 0.8)
        self.assertEqual(opt.step, 1)

    def test_zero_gradient_leaves_weights_unchanged(self):
        spec = NetSpec(3, 4, 1, 2)
        weights = init_weights(spec, UNIFORM_SCALED, seed=1)
        for kind in (SGD, ADAM):
            opt = make_optimizer(kind, 0.01, weights)
            new, _ = optimizer_step(opt, weights, weights.zeros_like())
            np.testing.assert_array_equal(new.flat(), weights.flat())

    def test_adam_minimises_square(self):
        w = [np.array([5.0])]
        opt = make_optimizer(ADAM, 0.1, w)
        for _ in range(200):
            w, opt = optimizer_step(opt, w, [2.0 * w[0]])
        self.assertLess(abs(w[0][0]), 0.1)
        self.assertEqual(opt.step, 200)

    def test_shape_mismatch(self):
        opt = make_optimizer(ADAM, 0.1, [np.zeros(2)])
        with self.assertRaises(ShapeMismatch):
            optimizer_step(opt, [np.zeros(2)], [np.zeros(3)])
        with self.assertRaises(ShapeMismatch):
            optimizer_step(opt, [np.zeros(4)], [np.zeros(4)])

    def test_learning_rate_must_be_positive(self):
        with self.assertRaises(ValueError):
            make_optimizer(SGD, 0.0, [np.zeros(1)])

    def test_soft_update_with_tau_one_copies_online(self):
        spec = NetSpec(2, 3, 1, 1)
        online = init_weights(spec, UNIFORM_SCALED, seed=1)
        target = init_weights(spec, UNIFORM_SCALED, seed=2)
        np.testing.assert_array_equal(soft_update(target, online, 1.0).flat(), online.flat())


class StorageTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.stem = Path(self.tmp.name) / 'actor'

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load_preserve_bits(self):
        spec = NetSpec(28, 16, 2, 2, output_activation=TANH)
        weights = init_weights(spec, UNIFORM_SCALED, seed=3)
        save_net(self.stem, spec, weights, seed=3)
        loaded_spec, loaded, manifest = load_net(self.stem)
        self.assertEqual(loaded_spec, spec)
        self.assertEqual(loaded.flat().tobytes(), weights.flat().tobytes())
        self.assertEqual(manifest['seed'], 3)

    def test_array_file_is_little_endian_float64(self):
        spec = NetSpec(1, 1, 1, 1)
        weights = init_weights(spec, UNIFORM_SCALED, seed=0)
        _, array_path = save_net(self.stem, spec, weights)
        self.assertEqual(array_path.stat().st_size, 8 * spec.parameter_count)

    def test_unknown_version_is_rejected(self):
        spec = NetSpec(2, 2, 1, 1)
        save_net(self.stem, spec, init_weights(spec, UNIFORM_SCALED, seed=0))
        manifest_path, _ = net_paths(self.stem)
        manifest_path.write_text(manifest_path.read_text().replace('"format_version": 1', '"format_version": 99'))
        with self.assertRaises(UnknownFormatVersion):
            load_net(self.stem)

    def test_truncated_array_is_rejected(self):
        spec = NetSpec(2, 2, 1, 1)
        _, array_path = save_net(self.stem, spec, init_weights(spec, UNIFORM_SCALED, seed=0))
        array_path.write_bytes(array_path.read_bytes()[:-8])
        with self.assertRaises(CorruptWeightFile):
            load_net(self.stem)
