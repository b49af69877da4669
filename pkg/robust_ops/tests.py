import io
import math
import tempfile
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from django.test import SimpleTestCase, override_settings

from config.exceptions import (
    AttackError, ConfigurationError, GaborParameterError, ShapeError,
)
from search_space.models import FULL_CATALOG, OperationKind
from .attacks import fgsm_random_init, pgd_attack, signed_gradient_attack
from .gabor import (
    GABOR_FLOOR, clamp_gabor_bank, gabor_bank, gabor_bank_gradients, gabor_kernel,
    gabor_param_gradients,
)
from .models import AttackConfig, GaborParams
from .ops import (
    avg_pool, conv2d, init_op_weights, max_pool, nonlocal_means,
    nonlocal_means_backward, op_backward, op_forward,
)
from .tensors import dump_tensor, read_tensor, write_tensor


def numeric_gradient(loss, array, step=1e-6):
    """Différences centrées ; `array` est modifié sur place puis restauré"""
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        saved = array[index]
        array[index] = saved + step
        upper = loss()
        array[index] = saved - step
        lower = loss()
        array[index] = saved
        grad[index] = (upper - lower) / (2 * step)
    return grad


def naive_conv(x, weight, dilation=1, groups=1):
    channels, height, width = x.shape
    out_channels, group_channels, size, _ = weight.shape
    pad = dilation * (size - 1) // 2
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((out_channels, height, width))
    per_group = out_channels // groups
    for o in range(out_channels):
        group = o // per_group
        for c in range(group_channels):
            source = group * group_channels + c
            for h in range(height):
                for w in range(width):
                    for i in range(size):
                        for j in range(size):
                            out[o, h, w] += (
                                weight[o, c, i, j] * padded[source, h + i * dilation, w + j * dilation]
                            )
    return out


def pooling_margin(x):
    """Plus petit écart entre les deux plus grandes valeurs d'une fenêtre 3×3"""
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    padded = np.pad(x, pad, constant_values=-np.inf)
    windows = sliding_window_view(padded, (3, 3), axis=(-2, -1)).reshape(*x.shape, 9)
    ordered = np.sort(windows, axis=-1)
    return float(np.min(ordered[..., -1] - ordered[..., -2]))


def reference_gabor(sigma, gamma, wavelength, psi, theta, size):
    center = size // 2
    kernel = np.zeros((size, size))
    for row in range(size):
        for col in range(size):
            x, y = col - center, row - center
            x_rot = x * math.cos(theta) + y * math.sin(theta)
            y_rot = -x * math.sin(theta) + y * math.cos(theta)
            envelope = math.exp(-(x_rot ** 2 + gamma ** 2 * y_rot ** 2) / (2 * sigma ** 2))
            kernel[row, col] = envelope * math.cos(2 * math.pi * x_rot / wavelength + psi)
    return kernel


def reference_nonlocal_means(x, weighting):
    channels, height, width = x.shape
    locations = [(h, w) for h in range(height) for w in range(width)]
    z = np.zeros_like(x)
    for p in locations:
        for q in locations:
            weight = 1.0 if weighting == 'uniform' else float(np.dot(x[:, p[0], p[1]], x[:, q[0], q[1]]))
            z[:, p[0], p[1]] += weight * x[:, q[0], q[1]]
    return z / len(locations)


class LinearModel:
    """Régression logistique : loss = log(1 + exp(-y w·x))"""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.calls = 0

    def input_gradient(self, x, y):
        self.calls += 1
        margin = y * np.sum(self.weights * x)
        loss = math.log1p(math.exp(-margin))
        return loss, -y * self.weights / (1.0 + math.exp(margin))


class BrokenModel:
    def input_gradient(self, x, y):
        return float('nan'), np.zeros_like(x)


# ================================
# GABOR
# ================================

class GaborTests(SimpleTestCase):

    def test_reference_kernel(self):
        kernel = gabor_kernel(GaborParams(sigma=0.5, gamma=1.0, wavelength=2.0, psi=0.0, theta=0.0))
        self.assertAlmostEqual(kernel[1, 1], 1.0, places=15)
        self.assertAlmostEqual(kernel[1, 2], -math.exp(-2), places=15)
        self.assertAlmostEqual(kernel[1, 0], -math.exp(-2), places=15)
        self.assertAlmostEqual(kernel[0, 1], math.exp(-2), places=15)
        self.assertAlmostEqual(kernel[0, 0], -math.exp(-4), places=15)

    def test_quarter_turn_rotates_the_kernel(self):
        params = dict(sigma=1.2, gamma=0.6, wavelength=2.5, psi=0.3)
        base = gabor_kernel(GaborParams(theta=0.0, **params), size=5)
        turned = gabor_kernel(GaborParams(theta=math.pi / 2, **params), size=5)
        np.testing.assert_allclose(turned, np.rot90(base, -1), atol=1e-12)

    def test_parameter_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        for size in (3, 5):
            upstream = rng.normal(size=(size, size))
            values = np.array([1.1, 0.7, 3.0, 0.2, 0.9])
            analytic = gabor_param_gradients(GaborParams.from_array(values), size, upstream)
            numeric = numeric_gradient(
                lambda: np.sum(upstream * gabor_kernel(GaborParams.from_array(values), size)), values
            )
            np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_bank_layout(self):
        bank = np.array([[1.0, 0.5, 2.0, 0.0, 0.0], [0.8, 1.0, 3.0, 0.1, 1.0]])
        kernels = gabor_bank(bank, 3)
        self.assertEqual(kernels.shape, (2, 1, 3, 3))
        np.testing.assert_array_equal(kernels[1, 0], gabor_kernel(GaborParams.from_array(bank[1])))
        self.assertEqual(gabor_bank_gradients(bank, 3, np.ones((2, 1, 3, 3))).shape, (2, 5))

    def test_invalid_parameters(self):
        with self.assertRaises(GaborParameterError):
            GaborParams(sigma=0.0, gamma=1.0, wavelength=2.0, psi=0.0, theta=0.0)
        with self.assertRaises(GaborParameterError):
            GaborParams(sigma=1.0, gamma=1.0, wavelength=-1.0, psi=0.0, theta=0.0)
        params = GaborParams(sigma=1.0, gamma=1.0, wavelength=2.0, psi=0.0, theta=0.0)
        with self.assertRaises(GaborParameterError):
            gabor_kernel(params, size=4)
        with self.assertRaises(GaborParameterError):
            gabor_param_gradients(params, 3, np.ones((5, 5)))

    def test_kernels_match_scalar_formula(self):
        rng = np.random.default_rng(10)
        for point in range(50):
            values = (
                rng.uniform(0.5, 2.0), rng.uniform(0.3, 1.5), rng.uniform(1.5, 5.0),
                rng.uniform(-math.pi, math.pi), rng.uniform(0.0, math.pi),
            )
            size = 3 if point % 2 else 5
            np.testing.assert_allclose(
                gabor_kernel(GaborParams(*values), size), reference_gabor(*values, size),
                rtol=1e-12, atol=1e-14, err_msg=f"point {point}",
            )

    def test_phase_gradient_at_the_center(self):
        upstream = np.zeros((3, 3))
        upstream[1, 1] = 1.7
        for psi in (-2.0, 0.0, 0.4, 1.3):
            params = GaborParams(sigma=0.9, gamma=0.7, wavelength=2.5, psi=psi, theta=0.6)
            grads = gabor_param_gradients(params, 3, upstream)
            self.assertAlmostEqual(grads[3], -math.sin(psi) * 1.7, places=12)

    def test_zero_upstream_gives_zero_gradients(self):
        params = GaborParams(sigma=1.1, gamma=0.7, wavelength=3.0, psi=0.2, theta=0.9)
        np.testing.assert_array_equal(gabor_param_gradients(params, 3, np.zeros((3, 3))), np.zeros(5))

    def test_clamp_keeps_sigma_and_wavelength_positive(self):
        bank = clamp_gabor_bank(np.array([[-0.5, 1.0, 0.0, 0.0, 0.0]]))
        self.assertEqual(bank[0, 0], GABOR_FLOOR)
        self.assertEqual(bank[0, 2], GABOR_FLOOR)
        self.assertEqual(bank[0, 1], 1.0)


# ================================
# OPÉRATIONS
# ================================

class OperationTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(7)
        # valeurs distinctes espacées : pas d'égalité dans les fenêtres de max pooling
        self.x = rng.permutation(50).reshape(2, 5, 5) * 0.02 - 0.5

    def test_shapes_are_preserved(self):
        rng = np.random.default_rng(1)
        for kind in FULL_CATALOG:
            weights = init_op_weights(kind, 2, rng)
            self.assertEqual(op_forward(kind, self.x, weights).shape, self.x.shape)
            batched = np.stack([self.x, -self.x])
            self.assertEqual(op_forward(kind, batched, weights).shape, batched.shape)

    def test_input_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        self.assertGreater(pooling_margin(self.x), 1e-3)
        for kind in FULL_CATALOG:
            weights = init_op_weights(kind, 2, rng)
            upstream = rng.normal(size=self.x.shape)
            x = self.x.copy()
            grad_x, _ = op_backward(kind, x, weights, upstream)
            numeric = numeric_gradient(lambda: np.sum(upstream * op_forward(kind, x, weights)), x)
            np.testing.assert_allclose(grad_x, numeric, rtol=1e-5, atol=1e-7, err_msg=kind.label)

    def test_weight_gradients_match_finite_differences(self):
        rng = np.random.default_rng(3)
        for kind in FULL_CATALOG:
            weights = init_op_weights(kind, 2, rng)
            upstream = rng.normal(size=self.x.shape)
            _, grads = op_backward(kind, self.x, weights, upstream)
            self.assertEqual(set(grads), set(weights))
            for name, value in weights.items():
                numeric = numeric_gradient(lambda: np.sum(upstream * op_forward(kind, self.x, weights)), value)
                np.testing.assert_allclose(
                    grads[name], numeric, rtol=1e-5, atol=1e-7, err_msg=f"{kind.label}.{name}"
                )

    def test_gradients_on_random_instances(self):
        for instance in range(100):
            rng = np.random.default_rng(1000 + instance)
            kind = FULL_CATALOG[instance % len(FULL_CATALOG)]
            channels = int(rng.integers(1, 4))
            shape = (channels, *(int(size) for size in rng.integers(2, 6, size=2)))
            x = rng.normal(size=shape)
            # le max pooling n'est dérivable que loin des égalités
            while kind == OperationKind.MAX_POOL_3X3 and pooling_margin(x) < 1e-3:
                x = rng.normal(size=shape)
            weights = init_op_weights(kind, channels, rng)
            upstream = rng.normal(size=shape)
            grad_x, grads = op_backward(kind, x, weights, upstream)

            def loss():
                return np.sum(upstream * op_forward(kind, x, weights))

            label = f"instance {instance} ({kind.label})"
            np.testing.assert_allclose(
                grad_x, numeric_gradient(loss, x, step=1e-5), rtol=1e-4, atol=1e-6, err_msg=label
            )
            for name, value in weights.items():
                np.testing.assert_allclose(
                    grads[name], numeric_gradient(loss, value, step=1e-5),
                    rtol=1e-4, atol=1e-6, err_msg=f"{label}.{name}",
                )

    def test_convolution_matches_direct_sum(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(4, 6, 6))
        for dilation, groups, size in ((1, 1, 3), (2, 1, 3), (2, 1, 5), (1, 4, 3), (1, 2, 5)):
            weight = rng.normal(size=(4, 4 // groups, size, size))
            np.testing.assert_allclose(
                conv2d(x, weight, dilation=dilation, groups=groups),
                naive_conv(x, weight, dilation=dilation, groups=groups),
                atol=1e-12,
            )

    def test_skip_connect_is_identity(self):
        np.testing.assert_array_equal(op_forward(OperationKind.SKIP_CONNECT, self.x), self.x)

    def test_pooling_borders(self):
        ones = np.ones((1, 3, 3))
        pooled = avg_pool(ones)
        self.assertAlmostEqual(pooled[0, 0, 0], 4 / 9, places=15)
        self.assertAlmostEqual(pooled[0, 1, 1], 1.0, places=15)
        negative = -np.arange(9, dtype=np.float64).reshape(1, 3, 3) - 1
        self.assertEqual(max_pool(negative)[0, 2, 2], -5.0)

    def test_nonlocal_means_examples(self):
        x = np.array([[[1.0, 2.0]]])
        np.testing.assert_allclose(nonlocal_means(x), [[[2.5, 5.0]]], atol=1e-15)
        np.testing.assert_allclose(nonlocal_means(x, 'uniform'), [[[1.5, 1.5]]], atol=1e-15)

    def test_nonlocal_means_gradients(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 2, 3))
        upstream = rng.normal(size=x.shape)
        for weighting in ('dot_product', 'uniform'):
            numeric = numeric_gradient(lambda: np.sum(upstream * nonlocal_means(x, weighting)), x)
            np.testing.assert_allclose(
                nonlocal_means_backward(x, upstream, weighting), numeric, rtol=1e-5, atol=1e-7
            )

    def test_nonlocal_means_match_double_loop(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            channels = int(rng.integers(1, 5))
            height, width = (int(size) for size in rng.integers(1, 9, size=2))
            x = rng.normal(size=(channels, height, width))
            for weighting in ('dot_product', 'uniform'):
                np.testing.assert_allclose(
                    nonlocal_means(x, weighting), reference_nonlocal_means(x, weighting),
                    rtol=1e-10, atol=1e-12,
                )

    def test_constant_input_is_scaled_by_its_norm(self):
        rng = np.random.default_rng(12)
        for channels, height, width in ((1, 1, 1), (3, 4, 5), (4, 8, 8)):
            u = rng.normal(size=channels)
            x = np.broadcast_to(u[:, None, None], (channels, height, width)).copy()
            expected = np.broadcast_to((u @ u * u)[:, None, None], x.shape)
            np.testing.assert_allclose(nonlocal_means(x), expected, rtol=1e-12)
            np.testing.assert_allclose(nonlocal_means(x, 'uniform'), x, rtol=1e-12)

    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(13)
        zeros = np.zeros_like(self.x)
        for kind in FULL_CATALOG:
            weights = init_op_weights(kind, 2, rng)
            grad_x, grads = op_backward(kind, self.x, weights, zeros)
            np.testing.assert_array_equal(grad_x, zeros, err_msg=kind.label)
            for name, grad in grads.items():
                np.testing.assert_array_equal(grad, np.zeros_like(weights[name]), err_msg=name)

    def test_shape_errors(self):
        with self.assertRaises(ShapeError):
            op_forward(OperationKind.DIL_CONV_3X3, self.x, {'weight': np.zeros((2, 2, 5, 5))})
        with self.assertRaises(ShapeError):
            op_forward(OperationKind.SEP_CONV_3X3, self.x, {})
        with self.assertRaises(ShapeError):
            op_forward(OperationKind.SKIP_CONNECT, np.zeros((5, 5)))
        with self.assertRaises(ShapeError):
            op_backward(OperationKind.AVG_POOL_3X3, self.x, None, np.zeros((2, 4, 4)))
        with self.assertRaises(ShapeError):
            nonlocal_means(self.x, 'gaussian')


# ================================
# ATTAQUES
# ================================

class AttackTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(8)
        self.model = LinearModel(rng.normal(size=(1, 4, 4)))
        self.x = rng.uniform(size=(1, 4, 4))

    def test_default_step_size(self):
        self.assertAlmostEqual(AttackConfig(epsilon=0.2).alpha, 0.25, places=15)
        self.assertEqual(AttackConfig(epsilon=0.2, alpha=0.05).alpha, 0.05)
        with self.assertRaises(ConfigurationError):
            AttackConfig(epsilon=-0.1)
        with self.assertRaises(ConfigurationError):
            AttackConfig(epsilon=0.1, alpha=0.0)

    def test_perturbation_stays_in_the_ball(self):
        rng = np.random.default_rng(9)
        for epsilon in (0.01, 0.1, 0.3):
            for steps in (1, 3, 10):
                config = AttackConfig(epsilon=epsilon, steps=steps)
                deltas = []
                pgd_attack(self.model, self.x, 1, config, rng, on_step=lambda _, d, __: deltas.append(d))
                self.assertEqual(len(deltas), steps)
                for delta in deltas:
                    self.assertLessEqual(np.max(np.abs(delta)), epsilon)

    def test_random_invocations_stay_in_the_ball(self):
        rng = np.random.default_rng(14)
        for invocation in range(1000):
            shape = (int(rng.integers(1, 3)), *(int(size) for size in rng.integers(1, 6, size=2)))
            model = LinearModel(rng.normal(size=shape))
            x = rng.uniform(size=shape)
            config = AttackConfig(
                epsilon=float(rng.uniform(0.0, 0.5)),
                alpha=float(rng.uniform(0.01, 1.0)),
                steps=int(rng.integers(1, 6)),
                random_init=bool(rng.integers(2)),
            )
            delta = pgd_attack(model, x, int(rng.choice([-1, 1])), config, rng)
            self.assertEqual(delta.shape, shape)
            self.assertLessEqual(np.max(np.abs(delta)), config.epsilon, f"invocation {invocation}")

    def test_fgsm_without_random_init_saturates(self):
        # y = -1 et poids positifs : gradient partout positif
        model = LinearModel(np.full((1, 4, 4), 0.5))
        for epsilon, alpha in ((0.1, 0.1), (0.1, 0.3), (0.25, 0.4)):
            config = AttackConfig(epsilon=epsilon, alpha=alpha, steps=1, random_init=False)
            delta = fgsm_random_init(model, self.x, -1, config, np.random.default_rng(0))
            np.testing.assert_array_equal(delta, np.full(self.x.shape, epsilon))

    def test_attack_does_not_lower_the_loss(self):
        rng = np.random.default_rng(15)
        for instance in range(100):
            model = LinearModel(rng.normal(size=(1, 4, 4)))
            x = rng.uniform(size=(1, 4, 4))
            y = int(rng.choice([-1, 1]))
            config = AttackConfig(
                epsilon=float(rng.uniform(0.01, 0.3)), steps=int(rng.integers(1, 4)),
                random_init=bool(instance % 2),
            )
            delta = pgd_attack(model, x, y, config, rng)
            clean, _ = model.input_gradient(x, y)
            attacked, _ = model.input_gradient(x + delta, y)
            self.assertGreaterEqual(attacked, clean, f"instance {instance}")

    def test_zero_budget_returns_zero(self):
        model = LinearModel(np.ones((1, 4, 4)))
        delta = pgd_attack(model, self.x, 1, AttackConfig(epsilon=0.0, steps=5), np.random.default_rng(0))
        np.testing.assert_array_equal(delta, np.zeros_like(self.x))
        self.assertEqual(model.calls, 0)

    def test_fgsm_is_a_single_pgd_step(self):
        config = AttackConfig(epsilon=0.1, steps=1)
        fgsm = fgsm_random_init(self.model, self.x, 1, config, np.random.default_rng(3))
        pgd = pgd_attack(self.model, self.x, 1, config, np.random.default_rng(3))
        np.testing.assert_array_equal(fgsm, pgd)

    def test_fgsm_refuses_several_steps(self):
        with self.assertRaises(ConfigurationError):
            fgsm_random_init(self.model, self.x, 1, AttackConfig(steps=3), np.random.default_rng(0))

    def test_loss_increases_along_pgd_steps(self):
        losses = []
        config = AttackConfig(epsilon=0.2, alpha=0.03, steps=10, random_init=False)
        delta = signed_gradient_attack(
            self.model, self.x, 1, config, np.random.default_rng(0), steps=10,
            on_step=lambda _, __, loss: losses.append(loss),
        )
        final_loss, _ = self.model.input_gradient(self.x + delta, 1)
        losses.append(final_loss)
        self.assertTrue(all(later >= earlier for earlier, later in zip(losses, losses[1:])))
        self.assertGreater(losses[-1], losses[0])

    def test_non_finite_loss_aborts(self):
        with self.assertRaises(AttackError):
            pgd_attack(BrokenModel(), self.x, 1, AttackConfig(epsilon=0.1), np.random.default_rng(0))


# ================================
# FORMAT BINAIRE
# ================================

class TensorFormatTests(SimpleTestCase):

    def test_layout(self):
        stream = io.BytesIO()
        write_tensor(stream, np.arange(6, dtype=np.float64).reshape(2, 3))
        raw = stream.getvalue()
        self.assertEqual(len(raw), 3 * 4 + 6 * 8)
        np.testing.assert_array_equal(np.frombuffer(raw[:12], dtype='<i4'), [2, 2, 3])
        self.assertEqual(np.frombuffer(raw[12:20], dtype='<f8')[0], 0.0)

    def test_read_back(self):
        tensor = np.random.default_rng(0).normal(size=(2, 1, 3, 3))
        stream = io.BytesIO()
        write_tensor(stream, tensor)
        stream.seek(0)
        np.testing.assert_array_equal(read_tensor(stream), tensor)

    def test_truncated_stream(self):
        stream = io.BytesIO()
        write_tensor(stream, np.ones((4, 4)))
        with self.assertRaises(ShapeError):
            read_tensor(io.BytesIO(stream.getvalue()[:-8]))
        with self.assertRaises(ShapeError):
            read_tensor(io.BytesIO(b''))

    def test_dump_is_disabled_without_directory(self):
        with override_settings(ABANDIT={'DUMP_DIR': ''}):
            self.assertIsNone(dump_tensor('delta', np.ones(3)))

    def test_dump_writes_into_directory(self):
        with tempfile.TemporaryDirectory() as directory:
            with override_settings(ABANDIT={'DUMP_DIR': directory}):
                path = dump_tensor('gabor/cell0', np.ones((2, 3)))
            self.assertEqual(path, Path(directory) / 'gabor' / 'cell0.bin')
            with path.open('rb') as stream:
                np.testing.assert_array_equal(read_tensor(stream), np.ones((2, 3)))
