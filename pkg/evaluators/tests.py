import itertools
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from config.exceptions import ConfigurationError, ShapeError, SpaceTooLargeError
from robust_ops.models import AttackConfig
from search_space.models import (
    FULL_CATALOG, EdgeId, Genotype, OperationKind, build_search_space, uniform_genotype,
)
from .datasets import export_dataset, load_dataset, make_synthetic_dataset
from .models import Evaluator, SyntheticSpec, TinyNetSpec
from .network import CellNetwork
from .serializers import EvaluatorConfigSerializer
from .synthetic import (
    SyntheticEvaluator, brute_force_best, enumerate_scores, noiseless_score,
    plant_synthetic_spec, synthetic_evaluate,
)
from .tinynet import TinyNetEvaluator, tinynet_evaluate


def numeric_gradient(loss, array, step=1e-6):
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


def small_tinynet(**changes):
    options = dict(channels=2, train_epochs=1, dataset_size=60, batch_size=10, learning_rate=0.05)
    options.update(changes)
    return TinyNetSpec(**options)


# ================================
# ORACLE SYNTHÉTIQUE
# ================================

class SyntheticEvaluatorTests(SimpleTestCase):

    def setUp(self):
        self.space = build_search_space(1, 2, FULL_CATALOG[:3])
        self.edges = self.space.edges

    def spec_from(self, rows, **kwargs):
        utilities = {
            (edge, op): value
            for edge, values in zip(self.edges, rows)
            for op, value in zip(FULL_CATALOG[:3], values)
        }
        return SyntheticSpec(utilities=utilities, **kwargs)

    def test_noiseless_score_is_the_edge_mean(self):
        spec = self.spec_from([(0.1, 0.9, 0.2), (0.3, 0.3, 0.6), (0.5, 0.0, 1.0)])
        genotype = Genotype.from_choices({
            self.edges[0]: OperationKind.AVG_POOL_3X3,
            self.edges[1]: OperationKind.SKIP_CONNECT,
            self.edges[2]: OperationKind.MAX_POOL_3X3,
        })
        self.assertAlmostEqual(noiseless_score(spec, genotype), (0.9 + 0.6 + 0.5) / 3, places=15)
        self.assertEqual(synthetic_evaluate(spec, genotype, 123), noiseless_score(spec, genotype))

    def test_noise_depends_only_on_the_seed(self):
        spec = self.spec_from([(0.5,) * 3] * 3, noise_sigma=0.3)
        genotype = uniform_genotype(self.space, 0)
        self.assertEqual(synthetic_evaluate(spec, genotype, 7), synthetic_evaluate(spec, genotype, 7))
        values = {synthetic_evaluate(spec, genotype, seed) for seed in range(50)}
        self.assertGreater(len(values), 1)
        self.assertTrue(all(0.0 <= value <= 1.0 for value in values))

    def test_unclipped_noise_may_leave_the_unit_interval(self):
        spec = self.spec_from([(0.0,) * 3] * 3, noise_sigma=1.0, clip=False)
        values = [synthetic_evaluate(spec, uniform_genotype(self.space, 1), seed) for seed in range(20)]
        self.assertTrue(any(value < 0 for value in values))

    def test_invalid_specs(self):
        with self.assertRaises(ConfigurationError):
            self.spec_from([(1.2, 0.0, 0.0)] * 3)
        with self.assertRaises(ConfigurationError):
            SyntheticSpec(noise_sigma=-0.1)
        with self.assertRaises(ConfigurationError):
            SyntheticSpec().utility(self.edges[0], OperationKind.DENOISE)

    def test_satisfies_the_evaluator_protocol(self):
        self.assertIsInstance(SyntheticEvaluator(SyntheticSpec()), Evaluator)
        self.assertIsInstance(TinyNetEvaluator(small_tinynet()), Evaluator)

    def test_brute_force_matches_enumeration(self):
        spec = plant_synthetic_spec(self.space, gap=0.0, seed=5)
        scores = {}
        for ops in itertools.product(FULL_CATALOG[:3], repeat=3):
            genotype = Genotype.from_choices(dict(zip(self.edges, ops)))
            scores[genotype] = noiseless_score(spec, genotype)
        self.assertEqual(len(scores), 27)
        best, score = brute_force_best(spec, self.space)
        self.assertEqual(best, max(scores, key=scores.get))
        self.assertAlmostEqual(score, max(scores.values()), places=15)
        self.assertEqual(enumerate_scores(spec, self.space).shape, (3, 3, 3))

    def test_ties_resolve_to_the_smallest_genotype(self):
        spec = self.spec_from([(0.5,) * 3] * 3)
        best, _ = brute_force_best(spec, self.space)
        self.assertEqual(best, uniform_genotype(self.space, 0))

    def test_single_candidate_edges(self):
        space = build_search_space(1, 2, [OperationKind.GABOR_3X3])
        spec = plant_synthetic_spec(space, gap=0.5, seed=0)
        best, score = brute_force_best(spec, space)
        self.assertEqual(best, uniform_genotype(space, 0))
        self.assertAlmostEqual(score, noiseless_score(spec, best), places=15)

    def test_planted_optimum_has_the_requested_margin(self):
        for seed in range(20):
            spec = plant_synthetic_spec(self.space, gap=0.4, seed=seed)
            optimum = spec.planted_optimum(self.space)
            for edge in self.edges:
                values = sorted(spec.utility(edge, op) for op in self.space.candidates[edge])
                self.assertGreaterEqual(values[-1] - values[-2], 0.4 - 1e-12)
                self.assertEqual(spec.utility(edge, optimum[edge]), values[-1])
            self.assertEqual(brute_force_best(spec, self.space)[0], optimum)

    def test_invalid_gap(self):
        with self.assertRaises(ConfigurationError):
            plant_synthetic_spec(self.space, gap=1.0, seed=0)

    def test_enumeration_limit(self):
        space = build_search_space(2, 4, FULL_CATALOG)
        spec = plant_synthetic_spec(space, gap=0.5, seed=0)
        with self.assertRaises(SpaceTooLargeError):
            brute_force_best(spec, space, limit=10 ** 6)


# ================================
# JEU DE DONNÉES
# ================================

class DatasetTests(SimpleTestCase):

    def test_split_and_balance(self):
        dataset = make_synthetic_dataset(768, seed=0)
        self.assertEqual(dataset.images.shape, (768, 1, 8, 8))
        self.assertEqual(len(dataset.train[1]), 512)
        self.assertEqual(len(dataset.validation[1]), 256)
        self.assertEqual(int(np.sum(dataset.labels == 0)), 384)
        self.assertTrue(np.all((dataset.images >= 0.0) & (dataset.images <= 1.0)))

    def test_classes_differ_in_brightness(self):
        dataset = make_synthetic_dataset(200, seed=1)
        means = dataset.images.mean(axis=(1, 2, 3))
        self.assertLess(means[dataset.labels == 0].mean(), means[dataset.labels == 1].mean())

    def test_generation_is_reproducible(self):
        first = make_synthetic_dataset(20, seed=3)
        second = make_synthetic_dataset(20, seed=3)
        np.testing.assert_array_equal(first.images, second.images)
        np.testing.assert_array_equal(first.labels, second.labels)

    def test_too_small(self):
        with self.assertRaises(ConfigurationError):
            make_synthetic_dataset(1, seed=0)

    def test_export_and_load(self):
        dataset = make_synthetic_dataset(12, seed=2)
        with tempfile.TemporaryDirectory() as directory:
            path = export_dataset(Path(directory) / 'data' / 'dataset.bin', dataset)
            loaded = load_dataset(path)
            np.testing.assert_array_equal(loaded.images, dataset.images)
            np.testing.assert_array_equal(loaded.labels, dataset.labels)

            path.write_bytes(path.read_bytes()[:-4])
            with self.assertRaises(ShapeError):
                load_dataset(path)


# ================================
# RÉSEAU DE CELLULES
# ================================

class CellNetworkTests(SimpleTestCase):

    def genotype(self):
        ops = [
            OperationKind.SEP_CONV_3X3, OperationKind.GABOR_3X3, OperationKind.DENOISE,
            OperationKind.SKIP_CONNECT, OperationKind.AVG_POOL_3X3, OperationKind.DIL_CONV_3X3,
        ]
        edges = build_search_space(2, 2, FULL_CATALOG).edges
        return Genotype.from_choices(dict(zip(edges, ops)))

    def setUp(self):
        rng = np.random.default_rng(0)
        self.network = CellNetwork(self.genotype(), 2, rng, reduction_cells=(1,))
        self.x = rng.uniform(size=(2, 1, 8, 8))
        self.y = np.array([0, 1])

    def test_parameter_layout(self):
        params = self.network.params
        self.assertEqual(params['stem'].shape, (2, 1, 3, 3))
        self.assertEqual(params['cell0.0-1.depthwise'].shape, (2, 1, 3, 3))
        self.assertEqual(params['cell0.0-2.gabor'].shape, (2, 5))
        self.assertEqual(params['cell0.projection'].shape, (2, 4, 1, 1))
        self.assertEqual(params['cell1.projection'].shape, (4, 4, 1, 1))
        self.assertEqual(params['head.weight'].shape, (2, 4))

    def test_forward_shapes(self):
        logits, cache = self.network.forward(self.x)
        self.assertEqual(logits.shape, (2, 2))
        self.assertEqual(cache['final'].shape, (2, 4, 4, 4))
        self.assertEqual(self.network.predict(self.x[0]).shape, (1,))

    def test_input_gradient_matches_finite_differences(self):
        x = self.x.copy()
        _, _, grad_x = self.network.loss_and_gradients(x, self.y)
        numeric = numeric_gradient(lambda: self.network.loss(x, self.y), x)
        np.testing.assert_allclose(grad_x, numeric, rtol=1e-4, atol=1e-8)

    def test_parameter_gradients_match_finite_differences(self):
        _, grads, _ = self.network.loss_and_gradients(self.x, self.y)
        self.assertEqual(set(grads), set(self.network.params))
        for name, value in self.network.params.items():
            numeric = numeric_gradient(lambda: self.network.loss(self.x, self.y), value)
            np.testing.assert_allclose(grads[name], numeric, rtol=1e-4, atol=1e-8, err_msg=name)

    def test_sgd_keeps_gabor_parameters_valid(self):
        grads = {name: np.zeros_like(value) for name, value in self.network.params.items()}
        grads['cell0.0-2.gabor'][:, 0] = 1e3
        self.network.sgd_step(grads, 1.0)
        self.assertTrue(np.all(self.network.params['cell0.0-2.gabor'][:, 0] > 0))
        self.assertEqual(self.network.gabor_kernels()['cell0.0-2.gabor'].shape, (2, 1, 3, 3))

    def test_invalid_construction(self):
        with self.assertRaises(ConfigurationError):
            CellNetwork(Genotype(), 2, np.random.default_rng(0))
        partial = Genotype.from_choices({EdgeId(0, 0, 2): OperationKind.SKIP_CONNECT})
        with self.assertRaises(ConfigurationError):
            CellNetwork(partial, 2, np.random.default_rng(0))
        with self.assertRaises(ConfigurationError):
            CellNetwork(self.genotype(), 2, np.random.default_rng(0), reduction_cells=(0, 1, 2, 3))
        with self.assertRaises(ShapeError):
            self.network.forward(np.zeros((1, 1, 6, 6)))


# ================================
# ÉVALUATEUR TINY NETWORK
# ================================

class TinyNetEvaluatorTests(SimpleTestCase):

    def setUp(self):
        self.space = build_search_space(1, 2, FULL_CATALOG)
        self.genotype = Genotype.from_choices(dict(zip(self.space.edges, [
            OperationKind.GABOR_3X3, OperationKind.DENOISE, OperationKind.SEP_CONV_3X3,
        ])))

    def test_same_seed_same_accuracy(self):
        evaluator = TinyNetEvaluator(small_tinynet(attack=AttackConfig(epsilon=0.1)))
        first = evaluator.evaluate(self.genotype, 11)
        self.assertEqual(first, evaluator.evaluate(self.genotype, 11))
        fresh = TinyNetEvaluator(small_tinynet(attack=AttackConfig(epsilon=0.1)))
        self.assertEqual(first, fresh.evaluate(self.genotype, 11))
        self.assertTrue(0.0 <= first <= 1.0)

    def test_zero_budget_equals_clean_training(self):
        zero = tinynet_evaluate(small_tinynet(attack=AttackConfig(epsilon=0.0)), self.genotype, 4)
        clean = tinynet_evaluate(small_tinynet(attack=None), self.genotype, 4)
        self.assertEqual(zero, clean)

    def test_perturbations_stay_in_the_ball(self):
        deltas = []
        spec = small_tinynet(train_epochs=2, attack=AttackConfig(epsilon=0.05))
        hooks = {'on_perturbation': lambda epoch, batch, delta: deltas.append(delta)}
        tinynet_evaluate(spec, self.genotype, 0, hooks=hooks)
        self.assertEqual(len(deltas), 2 * 4)
        for delta in deltas:
            self.assertLessEqual(np.max(np.abs(delta)), 0.05)

    def test_epoch_hook(self):
        epochs = []
        spec = small_tinynet(train_epochs=3, attack=None)
        tinynet_evaluate(spec, self.genotype, 0, hooks={'on_epoch': lambda epoch, network: epochs.append(epoch)})
        self.assertEqual(epochs, [0, 1, 2])

    def test_adversarial_validation(self):
        spec = small_tinynet(validation='adversarial', attack=AttackConfig(epsilon=0.1, steps=3))
        accuracy = tinynet_evaluate(spec, self.genotype, 2)
        self.assertTrue(0.0 <= accuracy <= 1.0)

    def test_learns_the_synthetic_task(self):
        space = build_search_space(1, 2, [OperationKind.SKIP_CONNECT])
        spec = TinyNetSpec(
            channels=4, train_epochs=3, dataset_size=240, batch_size=4,
            learning_rate=0.1, attack=None,
        )
        self.assertGreater(tinynet_evaluate(spec, uniform_genotype(space, 0), 0), 0.5)


class EvaluatorConfigSerializerTests(SimpleTestCase):

    def setUp(self):
        self.space = build_search_space(1, 2, FULL_CATALOG[:3])

    def test_synthetic_defaults(self):
        serializer = EvaluatorConfigSerializer(data={'kind': 'synthetic'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data['gap'], 0.5)
        evaluator = EvaluatorConfigSerializer.build(serializer.validated_data, self.space, AttackConfig())
        self.assertIsInstance(evaluator, SyntheticEvaluator)

    def test_unknown_kind(self):
        serializer = EvaluatorConfigSerializer(data={'kind': 'cifar'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('kind', serializer.errors)

    def test_out_of_range_field(self):
        serializer = EvaluatorConfigSerializer(data={'kind': 'synthetic', 'gap': 1.5})
        self.assertFalse(serializer.is_valid())
        self.assertIn('gap', serializer.errors)

    def test_tinynet_without_adversarial_training(self):
        serializer = EvaluatorConfigSerializer(data={'kind': 'tinynet', 'adversarial_training': False})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        evaluator = EvaluatorConfigSerializer.build(serializer.validated_data, self.space, AttackConfig())
        self.assertIsInstance(evaluator, TinyNetEvaluator)
        self.assertIsNone(evaluator.spec.attack)

    def test_tinynet_uses_the_search_attack(self):
        serializer = EvaluatorConfigSerializer(data={'kind': 'tinynet', 'channels': 3})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        attack = AttackConfig(epsilon=0.1)
        evaluator = EvaluatorConfigSerializer.build(serializer.validated_data, self.space, attack)
        self.assertEqual(evaluator.spec.attack, attack)
        self.assertEqual(evaluator.spec.channels, 3)
