import json
import math
from collections import Counter

import numpy as np
from django.test import SimpleTestCase
from rest_framework.renderers import JSONRenderer

from config.exceptions import (
    ConfigurationError, RewardValidationError, SchedulingError, SearchAborted,
    UndefinedArmError,
)
from evaluators.synthetic import (
    SyntheticEvaluator, brute_force_best, noiseless_score, plant_synthetic_spec,
)
from search_space.models import (
    FULL_CATALOG, Genotype, OperationKind, build_search_space,
    validate_genotype,
)
from .models import ArmStats, BanditState, SearchConfig, SearchStrategy, TrialPhase
from .scores import (
    exploration_radius, lcb_score, selection_probabilities, total_budget,
    ucb_probabilities, ucb_score,
)
from .search import (
    BanditSearch, abandon_round, initialization_sweep, run_random_baseline,
    run_search, run_ucbnas_baseline, run_ucbnas_pruning_baseline,
    sample_genotype, sample_ucb_genotype, update_performance,
)
from .serializers import SearchSnapshotSerializer

# Recherches sans bruit à recouvrement exact : tours longs et moyenne exponentielle lente
RECOVERY_CONFIG = {'samples_per_op': 40, 'ema_weight': 0.05}
RECOVERY_GAP = 0.8


class CountingEvaluator:
    """Compte les appels d'un évaluateur synthétique"""

    def __init__(self, spec):
        self.inner = SyntheticEvaluator(spec)
        self.calls = 0

    def evaluate(self, genotype, seed):
        self.calls += 1
        return self.inner.evaluate(genotype, seed)


class ConstantEvaluator:
    def __init__(self, accuracy=0.5):
        self.accuracy = accuracy
        self.calls = 0

    def evaluate(self, genotype, seed):
        self.calls += 1
        return self.accuracy


class FailingEvaluator:
    def __init__(self, fail_at):
        self.fail_at = fail_at
        self.calls = 0

    def evaluate(self, genotype, seed):
        if self.calls == self.fail_at:
            raise RuntimeError("simulated trainer crash")
        self.calls += 1
        return 0.5


def planted(cells, nodes, catalog_size, gap=0.5, seed=0, noise_sigma=0.0):
    space = build_search_space(cells, nodes, FULL_CATALOG[:catalog_size])
    return space, plant_synthetic_spec(space, gap=gap, seed=seed, noise_sigma=noise_sigma)


# ================================
# SCORES
# ================================

class ScoreTests(SimpleTestCase):

    def test_lcb_and_ucb_examples(self):
        stats = ArmStats(m=0.9, n=8)
        self.assertAlmostEqual(lcb_score(stats, math.exp(4)), -0.1, places=12)
        self.assertAlmostEqual(ucb_score(stats, math.exp(4)), 1.9, places=12)
        self.assertEqual(ucb_score(ArmStats(m=0.0, n=1), 1), 0.0)

    def test_lcb_reference_value(self):
        expected = 0.78 - math.sqrt(2.0 * math.log(27) / 3)
        self.assertAlmostEqual(lcb_score(ArmStats(m=0.78, n=3), 27), expected, places=15)

    def test_lcb_approaches_mean_from_below(self):
        values = [lcb_score(ArmStats(m=0.5, n=n), 100) for n in (1, 10, 100, 10_000)]
        self.assertEqual(values, sorted(values))
        self.assertTrue(all(value < 0.5 for value in values))
        self.assertLess(0.5 - values[-1], 0.05)

    def test_confidence_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            stats = ArmStats(m=float(rng.uniform()), n=int(rng.integers(1, 50)))
            total = int(rng.integers(1, 500))
            gap = ucb_score(stats, total) - lcb_score(stats, total)
            self.assertAlmostEqual(gap, 2 * math.sqrt(2 * math.log(total) / stats.n), places=12)

    def test_unevaluated_arm_is_undefined(self):
        with self.assertRaises(UndefinedArmError):
            lcb_score(ArmStats(), 5)
        with self.assertRaises(UndefinedArmError):
            exploration_radius(1, 0)

    def test_uniform_probabilities_for_identical_arms(self):
        probabilities = selection_probabilities([ArmStats(0.4, 3)] * 4, 12)
        np.testing.assert_allclose(probabilities, np.full(4, 0.25), atol=1e-15)

    def test_two_arm_probabilities(self):
        # N = 1 : LCB = m
        probabilities = selection_probabilities([ArmStats(0.0, 1), ArmStats(math.log(3), 1)], 1)
        np.testing.assert_allclose(probabilities, [0.75, 0.25], atol=1e-12)

    def test_softmax_properties(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            arms = [ArmStats(float(rng.uniform()), int(rng.integers(1, 20))) for _ in range(6)]
            total = int(rng.integers(6, 200))
            probabilities = selection_probabilities(arms, total)
            self.assertTrue(np.all(probabilities > 0))
            self.assertAlmostEqual(probabilities.sum(), 1.0, delta=1e-12)
            shifted = selection_probabilities([ArmStats(arm.m + 5.0, arm.n) for arm in arms], total)
            np.testing.assert_allclose(shifted, probabilities, atol=1e-12)
            lcbs = [lcb_score(arm, total) for arm in arms]
            order = np.argsort(lcbs)
            self.assertTrue(np.all(np.diff(probabilities[order]) <= 1e-15))

    def test_ucb_probabilities_favor_high_ucb(self):
        # N = 1 : UCB = m
        probabilities = ucb_probabilities([ArmStats(0.0, 1), ArmStats(math.log(3), 1)], 1)
        np.testing.assert_allclose(probabilities, [0.25, 0.75], atol=1e-12)
        arms = [ArmStats(0.2, 4), ArmStats(0.6, 9), ArmStats(0.6, 2)]
        probabilities = ucb_probabilities(arms, 15)
        self.assertAlmostEqual(probabilities.sum(), 1.0, delta=1e-12)
        order = np.argsort([ucb_score(arm, 15) for arm in arms])
        self.assertTrue(np.all(np.diff(probabilities[order]) >= -1e-15))

    def test_total_budget(self):
        self.assertEqual(total_budget(9, 3), 132)
        self.assertEqual(total_budget(2, 1), 2)
        self.assertEqual(total_budget(5, 2), 28)
        self.assertEqual(total_budget(1, 4), 0)
        with self.assertRaises(ConfigurationError):
            total_budget(0, 3)
        with self.assertRaises(ConfigurationError):
            total_budget(3, 0)


# ================================
# OPÉRATIONS ÉLÉMENTAIRES
# ================================

class BookkeepingTests(SimpleTestCase):

    def setUp(self):
        self.space = build_search_space(1, 2, FULL_CATALOG[:3])
        self.state = BanditState.fresh(self.space)
        self.genotype = Genotype.from_choices({edge: OperationKind.MAX_POOL_3X3 for edge in self.space.edges})

    def test_ema_update(self):
        edge = self.space.edges[0]
        for arm in self.state.stats.values():
            arm.m, arm.n = 0.5, 1
        update_performance(self.state, self.genotype, 0.9, 0.7)
        self.assertAlmostEqual(self.state.arm(edge, OperationKind.MAX_POOL_3X3).m, 0.78, places=15)
        self.assertEqual(self.state.arm(edge, OperationKind.MAX_POOL_3X3).n, 2)
        self.assertEqual(self.state.arm(edge, OperationKind.AVG_POOL_3X3).n, 1)
        self.assertEqual(self.state.arm(edge, OperationKind.AVG_POOL_3X3).m, 0.5)
        self.assertEqual(self.state.total_trials, 1)

    def test_ema_boundaries(self):
        edge = self.space.edges[0]
        arm = self.state.arm(edge, OperationKind.MAX_POOL_3X3)
        arm.m = 0.5
        update_performance(self.state, self.genotype, 0.9, 0.0)
        self.assertEqual(arm.m, 0.5)
        update_performance(self.state, self.genotype, 0.9, 1.0)
        self.assertEqual(arm.m, 0.9)

    def test_accuracy_outside_unit_interval(self):
        with self.assertRaises(RewardValidationError):
            update_performance(self.state, self.genotype, 1.2, 0.7)

    def test_default_lambda(self):
        self.assertEqual(SearchConfig().ema_weight, 0.7)
        self.assertEqual(SearchConfig().samples_per_op, 3)

    def test_initialization_sweep_covers_every_arm(self):
        space = build_search_space(2, 4, FULL_CATALOG)
        state = BanditState.fresh(space)
        evaluator = ConstantEvaluator(0.6)
        history = []
        initialization_sweep(space, state, evaluator, history=history)
        self.assertEqual(evaluator.calls, 9)
        self.assertEqual(state.total_trials, 9)
        self.assertTrue(all(arm.n == 1 and arm.m == 0.6 for arm in state.stats.values()))
        self.assertEqual([record.phase for record in history], [TrialPhase.INIT] * 9)
        self.assertEqual(history[4].genotype[space.edges[0]], OperationKind(4))

    def test_search_loop_starts_with_the_sweep(self):
        space, spec = planted(1, 2, 4, noise_sigma=0.2)
        search = BanditSearch(space, SearchConfig(seed=9), SyntheticEvaluator(spec))
        search.run(max_trials=4)
        state, history = BanditState.fresh(space), []
        initialization_sweep(space, state, SyntheticEvaluator(spec), seed=9, history=history)
        self.assertEqual(search.history, history)
        self.assertEqual(search.state.stats, state.stats)
        self.assertEqual(search.state.total_trials, state.total_trials)
        self.assertEqual(search.state.round_trials, 0)

    def test_single_operation_sweep(self):
        space = build_search_space(1, 2, [OperationKind.SKIP_CONNECT])
        state = BanditState.fresh(space)
        initialization_sweep(space, state, ConstantEvaluator(0.3))
        self.assertEqual(state.total_trials, 1)
        self.assertTrue(all(arm.m == 0.3 for arm in state.stats.values()))

    def test_sweep_requires_fresh_state(self):
        initialization_sweep(self.space, self.state, ConstantEvaluator())
        with self.assertRaises(SchedulingError):
            initialization_sweep(self.space, self.state, ConstantEvaluator())

    def test_sampling_single_candidate_is_deterministic(self):
        space = build_search_space(1, 3, [OperationKind.DENOISE])
        state = BanditState.fresh(space)
        initialization_sweep(space, state, ConstantEvaluator())
        genotype = sample_genotype(space, state, np.random.default_rng(0))
        self.assertTrue(all(op == OperationKind.DENOISE for _, op in genotype.items()))

    def test_sampling_frequencies_follow_probabilities(self):
        space = build_search_space(1, 1, FULL_CATALOG[:3])
        state = BanditState.fresh(space)
        edge = space.edges[0]
        for op, (m, n) in zip(space.candidates[edge], [(0.2, 2), (0.5, 4), (0.8, 3)]):
            state.stats[(edge, op)] = ArmStats(m, n)
        state.total_trials = 9
        probabilities = selection_probabilities(state.edge_stats(space, edge), state.total_trials)

        rng = np.random.default_rng(2024)
        draws = 10_000
        counts = Counter(sample_genotype(space, state, rng)[edge] for _ in range(draws))
        for op, probability in zip(space.candidates[edge], probabilities):
            sigma = math.sqrt(draws * probability * (1 - probability))
            self.assertLess(abs(counts[op] - draws * probability), 4 * sigma)

    def test_sampled_genotypes_are_valid_and_reproducible(self):
        space = build_search_space(2, 2, FULL_CATALOG)
        state = BanditState.fresh(space)
        initialization_sweep(space, state, ConstantEvaluator())
        draws = []
        for _ in range(2):
            rng = np.random.default_rng(5)
            draws.append([sample_genotype(space, state, rng) for _ in range(20)])
        first, second = draws
        self.assertEqual(first, second)
        self.assertTrue(all(validate_genotype(space, genotype) for genotype in first))


class AbandonmentTests(SimpleTestCase):

    def prepared(self, means, samples_per_op=1):
        space = build_search_space(1, 1, FULL_CATALOG[:len(means)])
        state = BanditState.fresh(space)
        edge = space.edges[0]
        for op, m in zip(space.candidates[edge], means):
            state.stats[(edge, op)] = ArmStats(m, 1)
        # N = 1 : UCB = m
        state.total_trials = 1
        state.round_trials = len(means) * samples_per_op
        return space, state, edge

    def test_minimal_ucb_is_abandoned(self):
        space, state, edge = self.prepared([0.9, 0.2, 0.5])
        space, state = abandon_round(space, state, 1)
        self.assertEqual(space.candidates[edge], (OperationKind.MAX_POOL_3X3, OperationKind.SKIP_CONNECT))
        self.assertEqual(state.cardinality, 2)
        self.assertEqual(state.round_trials, 0)
        self.assertEqual(state.arm(edge, OperationKind.MAX_POOL_3X3).m, 0.9)

    def test_ties_remove_lowest_index(self):
        space, state, edge = self.prepared([0.4, 0.4, 0.4])
        space, _ = abandon_round(space, state, 1)
        self.assertNotIn(OperationKind.MAX_POOL_3X3, space.candidates[edge])

    def test_early_abandonment_is_refused(self):
        space, state, _ = self.prepared([0.9, 0.2, 0.5], samples_per_op=1)
        state.round_trials = 2
        with self.assertRaises(SchedulingError):
            abandon_round(space, state, 1)

    def test_last_candidate_cannot_be_abandoned(self):
        space, state, _ = self.prepared([0.9])
        with self.assertRaises(SchedulingError):
            abandon_round(space, state, 1)


# ================================
# BOUCLE DE RECHERCHE
# ================================

class SearchLoopTests(SimpleTestCase):

    def test_budget_is_exact(self):
        for catalog_size in range(2, 10):
            for samples_per_op in range(1, 5):
                space, spec = planted(1, 1, catalog_size, seed=catalog_size)
                evaluator = CountingEvaluator(spec)
                result = run_search(space, SearchConfig(samples_per_op=samples_per_op), evaluator)
                expected = catalog_size + total_budget(catalog_size, samples_per_op)
                self.assertEqual(evaluator.calls, expected)
                self.assertEqual(result.evaluator_calls, expected)
                self.assertEqual(len(result.history), expected)

    def test_full_catalog_makes_141_calls(self):
        space, spec = planted(1, 2, 9)
        evaluator = CountingEvaluator(spec)
        run_search(space, SearchConfig(samples_per_op=3), evaluator)
        self.assertEqual(evaluator.calls, 141)

    def test_round_schedule(self):
        space, spec = planted(1, 2, 4)
        result = run_search(space, SearchConfig(samples_per_op=2), SyntheticEvaluator(spec))
        per_round = Counter(
            record.cardinality for record in result.history if record.phase == TrialPhase.SEARCH
        )
        self.assertEqual(per_round, {4: 8, 3: 6, 2: 4})

    def test_candidate_sets_shrink_uniformly(self):
        space, spec = planted(2, 2, 5)
        search = BanditSearch(space, SearchConfig(samples_per_op=1), SyntheticEvaluator(spec))
        sizes = []
        while not search.finished:
            if search.step():
                sizes.append({len(ops) for ops in search.space.candidates.values()})
        self.assertEqual(sizes, [{4}, {3}, {2}, {1}])

    def test_single_operation_catalog(self):
        space, spec = planted(1, 2, 1)
        result = run_search(space, SearchConfig(), CountingEvaluator(spec))
        self.assertEqual(result.evaluator_calls, 1)
        self.assertTrue(all(op == OperationKind.MAX_POOL_3X3 for _, op in result.genotype.items()))

    def test_arm_counts_are_conserved(self):
        space, spec = planted(1, 3, 4, noise_sigma=0.1)
        search = BanditSearch(space, SearchConfig(samples_per_op=2, seed=4), SyntheticEvaluator(spec))
        result = search.run()
        post_init = sum(1 for record in result.history if record.phase == TrialPhase.SEARCH)
        for edge in space.edges:
            total = sum(
                stats.n - 1 for (arm_edge, _), stats in search.state.stats.items() if arm_edge == edge
            )
            self.assertEqual(total, post_init)

    def test_ema_stays_within_observed_range(self):
        space, spec = planted(1, 2, 3, noise_sigma=0.2)
        search = BanditSearch(space, SearchConfig(seed=1), SyntheticEvaluator(spec))
        result = search.run()
        accuracies = [record.accuracy for record in result.history]
        for stats in search.state.stats.values():
            self.assertGreaterEqual(stats.m, min(accuracies))
            self.assertLessEqual(stats.m, max(accuracies))

    def test_fixed_seed_is_deterministic(self):
        space, spec = planted(1, 2, 5, noise_sigma=0.2)
        first = run_search(space, SearchConfig(seed=9), SyntheticEvaluator(spec))
        second = run_search(space, SearchConfig(seed=9), SyntheticEvaluator(spec))
        self.assertEqual(first.history, second.history)
        self.assertEqual(first.genotype, second.genotype)

    def test_single_edge_recovers_planted_optimum(self):
        for catalog_size in (3, 4, 5):
            for seed in range(20):
                space, spec = planted(1, 1, catalog_size, seed=seed)
                best, _ = brute_force_best(spec, space)
                result = run_search(space, SearchConfig(seed=seed), SyntheticEvaluator(spec))
                self.assertEqual(result.genotype, best)

    def test_two_node_cells_recover_planted_optimum(self):
        # 20 espaces plantés (v = 1, M = 2, K = 3, 4, 5), 20 graines chacun
        for index in range(20):
            catalog_size = 3 + index % 3
            space, spec = planted(1, 2, catalog_size, gap=RECOVERY_GAP, seed=500 + index)
            best, best_score = brute_force_best(spec, space)
            for seed in range(20):
                result = run_search(space, SearchConfig(seed=seed, **RECOVERY_CONFIG), SyntheticEvaluator(spec))
                self.assertTrue(validate_genotype(space, result.genotype))
                self.assertEqual(result.genotype, best, f"space {index} (K={catalog_size}), seed {seed}")
                self.assertEqual(noiseless_score(spec, result.genotype), best_score)

    def test_evaluator_failure_keeps_partial_history(self):
        space = build_search_space(1, 1, FULL_CATALOG[:3])
        with self.assertRaises(SearchAborted) as ctx:
            run_search(space, SearchConfig(), FailingEvaluator(fail_at=5))
        self.assertEqual(len(ctx.exception.history), 5)


class BaselineTests(SimpleTestCase):

    def test_all_strategies_share_the_budget(self):
        space, spec = planted(1, 2, 4)
        expected = 4 + total_budget(4, 3)
        for runner in (run_search, run_ucbnas_baseline, run_ucbnas_pruning_baseline, run_random_baseline):
            evaluator = CountingEvaluator(spec)
            runner(space, SearchConfig(), evaluator)
            self.assertEqual(evaluator.calls, expected)

    def test_ucbnas_keeps_every_candidate(self):
        space, spec = planted(1, 2, 4)
        search = BanditSearch(space, SearchConfig(), SyntheticEvaluator(spec), SearchStrategy.UCBNAS)
        search.run()
        self.assertEqual(search.space, space)
        self.assertEqual(search.state.cardinality, 4)

    def test_ucbnas_single_edge_recovers_optimum(self):
        for seed in range(10):
            space, spec = planted(1, 1, 5, seed=seed)
            best, _ = brute_force_best(spec, space)
            result = run_ucbnas_baseline(space, SearchConfig(seed=seed), SyntheticEvaluator(spec))
            self.assertEqual(result.genotype, best)

    def test_ucb_baselines_recover_planted_optimum_on_two_node_cells(self):
        for index in range(6):
            catalog_size = 3 + index % 3
            space, spec = planted(1, 2, catalog_size, gap=RECOVERY_GAP, seed=700 + index)
            best, _ = brute_force_best(spec, space)
            for runner in (run_ucbnas_baseline, run_ucbnas_pruning_baseline):
                for seed in range(3):
                    result = runner(space, SearchConfig(seed=seed, **RECOVERY_CONFIG), SyntheticEvaluator(spec))
                    self.assertEqual(result.genotype, best, f"{runner.__name__}, space {index}, seed {seed}")

    def test_ucb_sampling_separates_edges(self):
        space, spec = planted(1, 2, 4)
        state = BanditState.fresh(space)
        initialization_sweep(space, state, SyntheticEvaluator(spec))
        rng = np.random.default_rng(0)
        genotypes = [sample_ucb_genotype(space, state, rng) for _ in range(50)]
        self.assertTrue(any(len({op for _, op in genotype.items()}) > 1 for genotype in genotypes))
        self.assertTrue(all(validate_genotype(space, genotype) for genotype in genotypes))

    def test_pruning_baseline_follows_the_same_schedule(self):
        space, spec = planted(1, 2, 4)
        anti = run_search(space, SearchConfig(samples_per_op=2), SyntheticEvaluator(spec))
        ucb = run_ucbnas_pruning_baseline(space, SearchConfig(samples_per_op=2), SyntheticEvaluator(spec))
        self.assertEqual(
            [record.cardinality for record in anti.history],
            [record.cardinality for record in ucb.history],
        )

    def test_ucbnas_is_deterministic(self):
        space, spec = planted(1, 2, 4, noise_sigma=0.1)
        first = run_ucbnas_baseline(space, SearchConfig(seed=2), SyntheticEvaluator(spec))
        second = run_ucbnas_baseline(space, SearchConfig(seed=2), SyntheticEvaluator(spec))
        self.assertEqual(first.history, second.history)

    def test_random_baseline_returns_best_observed(self):
        space, spec = planted(1, 2, 4, noise_sigma=0.05)
        result = run_random_baseline(space, SearchConfig(seed=3), SyntheticEvaluator(spec))
        best = max(record.accuracy for record in result.history)
        first_best = next(record for record in result.history if record.accuracy == best)
        self.assertEqual(result.genotype, first_best.genotype)
        self.assertTrue(all(record.phase == TrialPhase.SEARCH for record in result.history))


class CheckpointTests(SimpleTestCase):

    def snapshot_round_trip(self, search, evaluator):
        document = json.loads(JSONRenderer().render(SearchSnapshotSerializer(search).data))
        serializer = SearchSnapshotSerializer(data=document)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        return serializer.restore(evaluator)

    def test_interrupted_search_matches_continuous_run(self):
        space, spec = planted(1, 2, 4, noise_sigma=0.2)
        config = SearchConfig(samples_per_op=2, seed=17)
        reference = run_search(space, config, SyntheticEvaluator(spec))
        total = len(reference.history)

        for interrupt in np.linspace(1, total - 1, 10).astype(int):
            search = BanditSearch(space, config, SyntheticEvaluator(spec))
            self.assertIsNone(search.run(max_trials=int(interrupt)))
            resumed = self.snapshot_round_trip(search, SyntheticEvaluator(spec)).run()
            self.assertEqual(resumed.history, reference.history)
            self.assertEqual(resumed.genotype, reference.genotype)

    def test_finished_search_resumes_as_no_op(self):
        space, spec = planted(1, 1, 3)
        search = BanditSearch(space, SearchConfig(), SyntheticEvaluator(spec))
        result = search.run()
        evaluator = CountingEvaluator(spec)
        restored = self.snapshot_round_trip(search, evaluator)
        self.assertTrue(restored.finished)
        self.assertEqual(restored.run().genotype, result.genotype)
        self.assertEqual(evaluator.calls, 0)

    def test_inconsistent_history_is_rejected(self):
        space, spec = planted(1, 1, 3)
        search = BanditSearch(space, SearchConfig(), SyntheticEvaluator(spec))
        search.run(max_trials=4)
        document = json.loads(JSONRenderer().render(SearchSnapshotSerializer(search).data))
        document['history'] = document['history'][:-1]
        serializer = SearchSnapshotSerializer(data=document)
        self.assertFalse(serializer.is_valid())
        self.assertIn('history', serializer.errors)

    def interrupted_document(self):
        space, spec = planted(1, 2, 3)
        search = BanditSearch(space, SearchConfig(), SyntheticEvaluator(spec))
        search.run(max_trials=4)
        return json.loads(JSONRenderer().render(SearchSnapshotSerializer(search).data))

    def test_missing_arm_is_rejected(self):
        document = self.interrupted_document()
        del document['state']['arms'][0]
        serializer = SearchSnapshotSerializer(data=document)
        self.assertFalse(serializer.is_valid())
        self.assertIn('arms', serializer.errors['state'])

    def test_duplicate_arm_is_rejected(self):
        document = self.interrupted_document()
        document['state']['arms'].append(dict(document['state']['arms'][0]))
        serializer = SearchSnapshotSerializer(data=document)
        self.assertFalse(serializer.is_valid())
        self.assertIn('arms', serializer.errors['state'])

    def test_pruned_arms_may_stay_in_the_state(self):
        space, spec = planted(1, 2, 3)
        search = BanditSearch(space, SearchConfig(samples_per_op=1), SyntheticEvaluator(spec))
        search.run(max_trials=7)
        self.assertEqual(search.state.cardinality, 2)
        document = json.loads(JSONRenderer().render(SearchSnapshotSerializer(search).data))
        self.assertEqual(len(document['state']['arms']), 9)
        serializer = SearchSnapshotSerializer(data=document)
        self.assertTrue(serializer.is_valid(), serializer.errors)

    def test_checkpoints_are_emitted_at_round_boundaries(self):
        space, spec = planted(1, 1, 3)
        seen = []
        BanditSearch(space, SearchConfig(samples_per_op=1), SyntheticEvaluator(spec)).run(
            on_checkpoint=lambda current: seen.append(current.state.total_trials)
        )
        # fin du balayage, puis chaque abandon
        self.assertEqual(seen, [3, 6, 8])
