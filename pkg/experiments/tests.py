import json
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from config.utils import parse_seed_list
from search_space.models import FULL_CATALOG
from .runner import read_json, recovery_interval, write_json
from .serializers import describe_errors

SMALL_CATALOG = ['max_pool_3x3', 'avg_pool_3x3', 'skip_connect']
TINYNET_CATALOG = ['max_pool_3x3', 'avg_pool_3x3', 'skip_connect', 'sep_conv_3x3', 'gabor_3x3']


class CommandTestCase(SimpleTestCase):

    def setUp(self):
        directory = tempfile.TemporaryDirectory()
        self.addCleanup(directory.cleanup)
        self.root = Path(directory.name)
        self.out = self.root / 'out'

    def write_config(self, name='config.json', **changes):
        data = {
            'schema_version': 1,
            'search': {'T': 1, 'lambda': 0.7},
            'space': {'cells': 1, 'nodes': 2, 'catalog': SMALL_CATALOG},
            'evaluator': {'kind': 'synthetic', 'gap': 0.5, 'noise_sigma': 0.2, 'utility_seed': 3},
            'output_dir': str(self.out),
            'seeds': [0, 1],
        }
        data.update(changes)
        return str(write_json(self.root / name, data))

    def call(self, *args, **options):
        stdout = StringIO()
        call_command(*args, stdout=stdout, **options)
        return stdout.getvalue()


# ================================
# SEARCH
# ================================

class SearchCommandTests(CommandTestCase):

    def test_writes_outputs_per_seed(self):
        output = self.call('search', config=self.write_config())
        self.assertIn('seed 0:', output)
        for seed in (0, 1):
            seed_dir = self.out / f'seed_{seed}'
            for name in ('genotype.json', 'history.csv', 'summary.json', 'checkpoint.json'):
                self.assertTrue((seed_dir / name).is_file(), name)
            genotype = read_json(seed_dir / 'genotype.json')
            self.assertEqual(len(genotype['cells']), 1)
            self.assertEqual(len(genotype['cells'][0]['edges']), 3)
            summary = read_json(seed_dir / 'summary.json')
            self.assertEqual(summary['evaluator_calls'], summary['expected_calls'])
            self.assertIn(summary['recovered_optimum'], (True, False))
        overall = read_json(self.out / 'summary.json')
        self.assertEqual(overall['seeds'], [0, 1])

    def test_full_catalog_makes_141_calls(self):
        path = self.write_config(
            search={'T': 3, 'lambda': 0.7},
            space={'cells': 1, 'nodes': 2},
            seeds=[0],
        )
        self.call('search', config=path)
        summary = read_json(self.out / 'seed_0' / 'summary.json')
        self.assertEqual(summary['evaluator_calls'], 141)
        history = pd.read_csv(self.out / 'seed_0' / 'history.csv')
        self.assertEqual(len(history), 141 * 3)
        self.assertEqual(history['trial'].nunique(), 141)
        self.assertEqual(list(history.columns), [
            'trial', 'cell', 'edge_from', 'edge_to', 'op', 'accuracy', 'K_current', 'N',
        ])
        self.assertEqual(set(history['op']), {kind.label for kind in FULL_CATALOG})

    def test_command_line_overrides(self):
        other = self.root / 'elsewhere'
        self.call('search', config=self.write_config(), out=str(other), seeds='4,5')
        self.assertTrue((other / 'seed_4' / 'genotype.json').is_file())
        self.assertTrue((other / 'seed_5' / 'genotype.json').is_file())
        self.assertFalse(self.out.exists())

    def test_missing_config_writes_nothing(self):
        with self.assertRaises(CommandError):
            self.call('search', config=str(self.root / 'missing.json'))
        self.assertFalse(self.out.exists())

    def test_invalid_field_is_named(self):
        path = self.write_config(search={'T': 1, 'lambda': 1.5})
        with self.assertRaises(CommandError) as ctx:
            self.call('search', config=path)
        self.assertIn('search.lambda', str(ctx.exception))
        self.assertFalse(self.out.exists())

    def test_unknown_evaluator_is_named(self):
        path = self.write_config(evaluator={'kind': 'imagenet'})
        with self.assertRaises(CommandError) as ctx:
            self.call('search', config=path)
        self.assertIn('evaluator.kind', str(ctx.exception))

    def test_unsupported_schema_version(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('search', config=self.write_config(schema_version=2))
        self.assertIn('schema_version', str(ctx.exception))

    def test_parallel_jobs_match_sequential_run(self):
        self.call('search', config=self.write_config(seeds=[0, 1, 2]), out=str(self.root / 'serial'))
        self.call('search', config=self.write_config(seeds=[0, 1, 2]), out=str(self.root / 'parallel'), jobs=2)
        for seed in (0, 1, 2):
            name = Path(f'seed_{seed}') / 'history.csv'
            self.assertEqual(
                (self.root / 'serial' / name).read_bytes(),
                (self.root / 'parallel' / name).read_bytes(),
            )


# ================================
# RESUME
# ================================

class ResumeCommandTests(CommandTestCase):

    def test_interrupted_run_resumes_identically(self):
        path = self.write_config(seeds=[0])
        reference = self.root / 'reference'
        self.call('search', config=path, out=str(reference))

        output = self.call('search', config=path, max_trials=5)
        self.assertIn('interrupted', output)
        self.assertFalse((self.out / 'seed_0' / 'summary.json').exists())
        self.assertFalse((self.out / 'summary.json').exists())

        self.call('resume', checkpoint=str(self.out / 'seed_0' / 'checkpoint.json'))
        for name in ('genotype.json', 'history.csv'):
            self.assertEqual(
                (self.out / 'seed_0' / name).read_bytes(),
                (reference / 'seed_0' / name).read_bytes(),
            )
        resumed = read_json(self.out / 'seed_0' / 'summary.json')
        expected = read_json(reference / 'seed_0' / 'summary.json')
        resumed.pop('wall_time')
        expected.pop('wall_time')
        self.assertEqual(resumed, expected)

    def test_resume_every_seed_from_config(self):
        path = self.write_config()
        self.call('search', config=path, max_trials=4)
        self.call('resume', config=path)
        for seed in (0, 1):
            summary = read_json(self.out / f'seed_{seed}' / 'summary.json')
            self.assertEqual(summary['evaluator_calls'], summary['expected_calls'])

    def test_finished_run_is_left_untouched(self):
        path = self.write_config(seeds=[0])
        self.call('search', config=path)
        summary = (self.out / 'seed_0' / 'summary.json').read_bytes()
        output = self.call('resume', checkpoint=str(self.out / 'seed_0' / 'checkpoint.json'))
        self.assertIn('nothing to do', output)
        self.assertEqual((self.out / 'seed_0' / 'summary.json').read_bytes(), summary)

    def test_mismatched_catalog_is_rejected(self):
        self.call('search', config=self.write_config(seeds=[0]), max_trials=3)
        checkpoint = self.out / 'seed_0' / 'checkpoint.json'
        document = json.loads(checkpoint.read_text())
        document['run']['space']['catalog'] = SMALL_CATALOG[:2]
        checkpoint.write_text(json.dumps(document))
        with self.assertRaises(CommandError) as ctx:
            self.call('resume', checkpoint=str(checkpoint))
        self.assertIn('snapshot', str(ctx.exception))

    def test_checkpoint_missing_an_arm_is_rejected(self):
        self.call('search', config=self.write_config(seeds=[0]), max_trials=4)
        checkpoint = self.out / 'seed_0' / 'checkpoint.json'
        document = json.loads(checkpoint.read_text())
        del document['snapshot']['state']['arms'][0]
        checkpoint.write_text(json.dumps(document))
        with self.assertRaises(CommandError) as ctx:
            self.call('resume', checkpoint=str(checkpoint))
        self.assertIn('snapshot.state.arms', str(ctx.exception))

    def test_tinynet_run_is_reproducible_and_resumable(self):
        path = self.write_config(
            search={'T': 1, 'lambda': 0.7, 'attack': {'epsilon': 0.1, 'steps': 1}},
            space={'cells': 1, 'nodes': 2, 'catalog': TINYNET_CATALOG},
            evaluator={
                'kind': 'tinynet', 'channels': 2, 'train_epochs': 1,
                'dataset_size': 32, 'batch_size': 16,
            },
            seeds=[0],
        )
        first, second = self.root / 'first', self.root / 'second'
        self.call('search', config=path, out=str(first))
        self.call('search', config=path, out=str(second))
        self.call('search', config=path, max_trials=7)
        self.call('resume', checkpoint=str(self.out / 'seed_0' / 'checkpoint.json'))

        summary = read_json(first / 'seed_0' / 'summary.json')
        # K = 5, T = 1 : 5 + (2 + 3 + 4 + 5)
        self.assertEqual(summary['evaluator_calls'], 19)
        for name in ('genotype.json', 'history.csv'):
            reference = (first / 'seed_0' / name).read_bytes()
            self.assertEqual((second / 'seed_0' / name).read_bytes(), reference)
            self.assertEqual((self.out / 'seed_0' / name).read_bytes(), reference)

    def test_corrupted_checkpoint(self):
        checkpoint = self.root / 'checkpoint.json'
        checkpoint.write_text('{"schema_version": 1')
        with self.assertRaises(CommandError):
            self.call('resume', checkpoint=str(checkpoint))

    def test_requires_checkpoint_or_config(self):
        with self.assertRaises(CommandError):
            self.call('resume')


# ================================
# COMPARE
# ================================

class CompareCommandTests(CommandTestCase):

    def test_comparison_tables(self):
        path = self.write_config(
            space={'cells': 1, 'nodes': 1, 'catalog': SMALL_CATALOG},
            evaluator={'kind': 'synthetic', 'gap': 0.3, 'noise_sigma': 0.3, 'utility_seed': 11},
            seeds=list(range(6)),
        )
        output = self.call('compare', config=path)
        self.assertIn('ucbnas', output)

        table = pd.read_csv(self.out / 'comparison.csv')
        self.assertEqual(list(table['strategy']), ['abandit', 'ucbnas', 'ucbnas_pruning', 'random'])
        self.assertTrue((table['runs'] == 6).all())
        # K = 3, T = 1 : 3 + (2 + 3)
        self.assertTrue((table['mean_evaluator_calls'] == 8).all())
        self.assertTrue((table['ci_low'] <= table['recovery_rate']).all())
        self.assertTrue((table['recovery_rate'] <= table['ci_high']).all())
        self.assertTrue((table['one_sided_low'] >= table['ci_low']).all())
        self.assertTrue(pd.isna(table.loc[3, 'p_value_vs_random']))
        self.assertTrue(table.loc[:2, 'p_value_vs_random'].between(0, 1).all())

        runs = pd.read_csv(self.out / 'comparison_runs.csv')
        self.assertEqual(len(runs), 4 * 6)

    def test_anti_bandit_beats_random_under_noise(self):
        path = Path(settings.BASE_DIR) / 'configs' / 'compare.noisy.json'
        self.call('compare', config=str(path), out=str(self.out), jobs=2)
        table = pd.read_csv(self.out / 'comparison.csv').set_index('strategy')
        self.assertTrue((table['runs'] == 50).all())
        abandit, random = table.loc['abandit'], table.loc['random']
        self.assertGreaterEqual(abandit['recovery_rate'], random['recovery_rate'])
        self.assertLess(abandit['p_value_vs_random'], 0.05)
        self.assertGreater(abandit['one_sided_low'], random['recovery_rate'])

    def test_noiseless_bandits_always_recover(self):
        path = self.write_config(
            search={'T': 40, 'lambda': 0.05},
            evaluator={'kind': 'synthetic', 'gap': 0.8, 'noise_sigma': 0.0, 'utility_seed': 3},
            seeds=[0, 1, 2, 3],
        )
        self.call('compare', config=path)
        table = pd.read_csv(self.out / 'comparison.csv').set_index('strategy')
        for strategy in ('abandit', 'ucbnas', 'ucbnas_pruning'):
            self.assertEqual(table.loc[strategy, 'recovery_rate'], 1.0, strategy)
        # K = 3, T = 40 : 3 + 40 * (2 + 3)
        self.assertTrue((table['mean_evaluator_calls'] == 203).all())

    def test_needs_several_seeds(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('compare', config=self.write_config(seeds=[0]))
        self.assertIn('seeds', str(ctx.exception))

    def test_needs_the_synthetic_evaluator(self):
        path = self.write_config(evaluator={'kind': 'tinynet'})
        with self.assertRaises(CommandError) as ctx:
            self.call('compare', config=path)
        self.assertIn('evaluator.kind', str(ctx.exception))


# ================================
# SWEEP
# ================================

class SweepCommandTests(CommandTestCase):

    def test_default_lambda_grid(self):
        path = self.write_config(space={'cells': 1, 'nodes': 1, 'catalog': SMALL_CATALOG})
        self.call('sweep', config=path, param='lambda')
        runs = pd.read_csv(self.out / 'sweep_runs.csv')
        self.assertEqual(len(runs), 9 * 2)
        table = pd.read_csv(self.out / 'sweep.csv')
        self.assertEqual(len(table), 9)
        self.assertTrue((table['runs'] == 2).all())
        self.assertTrue(table['recovery_rate'].between(0, 1).all())

    def test_samples_per_operation_changes_the_budget(self):
        path = self.write_config(space={'cells': 1, 'nodes': 1, 'catalog': SMALL_CATALOG})
        self.call('sweep', config=path, param='T', values='1,2')
        table = pd.read_csv(self.out / 'sweep.csv')
        self.assertEqual(list(table['value']), [1, 2])
        self.assertEqual(list(table['mean_evaluator_calls']), [8.0, 13.0])

    def test_empty_values(self):
        with self.assertRaises(CommandError):
            self.call('sweep', config=self.write_config(), param='lambda', values=' , ')

    def test_invalid_values(self):
        with self.assertRaises(CommandError):
            self.call('sweep', config=self.write_config(), param='T', values='0')
        with self.assertRaises(CommandError):
            self.call('sweep', config=self.write_config(), param='lambda', values='1.5')


# ================================
# OUTILS
# ================================

class HelperTests(SimpleTestCase):

    def test_describe_errors(self):
        self.assertEqual(describe_errors({'search': {'lambda': ['Too large.']}}), ['search.lambda: Too large.'])
        self.assertEqual(describe_errors({'non_field_errors': ['Broken.']}), ['config: Broken.'])
        self.assertEqual(
            describe_errors({'cells': [{}, {'op': ['Unknown.']}]}),
            ['cells[1].op: Unknown.'],
        )

    def test_parse_seed_list(self):
        self.assertEqual(parse_seed_list('1, 2,3'), [1, 2, 3])
        self.assertEqual(parse_seed_list(''), [])
        self.assertEqual(parse_seed_list(None), [])

    def test_recovery_interval(self):
        low, high, one_sided = recovery_interval(10, 10)
        self.assertEqual(high, 1.0)
        self.assertAlmostEqual(one_sided, 0.05 ** 0.1, places=6)
        low, high, _ = recovery_interval(0, 10)
        self.assertEqual(low, 0.0)
        low, high, _ = recovery_interval(5, 10)
        self.assertAlmostEqual(low, 0.1871, places=4)
        self.assertAlmostEqual(high, 0.8129, places=4)
