"""
Orchestration des expériences : recherches par graine, reprise, comparaison
de stratégies et balayage d'hyperparamètres. Les commandes de gestion ne font
qu'appeler ces fonctions.
"""
import logging
import time
from dataclasses import dataclass, replace
from multiprocessing import Pool
from pathlib import Path

import django
import numpy as np
import pandas as pd
from django.conf import settings
from rest_framework.exceptions import ParseError, ValidationError
from rest_framework.parsers import JSONParser
from rest_framework.renderers import JSONRenderer
from scipy import stats

from bandit.models import SearchStrategy
from bandit.search import BanditSearch
from config.exceptions import CheckpointError, ConfigurationError, SearchAborted, SpaceTooLargeError
from config.utils import seed_output_dir
from evaluators.synthetic import brute_force_best, noiseless_score
from search_space.models import space_size
from search_space.serializers import GenotypeSerializer
from .models import RunSummary, SweepParameter
from .serializers import CheckpointSerializer, RunConfigSerializer, describe_errors

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ['trial', 'cell', 'edge_from', 'edge_to', 'op', 'accuracy', 'K_current', 'N']
COMPARE_STRATEGIES = (
    SearchStrategy.ANTI_BANDIT,
    SearchStrategy.UCBNAS,
    SearchStrategy.UCBNAS_PRUNING,
    SearchStrategy.RANDOM,
)


# ================================
# LECTURE / ÉCRITURE
# ================================

def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"File not found: {path}")
    with path.open('rb') as stream:
        try:
            return JSONParser().parse(stream)
        except ParseError as exc:
            raise ConfigurationError(f"{path}: {exc.detail}")


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(JSONRenderer().render(data, renderer_context={'indent': 2}) + b'\n')
    return path


def load_run_config(path, output_dir=None, seeds=None, jobs=None):
    """Lit et valide un fichier de configuration ; les options de la ligne de commande l'emportent"""
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigurationError("config: expected a JSON object")
    serializer = RunConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigurationError('; '.join(describe_errors(serializer.errors)))
    run_config = serializer.save()
    changes = {}
    if output_dir:
        changes['output_dir'] = str(output_dir)
    if seeds:
        changes['seeds'] = tuple(seeds)
    if jobs:
        changes['jobs'] = jobs
    if changes:
        run_config = replace(run_config, **changes)
    return run_config


def load_checkpoint(path):
    """-> (RunConfig, graine, BanditSearch)"""
    data = read_json(path)
    serializer = CheckpointSerializer(data=data)
    if not serializer.is_valid():
        raise CheckpointError('; '.join(describe_errors(serializer.errors)))
    try:
        return serializer.restore()
    except ValidationError as exc:
        raise CheckpointError('; '.join(describe_errors(exc.detail, 'snapshot')))


def history_frame(history):
    """Une ligne par arête et par essai"""
    rows = [
        {
            'trial': record.trial,
            'cell': edge.cell,
            'edge_from': edge.from_node,
            'edge_to': edge.to_node,
            'op': op.label,
            'accuracy': record.accuracy,
            'K_current': record.cardinality,
            'N': record.total_trials,
        }
        for record in history
        for edge, op in record.genotype.items()
    ]
    return pd.DataFrame(rows, columns=HISTORY_COLUMNS)


def summary_data(summary):
    return {
        'seed': summary.seed,
        'strategy': str(summary.strategy),
        'genotype': GenotypeSerializer(summary.genotype).data,
        'evaluator_calls': summary.evaluator_calls,
        'expected_calls': summary.expected_calls,
        'wall_time': summary.wall_time,
        'score': summary.score,
        'optimum_score': summary.optimum_score,
        'recovered_optimum': summary.recovered_optimum,
    }


def write_checkpoint(path, run_config, seed, search):
    write_json(path, CheckpointSerializer((run_config, seed, search)).data)
    logger.debug("Checkpoint written to %s at N=%s", path, search.state.total_trials)


def write_artifacts(seed_dir, result, summary):
    seed_dir = Path(seed_dir)
    seed_dir.mkdir(parents=True, exist_ok=True)
    write_json(seed_dir / 'genotype.json', GenotypeSerializer(result.genotype).data)
    history_frame(result.history).to_csv(seed_dir / 'history.csv', index=False)
    write_json(seed_dir / 'summary.json', summary_data(summary))
    logger.info("Seed %s outputs written to %s", summary.seed, seed_dir)


# ================================
# UNE RECHERCHE
# ================================

def summarize(result, run_config, seed, evaluator, wall_time):
    summary = RunSummary(
        seed=seed,
        strategy=result.strategy,
        genotype=result.genotype,
        evaluator_calls=result.evaluator_calls,
        expected_calls=run_config.expected_calls,
        wall_time=wall_time,
    )
    if run_config.is_synthetic:
        summary.score = noiseless_score(evaluator.spec, result.genotype)
        try:
            best, summary.optimum_score = brute_force_best(evaluator.spec, run_config.space)
            summary.recovered_optimum = best == result.genotype
        except SpaceTooLargeError as exc:
            logger.info("Skipping optimum check: %s", exc)
    else:
        scores = [record.accuracy for record in result.history if record.genotype == result.genotype]
        summary.score = float(np.mean(scores)) if scores else None
    return summary


def _drive(search, run_config, seed, output_dir=None, max_trials=None):
    seed_dir = seed_output_dir(output_dir, seed) if output_dir else None
    on_checkpoint = None
    if seed_dir is not None:
        checkpoint_path = seed_dir / settings.ABANDIT['CHECKPOINT_NAME']

        def on_checkpoint(current):
            write_checkpoint(checkpoint_path, run_config, seed, current)

    started = time.perf_counter()
    try:
        result = search.run(max_trials=max_trials, on_checkpoint=on_checkpoint)
    except SearchAborted as exc:
        if seed_dir is not None:
            history_frame(exc.history).to_csv(seed_dir / 'history.csv', index=False)
        raise
    if result is None:
        return None
    summary = summarize(result, run_config, seed, search.evaluator, time.perf_counter() - started)
    if seed_dir is not None:
        write_artifacts(seed_dir, result, summary)
    return summary


def execute_search(run_config, seed, strategy=SearchStrategy.ANTI_BANDIT, output_dir=None, max_trials=None):
    """Recherche complète (ou interrompue après `max_trials` essais) pour une graine"""
    config = run_config.with_seed(seed)
    evaluator = config.build_evaluator()
    search = BanditSearch(config.space, config.search, evaluator, strategy)
    logger.info("Seed %s: %s search started", seed, SearchStrategy(strategy).label)
    return _drive(search, config, seed, output_dir, max_trials)


def resume_search(checkpoint_path, output_dir=None):
    """
    Reprend une recherche à partir de son point de reprise. Renvoie None si la
    recherche était déjà terminée et que ses sorties existent.
    """
    run_config, seed, search = load_checkpoint(checkpoint_path)
    output_dir = output_dir or run_config.output_dir
    config = run_config.with_seed(seed)
    if search.finished and (seed_output_dir(output_dir, seed) / 'summary.json').is_file():
        logger.info("Seed %s already finished; nothing to resume", seed)
        return None
    logger.info("Seed %s: resuming at N=%s", seed, search.state.total_trials)
    return _drive(search, config, seed, output_dir)


# ================================
# EXÉCUTION PARALLÈLE
# ================================

@dataclass(frozen=True)
class SearchTask:
    run_config: object
    seed: int
    strategy: str = SearchStrategy.ANTI_BANDIT
    output_dir: str | None = None
    max_trials: int | None = None


def _init_worker():
    django.setup()


def _run_task(task):
    return execute_search(task.run_config, task.seed, task.strategy, task.output_dir, task.max_trials)


def run_tasks(tasks, jobs=1):
    """Les résultats suivent l'ordre de `tasks` quel que soit le nombre de processus"""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_task(task) for task in tasks]
    with Pool(processes=min(jobs, len(tasks)), initializer=_init_worker) as pool:
        return pool.map(_run_task, tasks)


def run_seeds(run_config, max_trials=None):
    """Commande search : une recherche par graine, résumé global dans <output_dir>/summary.json"""
    tasks = [
        SearchTask(run_config, seed, output_dir=run_config.output_dir, max_trials=max_trials)
        for seed in run_config.seeds
    ]
    summaries = run_tasks(tasks, run_config.jobs)
    finished = [summary for summary in summaries if summary is not None]
    if len(finished) == len(summaries):
        write_json(Path(run_config.output_dir) / 'summary.json', aggregate_summary(finished))
    return summaries


def aggregate_summary(summaries):
    recovered = [summary.recovered_optimum for summary in summaries if summary.recovered_optimum is not None]
    scores = [summary.score for summary in summaries if summary.score is not None]
    return {
        'seeds': [summary.seed for summary in summaries],
        'runs': [summary_data(summary) for summary in summaries],
        'recovery_rate': float(np.mean(recovered)) if recovered else None,
        'mean_score': float(np.mean(scores)) if scores else None,
        'mean_evaluator_calls': float(np.mean([summary.evaluator_calls for summary in summaries])),
    }


# ================================
# COMPARAISON DES STRATÉGIES
# ================================

def recovery_interval(recoveries, runs, confidence=0.95):
    """-> (ci_low, ci_high, borne inférieure unilatérale) par la méthode exacte de Clopper-Pearson"""
    two_sided = stats.binomtest(recoveries, runs).proportion_ci(confidence_level=confidence, method='exact')
    one_sided = stats.binomtest(recoveries, runs, alternative='greater').proportion_ci(
        confidence_level=confidence, method='exact'
    )
    return float(two_sided.low), float(two_sided.high), float(one_sided.low)


def runs_frame(summaries, **columns):
    return pd.DataFrame([
        {
            **columns,
            'strategy': str(summary.strategy),
            'seed': summary.seed,
            'recovered': summary.recovered_optimum,
            'score': summary.score,
            'optimum_score': summary.optimum_score,
            'evaluator_calls': summary.evaluator_calls,
        }
        for summary in summaries
    ])


def compare_strategies(run_config):
    """
    Toutes les stratégies, toutes les graines, même budget d'évaluations.
    Écrit comparison_runs.csv et comparison.csv dans output_dir.
    """
    if not run_config.is_synthetic:
        raise ConfigurationError("evaluator.kind: compare requires the synthetic evaluator")
    if len(run_config.seeds) < 2:
        raise ConfigurationError("seeds: compare requires at least 2 seeds")
    limit = settings.ABANDIT['BRUTE_FORCE_LIMIT']
    if space_size(run_config.space) > limit:
        raise ConfigurationError(f"space: {SpaceTooLargeError(space_size(run_config.space), limit)}")

    tasks = [
        SearchTask(run_config, seed, strategy)
        for strategy in COMPARE_STRATEGIES
        for seed in run_config.seeds
    ]
    runs = runs_frame(run_tasks(tasks, run_config.jobs))

    reference = runs[runs['strategy'] == SearchStrategy.RANDOM.value]
    ref_hits = int(reference['recovered'].sum())
    rows = []
    for strategy in COMPARE_STRATEGIES:
        group = runs[runs['strategy'] == strategy.value]
        count = len(group)
        hits = int(group['recovered'].sum())
        ci_low, ci_high, lower_bound = recovery_interval(hits, count)
        p_value = None
        if strategy != SearchStrategy.RANDOM:
            _, p_value = stats.fisher_exact(
                [[hits, count - hits], [ref_hits, len(reference) - ref_hits]], alternative='greater'
            )
        rows.append({
            'strategy': strategy.value,
            'label': strategy.label,
            'runs': count,
            'recoveries': hits,
            'recovery_rate': hits / count,
            'ci_low': ci_low,
            'ci_high': ci_high,
            'one_sided_low': lower_bound,
            'mean_best_score': float(group['score'].mean()),
            'mean_evaluator_calls': float(group['evaluator_calls'].mean()),
            'p_value_vs_random': p_value,
        })
    table = pd.DataFrame(rows)

    output_dir = Path(run_config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    runs.to_csv(output_dir / 'comparison_runs.csv', index=False)
    table.to_csv(output_dir / 'comparison.csv', index=False)
    logger.info("Comparison of %s strategies over %s seeds written to %s",
                len(COMPARE_STRATEGIES), len(run_config.seeds), output_dir)
    return table


# ================================
# BALAYAGE D'HYPERPARAMÈTRES
# ================================

def default_sweep_values(param):
    if param == SweepParameter.LAMBDA:
        return list(settings.ABANDIT['LAMBDA_GRID'])
    return list(settings.ABANDIT['T_GRID'])


def sweep_configs(run_config, param, values):
    """Une configuration par valeur ; l'autre hyperparamètre garde sa valeur de configuration"""
    if not values:
        raise ConfigurationError("values: the sweep needs at least one value")
    configs = []
    for value in values:
        if param == SweepParameter.LAMBDA:
            value = float(value)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"values: lambda must lie in [0, 1], got {value}")
            configs.append((value, run_config.with_search(ema_weight=value)))
        elif param == SweepParameter.T:
            if float(value) != int(float(value)) or int(float(value)) < 1:
                raise ConfigurationError(f"values: T must be an integer >= 1, got {value}")
            value = int(float(value))
            configs.append((value, run_config.with_search(samples_per_op=value)))
        else:
            raise ConfigurationError(f"param: unknown sweep parameter '{param}'")
    return configs


def sweep_parameter(run_config, param, values=None):
    """Écrit sweep_runs.csv (une ligne par recherche) et sweep.csv (une ligne par valeur)"""
    values = default_sweep_values(param) if values is None else values
    configs = sweep_configs(run_config, param, values)
    tasks = [
        SearchTask(config, seed)
        for _, config in configs
        for seed in run_config.seeds
    ]
    summaries = run_tasks(tasks, run_config.jobs)
    per_value = len(run_config.seeds)
    runs = pd.concat([
        runs_frame(summaries[index * per_value:(index + 1) * per_value], param=str(param), value=value)
        for index, (value, _) in enumerate(configs)
    ], ignore_index=True)

    table = runs.groupby('value', sort=False).agg(
        runs=('seed', 'size'),
        recovery_rate=('recovered', lambda column: column.dropna().astype(float).mean()),
        mean_score=('score', 'mean'),
        mean_evaluator_calls=('evaluator_calls', 'mean'),
    ).reset_index()
    table.insert(0, 'param', str(param))

    output_dir = Path(run_config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    runs.to_csv(output_dir / 'sweep_runs.csv', index=False)
    table.to_csv(output_dir / 'sweep.csv', index=False)
    logger.info("Sweep over %s (%s values, %s searches) written to %s",
                param, len(configs), len(runs), output_dir)
    return table
