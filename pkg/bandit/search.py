"""
Boucle de recherche anti-bandit et ses variantes de comparaison.

L'échantillonnage suit la LCB (les opérations peu jouées ou faibles sont
essayées davantage), l'abandon suit la UCB (toutes les K*T évaluations,
chaque arête perd l'opération de UCB minimale). Les variantes UCBNAS
tirent au contraire selon la UCB, avec ou sans abandon.
"""
import logging

import numpy as np

from config.exceptions import (
    RewardValidationError, SchedulingError, SearchAborted, SearchError,
)
from search_space.models import Genotype, prune_operation, uniform_genotype
from .models import (
    BanditState, SearchResult, SearchStrategy, TrialPhase, TrialRecord,
)
from .scores import selection_probabilities, total_budget, ucb_probabilities, ucb_score

logger = logging.getLogger(__name__)

PRUNING_STRATEGIES = (SearchStrategy.ANTI_BANDIT, SearchStrategy.UCBNAS_PRUNING)


def trial_seed(seed, trial):
    """Graine de l'évaluateur pour l'essai `trial` d'une recherche de graine `seed`"""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def check_accuracy(accuracy):
    accuracy = float(accuracy)
    if not 0.0 <= accuracy <= 1.0:
        raise RewardValidationError(f"Accuracy must lie in [0, 1], got {accuracy}")
    return accuracy


# ================================
# OPÉRATIONS ÉLÉMENTAIRES
# ================================

def _draw_genotype(space, state, rng, probabilities):
    choices = {}
    for edge in space.edges:
        ops = space.candidates[edge]
        if len(ops) == 1:
            choices[edge] = ops[0]
            continue
        p = probabilities(state.edge_stats(space, edge), state.total_trials)
        choices[edge] = ops[rng.choice(len(ops), p=p)]
    return Genotype.from_choices(choices)


def sample_genotype(space, state, rng):
    """Tirage catégoriel indépendant par arête selon selection_probabilities"""
    return _draw_genotype(space, state, rng, selection_probabilities)


def sample_ucb_genotype(space, state, rng):
    """
    Variante UCBNAS : tirage par arête selon ucb_probabilities.
    Après le balayage, les bras d'un même essai ont des statistiques identiques
    sur toutes les arêtes ; un argmax déterministe rejouerait ces génotypes
    indéfiniment, le tirage indépendant par arête les sépare.
    """
    return _draw_genotype(space, state, rng, ucb_probabilities)


def uniform_random_genotype(space, rng):
    return Genotype.from_choices({
        edge: space.candidates[edge][rng.integers(len(space.candidates[edge]))]
        for edge in space.edges
    })


def best_mean_genotype(space, state):
    """argmax m par arête (égalité : plus petit indice)"""
    return Genotype.from_choices({
        edge: max(space.candidates[edge], key=lambda op: (state.stats[(edge, op)].m, -int(op)))
        for edge in space.edges
    })


def update_performance(state, genotype, accuracy, ema_weight):
    """m <- (1 - λ) m + λ a et n <- n + 1 pour les bras du génotype ; N <- N + 1"""
    accuracy = check_accuracy(accuracy)
    for edge, op in genotype.items():
        arm = state.stats[(edge, op)]
        arm.m = (1.0 - ema_weight) * arm.m + ema_weight * accuracy
        arm.n += 1
    state.total_trials += 1
    return state


def record_initialization(state, genotype, accuracy):
    """La précision de l'essai devient m_{k,0} de toutes ses opérations, avec n = 1"""
    for edge, op in genotype.items():
        arm = state.stats[(edge, op)]
        arm.m = accuracy
        arm.n = 1
    state.total_trials += 1
    return state


def initialization_trial(space, state, evaluator, index, seed=0):
    """Essai `index` du balayage : l'opération d'indice `index` sur toutes les arêtes"""
    genotype = uniform_genotype(space, index)
    accuracy = check_accuracy(evaluator.evaluate(genotype, trial_seed(seed, state.total_trials)))
    record_initialization(state, genotype, accuracy)
    return genotype, accuracy


def initialization_sweep(space, state, evaluator, seed=0, history=None):
    """K essais diagonaux ; chaque bras reçoit m_{k,0} et n = 1"""
    if any(arm.n for arm in state.stats.values()) or state.total_trials:
        raise SchedulingError("The initialization sweep requires a fresh bandit state")
    for index in range(space.cardinality):
        trial = state.total_trials
        genotype, accuracy = initialization_trial(space, state, evaluator, index, seed)
        if history is not None:
            history.append(TrialRecord(
                trial=trial,
                phase=TrialPhase.INIT,
                genotype=genotype,
                accuracy=accuracy,
                cardinality=state.cardinality,
                total_trials=state.total_trials,
            ))
    return state


def abandon_round(space, state, samples_per_op):
    """
    Fin de tour (c = K*T) : chaque arête abandonne son opération de UCB minimale,
    égalité tranchée par le plus petit indice du catalogue.
    """
    if state.cardinality < 2:
        raise SchedulingError("Cannot abandon an operation when K < 2")
    expected = state.cardinality * samples_per_op
    if state.round_trials != expected:
        raise SchedulingError(
            f"Abandonment scheduled after {expected} trials, round has {state.round_trials}"
        )

    removed = []
    for edge in space.edges:
        worst = min(
            space.candidates[edge],
            key=lambda op: (ucb_score(state.stats[(edge, op)], state.total_trials), int(op)),
        )
        space = prune_operation(space, edge, worst)
        removed.append((edge, worst))

    state.round_trials = 0
    state.cardinality -= 1
    logger.info("Abandonment round done: K=%s after %s trials", state.cardinality, state.total_trials)
    for edge, op in removed:
        logger.debug("Abandoned %s on %s", op.label, edge)
    return space, state


# ================================
# BOUCLE DE RECHERCHE
# ================================

class BanditSearch:
    """
    Recherche incrémentale : `run()` peut s'arrêter après un nombre d'essais
    donné et reprendre plus tard à l'identique (état, générateur, historique).
    """

    def __init__(self, space, config, evaluator, strategy=SearchStrategy.ANTI_BANDIT,
                 *, state=None, rng=None, history=None):
        self.space = space
        self.config = config
        self.evaluator = evaluator
        self.strategy = SearchStrategy(strategy)
        self.state = state if state is not None else BanditState.fresh(space)
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.history = list(history or [])

    @property
    def catalog_size(self):
        return self.state.catalog_size

    @property
    def budget(self):
        return total_budget(self.catalog_size, self.config.samples_per_op)

    @property
    def target_calls(self):
        return self.catalog_size + self.budget

    @property
    def finished(self):
        return self.state.total_trials >= self.target_calls

    @property
    def prunes(self):
        return self.strategy in PRUNING_STRATEGIES

    def _guarded(self, trial, action, *args):
        """Les échecs de l'évaluateur interrompent la recherche en gardant l'historique"""
        try:
            return action(*args)
        except (SearchError, ArithmeticError, ValueError, RuntimeError) as exc:
            logger.error("Evaluator failed at trial %s: %s", trial, exc)
            raise SearchAborted(f"Evaluator failed at trial {trial}: {exc}", history=self.history) from exc

    def _evaluate(self, genotype, trial):
        return check_accuracy(self.evaluator.evaluate(genotype, trial_seed(self.config.seed, trial)))

    def _select(self):
        if self.strategy == SearchStrategy.ANTI_BANDIT:
            return sample_genotype(self.space, self.state, self.rng)
        if self.strategy == SearchStrategy.RANDOM:
            return uniform_random_genotype(self.space, self.rng)
        return sample_ucb_genotype(self.space, self.state, self.rng)

    def step(self):
        """Un essai ; renvoie True quand un tour d'abandon vient d'avoir lieu"""
        trial = self.state.total_trials
        initializing = self.strategy != SearchStrategy.RANDOM and trial < self.catalog_size

        if initializing:
            genotype, accuracy = self._guarded(
                trial, initialization_trial,
                self.space, self.state, self.evaluator, trial, self.config.seed,
            )
        else:
            genotype = self._select()
            accuracy = self._guarded(trial, self._evaluate, genotype, trial)
            self.state.round_trials += 1
            self.state.epoch += 1
            update_performance(self.state, genotype, accuracy, self.config.ema_weight)

        self.history.append(TrialRecord(
            trial=trial,
            phase=TrialPhase.INIT if initializing else TrialPhase.SEARCH,
            genotype=genotype,
            accuracy=accuracy,
            cardinality=self.state.cardinality,
            total_trials=self.state.total_trials,
        ))
        logger.debug("Trial %s (K=%s): accuracy %.6f", trial, self.state.cardinality, accuracy)

        if (self.prunes and not initializing
                and self.state.round_trials == self.state.cardinality * self.config.samples_per_op):
            self.space, self.state = abandon_round(self.space, self.state, self.config.samples_per_op)
            return True
        return False

    def _checkpoint_due(self, abandoned):
        total = self.state.total_trials
        if abandoned or self.finished:
            return True
        if self.strategy != SearchStrategy.RANDOM and total == self.catalog_size:
            return True
        every = self.config.checkpoint_every
        return bool(every) and total % every == 0

    def run(self, max_trials=None, on_checkpoint=None):
        """
        Exécute jusqu'à la fin (ou `max_trials` essais) et renvoie le SearchResult,
        ou None si la recherche a été interrompue avant la fin.
        """
        if self.finished:
            return self.result()
        logger.info(
            "Search %s: K=%s T=%s lambda=%s, %s evaluator calls planned",
            self.strategy.value, self.catalog_size, self.config.samples_per_op,
            self.config.ema_weight, self.target_calls,
        )
        executed = 0
        while not self.finished:
            if max_trials is not None and executed >= max_trials:
                logger.info("Search interrupted after %s trials", self.state.total_trials)
                if on_checkpoint is not None:
                    on_checkpoint(self)
                return None
            try:
                abandoned = self.step()
            except SearchAborted:
                if on_checkpoint is not None:
                    on_checkpoint(self)
                raise
            executed += 1
            if on_checkpoint is not None and self._checkpoint_due(abandoned):
                on_checkpoint(self)
        return self.result()

    def final_genotype(self):
        if self.strategy == SearchStrategy.UCBNAS:
            return best_mean_genotype(self.space, self.state)
        if self.strategy == SearchStrategy.RANDOM:
            best = None
            for record in self.history:
                if best is None or record.accuracy > best.accuracy:
                    best = record
            return best.genotype
        if not self.space.is_resolved:
            raise SchedulingError("Search space still holds several candidates per edge")
        return Genotype.from_choices({edge: ops[0] for edge, ops in self.space.candidates.items()})

    def result(self):
        return SearchResult(
            genotype=self.final_genotype(),
            history=list(self.history),
            evaluator_calls=self.state.total_trials,
            strategy=self.strategy,
        )


# ================================
# POINTS D'ENTRÉE
# ================================

def run_search(space, config, evaluator, **kwargs):
    """Anti-bandit : balayage, échantillonnage LCB, abandon UCB jusqu'à K = 1"""
    return BanditSearch(space, config, evaluator, SearchStrategy.ANTI_BANDIT).run(**kwargs)


def run_ucbnas_baseline(space, config, evaluator, **kwargs):
    """Tirage selon la UCB par arête, sans élagage ; même budget ; résultat = argmax m"""
    return BanditSearch(space, config, evaluator, SearchStrategy.UCBNAS).run(**kwargs)


def run_ucbnas_pruning_baseline(space, config, evaluator, **kwargs):
    """Tirage selon la UCB par arête avec le même calendrier d'abandon que run_search"""
    return BanditSearch(space, config, evaluator, SearchStrategy.UCBNAS_PRUNING).run(**kwargs)


def run_random_baseline(space, config, evaluator, **kwargs):
    """Tirage uniforme à budget égal ; résultat = meilleur génotype observé"""
    return BanditSearch(space, config, evaluator, SearchStrategy.RANDOM).run(**kwargs)

