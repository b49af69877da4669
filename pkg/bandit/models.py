from dataclasses import dataclass, field

from django.db import models

from config.exceptions import ConfigurationError
from robust_ops.models import AttackConfig


class SearchStrategy(models.TextChoices):
    """Stratégies comparables à budget égal ; RANDOM sert d'ancre statistique"""
    ANTI_BANDIT = 'abandit', 'Anti-bandit'
    UCBNAS = 'ucbnas', 'UCBNAS'
    UCBNAS_PRUNING = 'ucbnas_pruning', 'UCBNAS (pruning)'
    RANDOM = 'random', 'Uniform random sampling'


class TrialPhase(models.TextChoices):
    INIT = 'init', 'Initialization sweep'
    SEARCH = 'search', 'Search'


@dataclass(slots=True)
class ArmStats:
    """Statistiques d'un bras : estimation m (moyenne exponentielle) et compteur n"""
    m: float = 0.0
    n: int = 0


@dataclass
class BanditState:
    """
    État complet de la boucle de recherche.
    total_trials (N) compte toutes les évaluations, balayage inclus ;
    round_trials (c) revient à 0 à chaque abandon ; epoch (t) compte les essais
    hors initialisation.
    """
    stats: dict = field(default_factory=dict)
    total_trials: int = 0
    round_trials: int = 0
    epoch: int = 0
    cardinality: int = 0
    catalog_size: int = 0

    @classmethod
    def fresh(cls, space):
        return cls(
            stats={
                (edge, op): ArmStats()
                for edge, ops in space.candidates.items()
                for op in ops
            },
            cardinality=space.cardinality,
            catalog_size=space.cardinality,
        )

    def arm(self, edge, op):
        return self.stats[(edge, op)]

    def edge_stats(self, space, edge):
        return [self.stats[(edge, op)] for op in space.candidates[edge]]


@dataclass(frozen=True)
class SearchConfig:
    """T échantillons par opération et par tour, poids λ de la moyenne exponentielle"""
    samples_per_op: int = 3
    ema_weight: float = 0.7
    seed: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.samples_per_op < 1:
            raise ConfigurationError(f"T must be >= 1, got {self.samples_per_op}")
        if not 0.0 <= self.ema_weight <= 1.0:
            raise ConfigurationError(f"lambda must lie in [0, 1], got {self.ema_weight}")
        if self.checkpoint_every < 0:
            raise ConfigurationError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")


@dataclass(frozen=True)
class TrialRecord:
    """Une ligne d'historique par génotype évalué"""
    trial: int
    phase: str
    genotype: object
    accuracy: float
    cardinality: int
    total_trials: int


@dataclass
class SearchResult:
    genotype: object
    history: list
    evaluator_calls: int
    strategy: str = SearchStrategy.ANTI_BANDIT
