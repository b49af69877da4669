from dataclasses import dataclass, replace

from django.db import models

from bandit.models import SearchConfig
from bandit.scores import total_budget
from evaluators.models import EvaluatorKind
from evaluators.serializers import EvaluatorConfigSerializer
from search_space.models import SearchSpace


class SweepParameter(models.TextChoices):
    LAMBDA = 'lambda', 'EMA weight λ'
    T = 'T', 'Samples per operation T'


@dataclass(frozen=True)
class RunConfig:
    """Configuration validée d'une expérience (toutes graines confondues)"""
    search: SearchConfig
    space: SearchSpace
    evaluator: dict
    output_dir: str = ''
    seeds: tuple = (0,)
    jobs: int = 1

    @property
    def evaluator_kind(self):
        return self.evaluator['kind']

    @property
    def is_synthetic(self):
        return self.evaluator_kind == EvaluatorKind.SYNTHETIC

    @property
    def expected_calls(self):
        catalog_size = self.space.cardinality
        return catalog_size + total_budget(catalog_size, self.search.samples_per_op)

    def with_seed(self, seed):
        return replace(self, search=replace(self.search, seed=seed))

    def with_search(self, **changes):
        return replace(self, search=replace(self.search, **changes))

    def build_evaluator(self):
        return EvaluatorConfigSerializer.build(self.evaluator, self.space, self.search.attack)


@dataclass
class RunSummary:
    """Résumé d'une recherche pour une graine"""
    seed: int
    strategy: str
    genotype: object
    evaluator_calls: int
    expected_calls: int
    wall_time: float
    score: float | None = None
    optimum_score: float | None = None
    recovered_optimum: bool | None = None
