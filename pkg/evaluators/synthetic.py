"""
Oracle synthétique à utilités plantées et énumération exhaustive (vérité terrain).
"""
import logging

import numpy as np
from django.conf import settings

from config.exceptions import ConfigurationError, SpaceTooLargeError
from search_space.models import Genotype, space_size
from .models import SyntheticSpec

logger = logging.getLogger(__name__)


def noiseless_score(spec, genotype):
    """Moyenne sur les arêtes des utilités des opérations choisies"""
    if not len(genotype):
        raise ConfigurationError("Cannot score an empty genotype")
    return float(np.mean([spec.utility(edge, op) for edge, op in genotype.items()]))


def synthetic_evaluate(spec, genotype, seed):
    score = noiseless_score(spec, genotype)
    if spec.noise_sigma > 0:
        score += np.random.default_rng(seed).normal(0.0, spec.noise_sigma)
    if spec.clip:
        score = min(max(score, 0.0), 1.0)
    return float(score)


class SyntheticEvaluator:
    def __init__(self, spec):
        self.spec = spec

    def evaluate(self, genotype, seed):
        return synthetic_evaluate(self.spec, genotype, seed)


def plant_synthetic_spec(space, gap, seed, noise_sigma=0.0, clip=True):
    """
    Par arête : utilités non optimales ~ U(0, 1 - gap), une opération tirée au
    hasard reçoit ~ U(max_autres + gap, 1). La marge de l'optimum est >= gap.
    """
    if not 0.0 <= gap < 1.0:
        raise ConfigurationError(f"gap must lie in [0, 1), got {gap}")
    rng = np.random.default_rng(seed)
    utilities = {}
    for edge in space.edges:
        ops = space.candidates[edge]
        values = rng.uniform(0.0, 1.0 - gap, len(ops))
        best = int(rng.integers(len(ops)))
        others = np.delete(values, best)
        floor = (others.max() if others.size else 0.0) + gap
        values[best] = rng.uniform(floor, 1.0)
        utilities.update({(edge, op): float(value) for op, value in zip(ops, values)})
    return SyntheticSpec(utilities=utilities, noise_sigma=noise_sigma, clip=clip)


def _edge_utilities(spec, space):
    return [
        np.array([spec.utility(edge, op) for op in space.candidates[edge]], dtype=np.float64)
        for edge in space.edges
    ]


def enumerate_scores(spec, space, limit=None):
    """
    Score sans bruit de chaque génotype, tableau de forme (K_1, ..., K_E) en
    ordre lexicographique des indices candidats. Les arêtes à un seul candidat
    ne forment pas d'axe.
    """
    limit = settings.ABANDIT['BRUTE_FORCE_LIMIT'] if limit is None else limit
    size = space_size(space)
    if size > limit:
        raise SpaceTooLargeError(size, limit)

    per_edge = _edge_utilities(spec, space)
    constant = sum(float(values[0]) for values in per_edge if values.size == 1)
    varying = [values for values in per_edge if values.size > 1]
    total = np.full(tuple(values.size for values in varying), constant, dtype=np.float64)
    for axis, values in enumerate(varying):
        shape = [1] * len(varying)
        shape[axis] = values.size
        total = total + values.reshape(shape)
    return total / len(per_edge)


def brute_force_best(spec, space, limit=None):
    """argmax exhaustif du score sans bruit ; égalité -> génotype lexicographiquement minimal"""
    scores = enumerate_scores(spec, space, limit)
    index = np.unravel_index(int(np.argmax(scores)), scores.shape) if scores.ndim else ()
    positions = iter(index)
    choices = {}
    for edge in space.edges:
        ops = space.candidates[edge]
        choices[edge] = ops[int(next(positions))] if len(ops) > 1 else ops[0]
    best = Genotype.from_choices(choices)
    logger.debug("Brute force over %s genotypes: best %s", scores.size, best)
    return best, noiseless_score(spec, best)
