"""Scores de confiance (LCB / UCB), loi d'échantillonnage et budget d'essais."""
import math

import numpy as np

from config.exceptions import ConfigurationError, UndefinedArmError


def exploration_radius(n, total_trials):
    """sqrt(2 ln N / n)"""
    if n < 1:
        raise UndefinedArmError("Arm has never been evaluated (n = 0); run the initialization sweep first")
    if total_trials < 1:
        raise UndefinedArmError(f"Total trial count must be >= 1, got {total_trials}")
    return math.sqrt(2.0 * math.log(total_trials) / n)


def lcb_score(stats, total_trials):
    return stats.m - exploration_radius(stats.n, total_trials)


def ucb_score(stats, total_trials):
    return stats.m + exploration_radius(stats.n, total_trials)


def _softmax(logits):
    logits = np.asarray(logits, dtype=np.float64)
    weights = np.exp(logits - logits.max())
    return weights / weights.sum()


def selection_probabilities(edge_stats, total_trials):
    """
    p_k = exp(-s_L(k)) / sum_m exp(-s_L(m)).
    Le maximum de -s_L est soustrait avant l'exponentielle.
    """
    return _softmax([-lcb_score(stats, total_trials) for stats in edge_stats])


def ucb_probabilities(edge_stats, total_trials):
    """Bandit classique : p_k proportionnel à exp(s_U(k)), les bras de UCB haute sont favorisés"""
    return _softmax([ucb_score(stats, total_trials) for stats in edge_stats])


def total_budget(catalog_size, samples_per_op):
    """T * sum_{k=2}^{K} k essais après le balayage d'initialisation (0 si K = 1)"""
    if catalog_size < 1:
        raise ConfigurationError(f"K must be >= 1, got {catalog_size}")
    if samples_per_op < 1:
        raise ConfigurationError(f"T must be >= 1, got {samples_per_op}")
    return samples_per_op * sum(range(2, catalog_size + 1))
