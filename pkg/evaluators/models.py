from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from django.db import models

from config.exceptions import ConfigurationError
from robust_ops.models import AttackConfig
from search_space.models import Genotype

INPUT_SHAPE = (1, 8, 8)
CLASS_COUNT = 2


@runtime_checkable
class Evaluator(Protocol):
    """Oracle de récompense : (génotype, graine) -> précision dans [0, 1], pur"""

    def evaluate(self, genotype, seed):
        ...


class EvaluatorKind(models.TextChoices):
    SYNTHETIC = 'synthetic', 'Planted-utility oracle'
    TINYNET = 'tinynet', 'Adversarially trained tiny network'


class ValidationMode(models.TextChoices):
    CLEAN = 'clean', 'Clean validation accuracy'
    ADVERSARIAL = 'adversarial', 'Validation accuracy under PGD'


@dataclass(frozen=True)
class SyntheticSpec:
    """Utilités plantées par (arête, opération), bruit gaussien optionnel"""
    utilities: dict = field(default_factory=dict)
    noise_sigma: float = 0.0
    clip: bool = True

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for key, value in self.utilities.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"Utility of {key} must lie in [0, 1], got {value}")

    def utility(self, edge, op):
        try:
            return self.utilities[(edge, op)]
        except KeyError:
            raise ConfigurationError(f"No utility defined for {op.label} on edge {edge}")

    def planted_optimum(self, space):
        """argmax d'utilité par arête (égalité : plus petit indice)"""
        return Genotype.from_choices({
            edge: max(ops, key=lambda op: (self.utility(edge, op), -int(op)))
            for edge, ops in space.candidates.items()
        })


@dataclass(frozen=True)
class TinyNetSpec:
    """Réseau de cellules entraîné par FGSM à initialisation aléatoire sur des images 8×8"""
    channels: int = 4
    train_epochs: int = 1
    dataset_size: int = 768
    dataset_seed: int = 0
    learning_rate: float = 0.05
    batch_size: int = 32
    validation: str = ValidationMode.CLEAN
    attack: AttackConfig | None = field(default_factory=AttackConfig)
    input_shape: tuple = INPUT_SHAPE

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigurationError(f"channels must be >= 1, got {self.channels}")
        if self.train_epochs < 0:
            raise ConfigurationError(f"train_epochs must be >= 0, got {self.train_epochs}")
        if self.dataset_size < 2:
            raise ConfigurationError(f"dataset_size must be >= 2, got {self.dataset_size}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.validation not in ValidationMode.values:
            raise ConfigurationError(f"Unknown validation mode '{self.validation}'")


@dataclass(frozen=True)
class SyntheticDataset:
    """Images [n, 1, 8, 8] et étiquettes ; les 2/3 premiers exemples servent à l'entraînement"""
    images: np.ndarray
    labels: np.ndarray

    @property
    def count(self):
        return len(self.labels)

    @property
    def train_count(self):
        return self.count * 2 // 3

    @property
    def train(self):
        return self.images[:self.train_count], self.labels[:self.train_count]

    @property
    def validation(self):
        return self.images[self.train_count:], self.labels[self.train_count:]
