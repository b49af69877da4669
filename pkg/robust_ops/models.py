from dataclasses import dataclass

import numpy as np

from config.exceptions import ConfigurationError, GaborParameterError


@dataclass(frozen=True)
class GaborParams:
    """Paramètres apprenables d'un noyau de Gabor ; `wavelength` est la période du cosinus"""
    sigma: float
    gamma: float
    wavelength: float
    psi: float
    theta: float

    FIELDS = ('sigma', 'gamma', 'wavelength', 'psi', 'theta')

    def __post_init__(self):
        if not self.sigma > 0:
            raise GaborParameterError(f"sigma must be > 0, got {self.sigma}")
        if not self.wavelength > 0:
            raise GaborParameterError(f"wavelength must be > 0, got {self.wavelength}")

    def as_array(self):
        return np.array([getattr(self, name) for name in self.FIELDS], dtype=np.float64)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(value) for value in values))


@dataclass(frozen=True)
class AttackConfig:
    """
    Modèle de menace l∞ : budget epsilon, pas alpha, nombre d'itérations.
    steps=1 avec random_init correspond à FGSM à initialisation aléatoire.
    """
    epsilon: float = 0.3
    alpha: float | None = None
    steps: int = 1
    random_init: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.alpha is None:
            object.__setattr__(self, 'alpha', 1.25 * self.epsilon)
        if self.alpha < 0 or (self.epsilon > 0 and self.alpha == 0):
            raise ConfigurationError(f"alpha must be > 0 when epsilon > 0, got {self.alpha}")

    def as_dict(self):
        return {
            'epsilon': self.epsilon,
            'alpha': self.alpha,
            'steps': self.steps,
            'random_init': self.random_init,
        }
