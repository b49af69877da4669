"""
Perturbations l∞ par signe du gradient : FGSM à initialisation aléatoire et PGD.

Le modèle attaqué expose `input_gradient(x, y) -> (loss, grad_x)`.
"""
import numpy as np

from config.exceptions import AttackError, ConfigurationError


def _initial_delta(shape, config, rng):
    if config.random_init and config.epsilon > 0:
        return rng.uniform(-config.epsilon, config.epsilon, size=shape)
    return np.zeros(shape, dtype=np.float64)


def signed_gradient_attack(model, x, y, config, rng, steps, on_step=None):
    """
    δ0 ~ U(-ε, ε) (ou 0), puis `steps` fois : δ <- clip(δ + α sign(∇_x l(x + δ, y)), -ε, ε).
    `on_step(step, delta, loss)` est appelé après chaque pas.
    """
    x = np.asarray(x, dtype=np.float64)
    delta = _initial_delta(x.shape, config, rng)
    if config.epsilon == 0:
        return delta

    for step in range(steps):
        loss, grad = model.input_gradient(x + delta, y)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise AttackError(f"Non-finite loss or input gradient at attack step {step}")
        delta = np.clip(delta + config.alpha * np.sign(grad), -config.epsilon, config.epsilon)
        if on_step is not None:
            on_step(step, delta, loss)
    return delta


def fgsm_random_init(model, x, y, config, rng, on_step=None):
    if config.steps != 1:
        raise ConfigurationError(f"FGSM with random init takes a single step, got steps={config.steps}")
    return signed_gradient_attack(model, x, y, config, rng, steps=1, on_step=on_step)


def pgd_attack(model, x, y, config, rng, on_step=None):
    return signed_gradient_attack(model, x, y, config, rng, steps=config.steps, on_step=on_step)
