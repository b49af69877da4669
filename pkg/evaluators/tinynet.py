"""
Évaluateur « tiny network » : entraînement adversarial FGSM à initialisation
aléatoire d'un réseau de cellules, puis précision de validation.
"""
import logging

import numpy as np

from config.exceptions import AttackError
from robust_ops.attacks import pgd_attack, signed_gradient_attack
from robust_ops.tensors import dump_tensor
from .datasets import make_synthetic_dataset
from .models import ValidationMode
from .network import CellNetwork

logger = logging.getLogger(__name__)


def trial_streams(seed):
    """Flux indépendants : initialisation des poids, ordre des exemples, attaques"""
    init_seq, shuffle_seq, attack_seq = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(init_seq),
        np.random.default_rng(shuffle_seq),
        np.random.default_rng(attack_seq),
    )


def _accuracy(network, images, labels):
    predictions = network.predict(images)
    return float(np.mean(predictions == labels))


def tinynet_evaluate(spec, genotype, seed, reduction_cells=(), dataset=None, hooks=None):
    """
    Pour chaque époque et chaque minibatch : δ ~ U(-ε, ε), un pas de signe du
    gradient, projection sur la boule l∞, puis un pas de SGD sur x + δ.
    Renvoie la précision de validation (propre par défaut). Une perte non
    finie donne un score de 0.
    """
    hooks = hooks or {}
    if dataset is None:
        dataset = make_synthetic_dataset(spec.dataset_size, spec.dataset_seed)
    init_rng, shuffle_rng, attack_rng = trial_streams(seed)
    network = CellNetwork(
        genotype, spec.channels, init_rng,
        reduction_cells=reduction_cells, input_shape=spec.input_shape,
    )
    train_images, train_labels = dataset.train
    attack = spec.attack
    delta = None

    for epoch in range(spec.train_epochs):
        order = shuffle_rng.permutation(len(train_labels))
        for batch_index, start in enumerate(range(0, len(order), spec.batch_size)):
            index = order[start:start + spec.batch_size]
            images, labels = train_images[index], train_labels[index]
            if attack is not None:
                try:
                    delta = signed_gradient_attack(network, images, labels, attack, attack_rng, steps=1)
                except AttackError as exc:
                    logger.warning("Trial seed %s: %s; scoring 0", seed, exc)
                    return 0.0
                if 'on_perturbation' in hooks:
                    hooks['on_perturbation'](epoch, batch_index, delta)
                images = images + delta
            loss, grads, _ = network.loss_and_gradients(images, labels)
            if not np.isfinite(loss):
                logger.warning("Trial seed %s: non-finite loss at epoch %s batch %s; scoring 0",
                               seed, epoch, batch_index)
                return 0.0
            network.sgd_step(grads, spec.learning_rate)
        if 'on_epoch' in hooks:
            hooks['on_epoch'](epoch, network)

    val_images, val_labels = dataset.validation
    if spec.validation == ValidationMode.ADVERSARIAL and attack is not None:
        try:
            val_delta = pgd_attack(network, val_images, val_labels, attack, attack_rng)
        except AttackError as exc:
            logger.warning("Trial seed %s: %s during validation; scoring 0", seed, exc)
            return 0.0
        val_images = val_images + val_delta

    accuracy = _accuracy(network, val_images, val_labels)
    if delta is not None:
        dump_tensor(f"trial_{seed}_perturbation", delta)
    for name, kernels in network.gabor_kernels().items():
        dump_tensor(f"trial_{seed}_{name}", kernels)
    return accuracy


class TinyNetEvaluator:
    """Le jeu de données est généré une fois et partagé par tous les essais"""

    def __init__(self, spec, reduction_cells=(), hooks=None):
        self.spec = spec
        self.reduction_cells = tuple(reduction_cells)
        self.hooks = hooks
        self._dataset = None

    @property
    def dataset(self):
        if self._dataset is None:
            self._dataset = make_synthetic_dataset(self.spec.dataset_size, self.spec.dataset_seed)
        return self._dataset

    def evaluate(self, genotype, seed):
        return tinynet_evaluate(
            self.spec, genotype, seed,
            reduction_cells=self.reduction_cells, dataset=self.dataset, hooks=self.hooks,
        )
