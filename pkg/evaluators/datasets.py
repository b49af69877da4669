"""
Jeu de données synthétique à deux classes sur des images 8×8 à un canal.
Classe 0 : barre orientée sur fond sombre + bruit ; classe 1 : bruit isotrope.
"""
from pathlib import Path

import numpy as np

from config.exceptions import ConfigurationError, ShapeError
from robust_ops.tensors import read_tensor, write_tensor
from .models import INPUT_SHAPE, SyntheticDataset

LABEL_DTYPE = np.dtype('<i4')

BAR_WIDTH = 0.8
BAR_NOISE = 0.1
NOISE_MEAN = 0.6
NOISE_STD = 0.2


def _oriented_bar(rng, size):
    theta = rng.uniform(0.0, np.pi)
    offset = rng.uniform(-1.0, 1.0)
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    y, x = np.meshgrid(coords, coords, indexing='ij')
    distance = x * np.sin(theta) - y * np.cos(theta) - offset
    bar = np.exp(-distance ** 2 / (2.0 * BAR_WIDTH ** 2))
    return bar + rng.normal(0.0, BAR_NOISE, (size, size))


def _isotropic_noise(rng, size):
    return rng.normal(NOISE_MEAN, NOISE_STD, (size, size))


def make_synthetic_dataset(count, seed):
    """`count` exemples équilibrés (±1), mélangés, valeurs dans [0, 1]"""
    if count < 2:
        raise ConfigurationError(f"Dataset needs at least 2 examples, got {count}")
    rng = np.random.default_rng(seed)
    channels, height, width = INPUT_SHAPE
    labels = rng.permutation(np.arange(count) % 2).astype(np.int64)
    images = np.empty((count, channels, height, width), dtype=np.float64)
    for index, label in enumerate(labels):
        image = _oriented_bar(rng, height) if label == 0 else _isotropic_noise(rng, height)
        images[index, 0] = np.clip(image, 0.0, 1.0)
    return SyntheticDataset(images=images, labels=labels)


def export_dataset(path, dataset):
    """En-tête int32 [4, n, C, H, W], pixels float64, puis n étiquettes int32"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('wb') as stream:
        write_tensor(stream, dataset.images)
        stream.write(np.ascontiguousarray(dataset.labels, dtype=LABEL_DTYPE).tobytes())
    return path


def load_dataset(path):
    with Path(path).open('rb') as stream:
        images = read_tensor(stream)
        if images.ndim != 4:
            raise ShapeError(f"Dataset images must be 4-dimensional, got {images.ndim}")
        count = images.shape[0]
        labels = np.frombuffer(stream.read(LABEL_DTYPE.itemsize * count), dtype=LABEL_DTYPE)
    if labels.size != count:
        raise ShapeError(f"Expected {count} labels, got {labels.size}")
    return SyntheticDataset(images=images, labels=labels.astype(np.int64))
