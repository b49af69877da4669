"""
Réseau de cellules construit à partir d'un génotype, avec rétropropagation exacte.

stem : conv 3×3 (1 -> C) + tanh
cellule : noeud 0 = entrée, noeud j = somme des opérations des arêtes (i, j),
          concaténation des noeuds 1..M, projection 1×1 + tanh ;
          une cellule de réduction double les canaux puis moyenne par blocs 2×2
tête : moyenne spatiale globale, couche linéaire, entropie croisée softmax
"""
import numpy as np

from config.exceptions import ConfigurationError, ShapeError
from robust_ops.gabor import clamp_gabor_bank, gabor_bank
from robust_ops.ops import (
    conv2d, conv2d_backward, init_op_weights, op_backward,
    op_forward, weight_shapes,
)
from search_space.models import EdgeId, OperationKind, cell_schedule
from .models import CLASS_COUNT, INPUT_SHAPE


def _pool2(x):
    batch, channels, height, width = x.shape
    return x.reshape(batch, channels, height // 2, 2, width // 2, 2).mean(axis=(3, 5))


def _pool2_backward(upstream):
    return np.repeat(np.repeat(upstream, 2, axis=2), 2, axis=3) / 4.0


class CellNetwork:

    def __init__(self, genotype, channels, rng, reduction_cells=(),
                 input_shape=INPUT_SHAPE, classes=CLASS_COUNT):
        choices = genotype.as_dict()
        if not choices:
            raise ConfigurationError("Cannot build a network from an empty genotype")
        self.genotype = genotype
        self.cells = max(edge.cell for edge in choices) + 1
        self.nodes = max(edge.to_node for edge in choices)
        self.schedule = cell_schedule(self.nodes)
        self.reduction_cells = frozenset(reduction_cells)
        self.input_shape = tuple(input_shape)
        self.kinds = {}
        for cell in range(self.cells):
            for i, j in self.schedule:
                edge = EdgeId(cell, i, j)
                if edge not in choices:
                    raise ConfigurationError(f"Genotype has no operation for edge {edge}")
                self.kinds[edge] = OperationKind(choices[edge])

        in_channels, height, width = self.input_shape
        scale = 2 ** len(self.reduction_cells)
        if height % scale or width % scale:
            raise ConfigurationError(
                f"Input {height}x{width} cannot be halved {len(self.reduction_cells)} times"
            )

        self.params = {'stem': rng.normal(0.0, np.sqrt(1.0 / (in_channels * 9)), (channels, in_channels, 3, 3))}
        width_c = channels
        for cell in range(self.cells):
            for i, j in self.schedule:
                kind = self.kinds[EdgeId(cell, i, j)]
                for name, value in init_op_weights(kind, width_c, rng).items():
                    self.params[self._key(cell, i, j, name)] = value
            out_channels = 2 * width_c if cell in self.reduction_cells else width_c
            fan_in = self.nodes * width_c
            self.params[f'cell{cell}.projection'] = rng.normal(
                0.0, np.sqrt(1.0 / fan_in), (out_channels, fan_in, 1, 1)
            )
            width_c = out_channels
        self.params['head.weight'] = rng.normal(0.0, np.sqrt(1.0 / width_c), (classes, width_c))
        self.params['head.bias'] = np.zeros(classes)

    @staticmethod
    def _key(cell, i, j, name):
        return f'cell{cell}.{i}-{j}.{name}'

    def _edge_weights(self, cell, i, j, channels):
        kind = self.kinds[EdgeId(cell, i, j)]
        return {
            name: self.params[self._key(cell, i, j, name)]
            for name in weight_shapes(kind, channels)
        }

    def _batched(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"Expected inputs of shape {self.input_shape}, got {x.shape[1:]}")
        return x

    # ================================
    # PASSE AVANT
    # ================================

    def forward(self, x):
        """-> (logits [B, classes], cache)"""
        x = self._batched(x)
        hidden = np.tanh(conv2d(x, self.params['stem']))
        cache = {'input': x, 'stem': hidden, 'cells': []}

        for cell in range(self.cells):
            channels = hidden.shape[1]
            nodes = [hidden] + [None] * self.nodes
            for i, j in self.schedule:
                out = op_forward(self.kinds[EdgeId(cell, i, j)], nodes[i], self._edge_weights(cell, i, j, channels))
                nodes[j] = out if nodes[j] is None else nodes[j] + out
            concat = np.concatenate(nodes[1:], axis=1)
            activated = np.tanh(conv2d(concat, self.params[f'cell{cell}.projection']))
            reduction = cell in self.reduction_cells
            hidden = _pool2(activated) if reduction else activated
            cache['cells'].append({
                'nodes': nodes, 'concat': concat, 'activated': activated, 'reduction': reduction,
            })

        features = hidden.mean(axis=(2, 3))
        logits = features @ self.params['head.weight'].T + self.params['head.bias']
        cache['final'] = hidden
        cache['features'] = features
        return logits, cache

    def predict(self, x):
        logits, _ = self.forward(x)
        return logits.argmax(axis=1)

    # ================================
    # RÉTROPROPAGATION
    # ================================

    def loss_and_gradients(self, x, y):
        """-> (perte moyenne, gradients des paramètres, gradient de l'entrée)"""
        squeezed = np.ndim(x) == 3
        logits, cache = self.forward(x)
        labels = np.atleast_1d(np.asarray(y, dtype=np.int64))
        batch = logits.shape[0]
        rows = np.arange(batch)

        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-log_probs[rows, labels].mean())

        grad_logits = np.exp(log_probs)
        grad_logits[rows, labels] -= 1.0
        grad_logits /= batch

        grads = {
            'head.weight': grad_logits.T @ cache['features'],
            'head.bias': grad_logits.sum(axis=0),
        }
        final = cache['final']
        grad_hidden = np.broadcast_to(
            (grad_logits @ self.params['head.weight'])[:, :, None, None] / (final.shape[2] * final.shape[3]),
            final.shape,
        ).copy()

        for cell in reversed(range(self.cells)):
            entry = cache['cells'][cell]
            nodes = entry['nodes']
            channels = nodes[0].shape[1]
            grad_activated = _pool2_backward(grad_hidden) if entry['reduction'] else grad_hidden
            grad_pre = grad_activated * (1.0 - entry['activated'] ** 2)
            grad_concat, grads[f'cell{cell}.projection'] = conv2d_backward(
                entry['concat'], self.params[f'cell{cell}.projection'], grad_pre
            )
            grad_nodes = [np.zeros_like(nodes[0])] + [
                part.copy() for part in np.split(grad_concat, self.nodes, axis=1)
            ]
            for i, j in reversed(self.schedule):
                grad_input, grad_weights = op_backward(
                    self.kinds[EdgeId(cell, i, j)], nodes[i],
                    self._edge_weights(cell, i, j, channels), grad_nodes[j],
                )
                grad_nodes[i] = grad_nodes[i] + grad_input
                for name, value in grad_weights.items():
                    grads[self._key(cell, i, j, name)] = value
            grad_hidden = grad_nodes[0]

        grad_stem = grad_hidden * (1.0 - cache['stem'] ** 2)
        grad_x, grads['stem'] = conv2d_backward(cache['input'], self.params['stem'], grad_stem)
        return loss, grads, grad_x[0] if squeezed else grad_x

    def loss(self, x, y):
        return self.loss_and_gradients(x, y)[0]

    def input_gradient(self, x, y):
        loss, _, grad_x = self.loss_and_gradients(x, y)
        return loss, grad_x

    # ================================
    # MISE À JOUR ET INSTRUMENTATION
    # ================================

    def sgd_step(self, grads, learning_rate):
        for name, grad in grads.items():
            updated = self.params[name] - learning_rate * grad
            if name.endswith('.gabor'):
                updated = clamp_gabor_bank(updated)
            self.params[name] = updated

    def gabor_kernels(self):
        return {
            name: gabor_bank(value)
            for name, value in self.params.items()
            if name.endswith('.gabor')
        }
