"""
Les neuf opérations candidates : passe avant et dérivées exactes.

Toutes les opérations sont de pas 1, complétées par des zéros (-inf pour le
max pooling) et conservent la forme [C, H, W] (ou [B, C, H, W]).
Les poids sont des dictionnaires nom -> ndarray ; les gradients de poids
reprennent les mêmes clés.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config.exceptions import ShapeError
from search_space.models import OperationKind
from .gabor import gabor_bank, gabor_bank_gradients

DILATION = 2
POOL_SIZE = 3
KERNEL_SIZES = {
    OperationKind.DIL_CONV_3X3: 3,
    OperationKind.DIL_CONV_5X5: 5,
    OperationKind.SEP_CONV_3X3: 3,
    OperationKind.SEP_CONV_5X5: 5,
    OperationKind.GABOR_3X3: 3,
}


# ================================
# OUTILS
# ================================

def _batched(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"Expected a [C,H,W] or [B,C,H,W] tensor, got shape {x.shape}")


def _restore(tensor, squeezed):
    return tensor[0] if squeezed else tensor


def _windows(x, size, dilation=1, pad_value=0.0):
    """Fenêtres [B, C, H, W, size, size] centrées sur chaque position"""
    span = dilation * (size - 1) + 1
    pad = span // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=pad_value)
    return sliding_window_view(padded, (span, span), axis=(2, 3))[..., ::dilation, ::dilation]


# ================================
# CONVOLUTION
# ================================

def _conv_layout(x, weight, groups):
    batch, channels, height, width = x.shape
    out_channels, group_channels, size, size_w = weight.shape
    if size != size_w or size % 2 == 0:
        raise ShapeError(f"Kernel must be square with odd size, got {weight.shape[2:]}")
    if channels % groups or out_channels % groups or group_channels != channels // groups:
        raise ShapeError(
            f"Weight shape {weight.shape} incompatible with {channels} channels in {groups} groups"
        )
    return batch, channels, height, width, out_channels, size


def conv2d(x, weight, dilation=1, groups=1):
    """Convolution (corrélation) de pas 1, complétée par des zéros, forme spatiale conservée"""
    x, squeezed = _batched(x)
    weight = np.asarray(weight, dtype=np.float64)
    batch, channels, height, width, out_channels, size = _conv_layout(x, weight, groups)
    windows = _windows(x, size, dilation).reshape(
        batch, groups, channels // groups, height, width, size, size
    )
    kernels = weight.reshape(groups, out_channels // groups, channels // groups, size, size)
    out = np.einsum('bgchwij,gocij->bgohw', windows, kernels)
    return _restore(out.reshape(batch, out_channels, height, width), squeezed)


def conv2d_backward(x, weight, upstream, dilation=1, groups=1):
    """-> (grad_x, grad_weight)"""
    x, squeezed = _batched(x)
    upstream, _ = _batched(upstream)
    weight = np.asarray(weight, dtype=np.float64)
    batch, channels, height, width, out_channels, size = _conv_layout(x, weight, groups)
    if upstream.shape != (batch, out_channels, height, width):
        raise ShapeError(f"Upstream shape {upstream.shape} does not match the convolution output")

    windows = _windows(x, size, dilation).reshape(
        batch, groups, channels // groups, height, width, size, size
    )
    kernels = weight.reshape(groups, out_channels // groups, channels // groups, size, size)
    grouped = upstream.reshape(batch, groups, out_channels // groups, height, width)

    grad_weight = np.einsum('bgchwij,bgohw->gocij', windows, grouped).reshape(weight.shape)
    grad_windows = np.einsum('bgohw,gocij->bgchwij', grouped, kernels).reshape(
        batch, channels, height, width, size, size
    )
    pad = dilation * (size - 1) // 2
    grad_padded = np.zeros((batch, channels, height + 2 * pad, width + 2 * pad))
    for i in range(size):
        for j in range(size):
            grad_padded[:, :, i * dilation:i * dilation + height, j * dilation:j * dilation + width] += (
                grad_windows[..., i, j]
            )
    grad_x = grad_padded[:, :, pad:pad + height, pad:pad + width]
    return _restore(grad_x, squeezed), grad_weight


# ================================
# POOLING
# ================================

def avg_pool(x):
    """3×3, diviseur fixe 9 (les zéros de bord comptent)"""
    x, squeezed = _batched(x)
    return _restore(_windows(x, POOL_SIZE).sum(axis=(-2, -1)) / POOL_SIZE ** 2, squeezed)


def avg_pool_backward(x, upstream):
    upstream, squeezed = _batched(upstream)
    return _restore(_windows(upstream, POOL_SIZE).sum(axis=(-2, -1)) / POOL_SIZE ** 2, squeezed)


def _max_windows(x):
    batch, channels, height, width = x.shape
    return _windows(x, POOL_SIZE, pad_value=-np.inf).reshape(
        batch, channels, height, width, POOL_SIZE ** 2
    )


def max_pool(x):
    x, squeezed = _batched(x)
    return _restore(_max_windows(x).max(axis=-1), squeezed)


def max_pool_backward(x, upstream):
    """Le gradient ne va qu'à la position de l'argmax de chaque fenêtre (première en cas d'égalité)"""
    x, squeezed = _batched(x)
    upstream, _ = _batched(upstream)
    batch, channels, height, width = x.shape
    winners = _max_windows(x).argmax(axis=-1)
    b, c, h, w = np.indices(winners.shape)
    grad_padded = np.zeros((batch, channels, height + 2, width + 2))
    np.add.at(grad_padded, (b, c, h + winners // POOL_SIZE, w + winners % POOL_SIZE), upstream)
    return _restore(grad_padded[:, :, 1:height + 1, 1:width + 1], squeezed)


# ================================
# DÉBRUITAGE NON LOCAL
# ================================

WEIGHTINGS = ('dot_product', 'uniform')


def _flatten_locations(x):
    batch, channels, height, width = x.shape
    return x.reshape(batch, channels, height * width)


def nonlocal_means(x, weighting='dot_product'):
    """
    z_p = (1 / L) * sum_q f(x_p, x_q) x_q sur les L positions spatiales.
    f = produit scalaire des vecteurs de canaux ('dot_product') ou f = 1 ('uniform').
    Renvoie z avant l'enveloppe x + conv1x1(z).
    """
    if weighting not in WEIGHTINGS:
        raise ShapeError(f"Unknown weighting '{weighting}'")
    x, squeezed = _batched(x)
    features = _flatten_locations(x)
    locations = features.shape[-1]
    if weighting == 'uniform':
        z = np.broadcast_to(features.mean(axis=-1, keepdims=True), features.shape).copy()
    else:
        gram = np.einsum('bcl,bcm->blm', features, features)
        z = np.einsum('bcm,bml->bcl', features, gram) / locations
    return _restore(z.reshape(x.shape), squeezed)


def nonlocal_means_backward(x, upstream, weighting='dot_product'):
    if weighting not in WEIGHTINGS:
        raise ShapeError(f"Unknown weighting '{weighting}'")
    x, squeezed = _batched(x)
    upstream, _ = _batched(upstream)
    features = _flatten_locations(x)
    grad_z = _flatten_locations(upstream)
    locations = features.shape[-1]
    if weighting == 'uniform':
        grad = np.broadcast_to(grad_z.sum(axis=-1, keepdims=True) / locations, features.shape)
    else:
        # Z = X XᵀX / L
        gram = np.einsum('bcl,bcm->blm', features, features)
        outer = np.einsum('bcl,bdl->bcd', features, features)
        cross = np.einsum('bcl,bcm->blm', grad_z, features)
        grad = (
            np.einsum('bcm,bml->bcl', grad_z, gram)
            + np.einsum('bcm,bml->bcl', features, cross)
            + np.einsum('bcd,bdl->bcl', outer, grad_z)
        ) / locations
    return _restore(np.ascontiguousarray(grad).reshape(x.shape), squeezed)


# ================================
# POIDS DES OPÉRATIONS
# ================================

def weight_shapes(kind, channels):
    kind = OperationKind(kind)
    size = KERNEL_SIZES.get(kind)
    if kind in (OperationKind.DIL_CONV_3X3, OperationKind.DIL_CONV_5X5):
        return {'weight': (channels, channels, size, size)}
    if kind in (OperationKind.SEP_CONV_3X3, OperationKind.SEP_CONV_5X5):
        return {'depthwise': (channels, 1, size, size), 'pointwise': (channels, channels, 1, 1)}
    if kind == OperationKind.GABOR_3X3:
        return {'gabor': (channels, 5)}
    if kind == OperationKind.DENOISE:
        return {'projection': (channels, channels, 1, 1)}
    return {}


def init_op_weights(kind, channels, rng):
    kind = OperationKind(kind)
    shapes = weight_shapes(kind, channels)
    weights = {}
    for name, shape in shapes.items():
        if name == 'gabor':
            weights[name] = np.column_stack([
                rng.uniform(0.8, 1.5, channels),
                rng.uniform(0.5, 1.0, channels),
                rng.uniform(2.0, 4.0, channels),
                rng.uniform(-np.pi / 4, np.pi / 4, channels),
                rng.uniform(0.0, np.pi, channels),
            ])
        elif name == 'projection':
            weights[name] = rng.normal(0.0, 0.1 / np.sqrt(channels), shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            weights[name] = rng.normal(0.0, np.sqrt(1.0 / fan_in), shape)
    return weights


def _check_weights(kind, channels, weights):
    for name, shape in weight_shapes(kind, channels).items():
        if name not in weights:
            raise ShapeError(f"{OperationKind(kind).label} requires a '{name}' weight")
        if np.shape(weights[name]) != shape:
            raise ShapeError(
                f"{OperationKind(kind).label}: '{name}' has shape {np.shape(weights[name])}, expected {shape}"
            )


# ================================
# PASSE AVANT / ARRIÈRE
# ================================

def op_forward(kind, x, weights=None):
    kind = OperationKind(kind)
    x, squeezed = _batched(x)
    weights = weights or {}
    _check_weights(kind, x.shape[1], weights)

    if kind == OperationKind.MAX_POOL_3X3:
        out = max_pool(x)
    elif kind == OperationKind.AVG_POOL_3X3:
        out = avg_pool(x)
    elif kind == OperationKind.SKIP_CONNECT:
        out = x.copy()
    elif kind in (OperationKind.DIL_CONV_3X3, OperationKind.DIL_CONV_5X5):
        out = conv2d(x, weights['weight'], dilation=DILATION)
    elif kind in (OperationKind.SEP_CONV_3X3, OperationKind.SEP_CONV_5X5):
        hidden = conv2d(x, weights['depthwise'], groups=x.shape[1])
        out = conv2d(hidden, weights['pointwise'])
    elif kind == OperationKind.GABOR_3X3:
        out = conv2d(x, gabor_bank(weights['gabor'], KERNEL_SIZES[kind]), groups=x.shape[1])
    else:
        out = x + conv2d(nonlocal_means(x), weights['projection'])
    return _restore(out, squeezed)


def op_backward(kind, x, weights, upstream):
    """-> (grad_input, grad_weights) ; grad_weights a les clés de `weights`"""
    kind = OperationKind(kind)
    x, squeezed = _batched(x)
    upstream, _ = _batched(upstream)
    if upstream.shape != x.shape:
        raise ShapeError(f"Upstream shape {upstream.shape} does not match input shape {x.shape}")
    weights = weights or {}
    _check_weights(kind, x.shape[1], weights)
    channels = x.shape[1]

    grads = {}
    if kind == OperationKind.MAX_POOL_3X3:
        grad_x = max_pool_backward(x, upstream)
    elif kind == OperationKind.AVG_POOL_3X3:
        grad_x = avg_pool_backward(x, upstream)
    elif kind == OperationKind.SKIP_CONNECT:
        grad_x = upstream.copy()
    elif kind in (OperationKind.DIL_CONV_3X3, OperationKind.DIL_CONV_5X5):
        grad_x, grads['weight'] = conv2d_backward(x, weights['weight'], upstream, dilation=DILATION)
    elif kind in (OperationKind.SEP_CONV_3X3, OperationKind.SEP_CONV_5X5):
        hidden = conv2d(x, weights['depthwise'], groups=channels)
        grad_hidden, grads['pointwise'] = conv2d_backward(hidden, weights['pointwise'], upstream)
        grad_x, grads['depthwise'] = conv2d_backward(
            x, weights['depthwise'], grad_hidden, groups=channels
        )
    elif kind == OperationKind.GABOR_3X3:
        size = KERNEL_SIZES[kind]
        kernels = gabor_bank(weights['gabor'], size)
        grad_x, grad_kernels = conv2d_backward(x, kernels, upstream, groups=channels)
        grads['gabor'] = gabor_bank_gradients(weights['gabor'], size, grad_kernels)
    else:
        denoised = nonlocal_means(x)
        grad_z, grads['projection'] = conv2d_backward(denoised, weights['projection'], upstream)
        grad_x = upstream + nonlocal_means_backward(x, grad_z)
    return _restore(grad_x, squeezed), grads
