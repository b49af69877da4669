"""
Noyaux de Gabor appris : synthèse à partir de (σ, γ, longueur d'onde, ψ, θ)
et dérivées analytiques par rapport à ces cinq scalaires.

Convention : kernel[row, col] avec y = row - c, x = col - c (c = size // 2).
"""
import numpy as np

from config.exceptions import GaborParameterError
from .models import GaborParams

# Plancher appliqué à σ et à la longueur d'onde après chaque pas de SGD
GABOR_FLOOR = 1e-2

SIGMA, GAMMA, WAVELENGTH, PSI, THETA = range(5)


def _check_size(size):
    if size < 1 or size % 2 == 0:
        raise GaborParameterError(f"Kernel size must be odd and >= 1, got {size}")


def _grid(size):
    center = size // 2
    offsets = np.arange(size, dtype=np.float64) - center
    y, x = np.meshgrid(offsets, offsets, indexing='ij')
    return x, y


def _terms(params, size):
    _check_size(size)
    x, y = _grid(size)
    cos_t, sin_t = np.cos(params.theta), np.sin(params.theta)
    x_rot = x * cos_t + y * sin_t
    y_rot = -x * sin_t + y * cos_t
    radius = x_rot ** 2 + params.gamma ** 2 * y_rot ** 2
    envelope = np.exp(-radius / (2.0 * params.sigma ** 2))
    phase = 2.0 * np.pi * x_rot / params.wavelength + params.psi
    return x_rot, y_rot, radius, envelope, phase


def gabor_kernel(params, size=3):
    """exp(-(x'² + γ²y'²) / 2σ²) · cos(2π x' / longueur d'onde + ψ)"""
    _, _, _, envelope, phase = _terms(params, size)
    return envelope * np.cos(phase)


def gabor_param_gradients(params, size, upstream):
    """∂L/∂(σ, γ, longueur d'onde, ψ, θ) pour un gradient amont de forme (size, size)"""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (size, size):
        raise GaborParameterError(f"Upstream shape {upstream.shape} does not match kernel size {size}")
    x_rot, y_rot, radius, envelope, phase = _terms(params, size)
    sigma, gamma, wavelength = params.sigma, params.gamma, params.wavelength
    cos_part = envelope * np.cos(phase)
    sin_part = envelope * np.sin(phase)

    d_sigma = cos_part * radius / sigma ** 3
    d_gamma = -cos_part * gamma * y_rot ** 2 / sigma ** 2
    d_wavelength = sin_part * 2.0 * np.pi * x_rot / wavelength ** 2
    d_psi = -sin_part
    d_theta = (
        cos_part * (-x_rot * y_rot * (1.0 - gamma ** 2) / sigma ** 2)
        - sin_part * 2.0 * np.pi * y_rot / wavelength
    )
    return np.array(
        [np.sum(upstream * term) for term in (d_sigma, d_gamma, d_wavelength, d_psi, d_theta)],
        dtype=np.float64,
    )


def gabor_bank(bank, size=3):
    """Un noyau par canal : `bank` est de forme [C, 5], le résultat [C, 1, size, size]"""
    bank = np.asarray(bank, dtype=np.float64)
    kernels = np.stack([gabor_kernel(GaborParams.from_array(row), size) for row in bank])
    return kernels[:, None, :, :]


def gabor_bank_gradients(bank, size, upstream):
    """`upstream` de forme [C, 1, size, size] -> gradient [C, 5]"""
    bank = np.asarray(bank, dtype=np.float64)
    return np.stack([
        gabor_param_gradients(GaborParams.from_array(row), size, upstream[index, 0])
        for index, row in enumerate(bank)
    ])


def clamp_gabor_bank(bank, floor=GABOR_FLOOR):
    bank = np.array(bank, dtype=np.float64)
    bank[:, SIGMA] = np.maximum(bank[:, SIGMA], floor)
    bank[:, WAVELENGTH] = np.maximum(bank[:, WAVELENGTH], floor)
    return bank
