#!/usr/bin/env python3
"""Elementwise activations, nearest upsampling, FiLM and the noise-level embedding."""

from typing import Tuple

import numpy as np

from ..exceptions import ContractError, ResolutionError


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0.0)


def leaky_relu(x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def leaky_relu_backward(dout: np.ndarray, x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    return np.where(x > 0.0, dout, slope * dout)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def softplus_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * sigmoid(x)


def nearest_upsample(x: np.ndarray, factor: int) -> np.ndarray:
    """Repeat every time step ``factor`` times along axis 0"""
    return np.repeat(x, factor, axis=0)


def nearest_upsample_backward(dout: np.ndarray, factor: int) -> np.ndarray:
    steps = dout.shape[0] // factor
    return dout.reshape((steps, factor) + dout.shape[1:]).sum(axis=1)


def film_modulate(activation: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """scale ⊙ activation + shift, per channel and time step"""
    if scale.shape != activation.shape or shift.shape != activation.shape:
        raise ResolutionError(
            "film_modulate", activation.shape[0], scale.shape[0] if scale.ndim else -1
        )
    return scale * activation + shift


def film_modulate_backward(
    dout: np.ndarray, activation: np.ndarray, scale: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d activation, d scale, d shift)"""
    return dout * scale, dout * activation, dout


def noise_embedding(
    sqrt_alpha_bar: float, dim: int, scale: float = 5000.0, max_period: float = 10000.0
) -> np.ndarray:
    """Sinusoidal embedding of scale·√ᾱ; even entries sin, odd entries cos"""
    if dim % 2 != 0 or dim <= 0:
        raise ContractError(f"Noise embedding dim must be even and positive, got {dim}")
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half, dtype=np.float64) / half)
    position = scale * float(sqrt_alpha_bar)
    emb = np.empty(dim, dtype=np.float64)
    emb[0::2] = np.sin(position * freqs)
    emb[1::2] = np.cos(position * freqs)
    return emb
