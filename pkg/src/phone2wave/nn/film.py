#!/usr/bin/env python3

from typing import List, Tuple

import numpy as np

from .base import Layer, LayerSpec
from .conv import Conv1d
from .functional import leaky_relu, leaky_relu_backward, noise_embedding
from .params import ParamStore


class FiLM(Layer):
    """Turns down-branch features plus the noise level into per-step scale and shift.

    features -> 3-wide conv -> leaky ReLU -> + sinusoidal embedding of √ᾱ
    -> 3-wide conv producing [shift | scale - 1].

    The output conv starts at zero, so a fresh FiLM is the identity.
    """

    kind = "film"

    def __init__(
        self,
        name: str,
        store: ParamStore,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        slope: float = 0.2,
        verbose=False,
    ):
        super().__init__(name, store, verbose)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.slope = slope
        self.input_conv = Conv1d(f"{name}.input_conv", store, in_channels, in_channels, 3, rng)
        self.output_conv = Conv1d(
            f"{name}.output_conv", store, in_channels, 2 * out_channels, 3, rng, gain=0.0
        )

    def forward(self, features: np.ndarray, sqrt_alpha_bar: float) -> Tuple[np.ndarray, np.ndarray]:
        pre = self.input_conv.forward(features)
        act = leaky_relu(pre, self.slope)
        act = act + noise_embedding(sqrt_alpha_bar, self.in_channels).astype(act.dtype)
        out = self.output_conv.forward(act)
        self._cache = pre
        shift = out[:, :self.out_channels]
        scale = 1.0 + out[:, self.out_channels:]
        return scale, shift

    def backward(self, dscale_dshift: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
        dscale, dshift = dscale_dshift
        pre = self._pop_cache()
        dact = self.output_conv.backward(np.concatenate([dshift, dscale], axis=1))
        return self.input_conv.backward(leaky_relu_backward(dact, pre, self.slope))

    def specs(self) -> List[LayerSpec]:
        own = LayerSpec(
            name=self.name,
            kind="film",
            in_channels=self.in_channels,
            out_channels=self.out_channels,
            kernel_width=3,
            activation="leaky_relu",
        )
        return [own] + self.input_conv.specs() + self.output_conv.specs()
