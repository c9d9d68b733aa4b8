#!/usr/bin/env python3
"""Noise predictor ε_θ(ỹ, x, √ᾱ) and the auxiliary mel head."""

import math
from typing import List

import numpy as np

from .config import ModelConfig
from .exceptions import ResolutionError
from .nn import Conv1d, DBlock, FiLM, LayerSpec, ParamStore, UBlock


class Decoder:
    """Conditioning frames climb the UBlock ladder to waveform rate while the
    noisy waveform descends the DBlock ladder; FiLM joins the two wherever
    their temporal resolutions coincide.

    UBlock i is modulated by down level ``n - 1 - i`` (level 0 is the input
    convolution at waveform rate).
    """

    def __init__(self, config: ModelConfig, store: ParamStore, rng: np.random.Generator, verbose=False):
        self.config = config
        self.verbose = verbose
        slope = config.leaky_slope
        levels = config.level_channels
        n = len(config.up_factors)

        self.frame_conv = Conv1d("decoder.frame_conv", store, config.hidden_dim, config.frame_conv_channels, 3, rng)
        self.ublocks: List[UBlock] = []
        in_ch = config.frame_conv_channels
        for i, (factor, ch) in enumerate(zip(config.up_factors, config.up_channels)):
            self.ublocks.append(
                UBlock(f"decoder.ublock{i}", store, in_ch, ch, factor, rng, config.dilations, slope)
            )
            in_ch = ch
        # zero output: a fresh decoder predicts ε = 0
        self.output_conv = Conv1d("decoder.output_conv", store, in_ch, 1, 3, rng, gain=0.0)

        self.input_conv = Conv1d("decoder.input_conv", store, 1, config.input_conv_channels, 5, rng)
        self.dblocks: List[DBlock] = [
            DBlock(f"decoder.dblock{j}", store, levels[j], levels[j + 1], factor, rng, config.dilations[:3], slope)
            for j, factor in enumerate(config.down_factors)
        ]
        self.films: List[FiLM] = [
            FiLM(f"decoder.film{i}", store, levels[n - 1 - i], config.up_channels[i], rng, slope)
            for i in range(n)
        ]

    def forward(self, y_noisy: np.ndarray, frames: np.ndarray, sqrt_alpha_bar: float) -> np.ndarray:
        spf = self.config.samples_per_frame
        length = y_noisy.shape[0]
        if length != frames.shape[0] * spf:
            raise ResolutionError("waveform input", frames.shape[0] * spf, length)
        n = len(self.ublocks)

        levels = [self.input_conv.forward(y_noisy.reshape(-1, 1))]
        for j, block in enumerate(self.dblocks):
            levels.append(block.forward(levels[-1]))
            expected = length // math.prod(self.config.down_factors[: j + 1])
            if levels[-1].shape[0] != expected:
                raise ResolutionError(f"dblock{j}", expected, levels[-1].shape[0])

        h = self.frame_conv.forward(frames)
        for i, (block, film) in enumerate(zip(self.ublocks, self.films)):
            scale, shift = film.forward(levels[n - 1 - i], sqrt_alpha_bar)
            h = block.forward(h, scale, shift)
        out = self.output_conv.forward(h)[:, 0]
        if self.verbose:
            print(f"[DEBUG] ε_θ on {frames.shape[0]} frames / {length} samples at √ᾱ={sqrt_alpha_bar:.4f}")
        return out

    def backward(self, deps: np.ndarray) -> np.ndarray:
        """Gradient with respect to the conditioning frames"""
        n = len(self.ublocks)
        dlevels = [None] * (len(self.dblocks) + 1)
        dh = self.output_conv.backward(deps.reshape(-1, 1))
        for i in range(n - 1, -1, -1):
            dh, dscale, dshift = self.ublocks[i].backward(dh)
            dlevel = self.films[i].backward((dscale, dshift))
            k = n - 1 - i
            dlevels[k] = dlevel if dlevels[k] is None else dlevels[k] + dlevel
        dframes = self.frame_conv.backward(dh)

        for j in range(len(self.dblocks) - 1, -1, -1):
            dlevels[j] = dlevels[j] + self.dblocks[j].backward(dlevels[j + 1])
        self.input_conv.backward(dlevels[0])
        return dframes

    def specs(self) -> List[LayerSpec]:
        specs = self.frame_conv.specs()
        for block in self.ublocks:
            specs += block.specs()
        specs += self.output_conv.specs() + self.input_conv.specs()
        for block in self.dblocks:
            specs += block.specs()
        for film in self.films:
            specs += film.specs()
        return specs


class MelHead:
    """Training-only head: one factor-1 UBlock on the frames and a projection to mel bins"""

    def __init__(self, config: ModelConfig, store: ParamStore, rng: np.random.Generator, verbose=False):
        self.verbose = verbose
        channels = config.frame_conv_channels
        self.block = UBlock(
            "mel_head.ublock", store, config.hidden_dim, channels, 1, rng, config.dilations, config.leaky_slope
        )
        self.projection = Conv1d("mel_head.projection", store, channels, config.mel_bins, 1, rng)

    def forward(self, frames: np.ndarray) -> np.ndarray:
        return self.projection.forward(self.block.forward(frames))

    def backward(self, dmel: np.ndarray) -> np.ndarray:
        dframes, _, _ = self.block.backward(self.projection.backward(dmel))
        return dframes

    def specs(self) -> List[LayerSpec]:
        return self.block.specs() + self.projection.specs()
