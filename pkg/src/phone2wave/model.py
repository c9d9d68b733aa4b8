#!/usr/bin/env python3
"""Full phoneme-to-waveform model: encoder, duration predictor, Gaussian
resampler, block masking, ε_θ decoder and the optional mel head."""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .align import (
    Alignment,
    frame_count,
    GaussianUpsampler,
    WindowSpec,
    duration_loss,
    duration_loss_grad,
    gaussian_upsample,
)
from .config import ModelConfig
from .decoder import Decoder, MelHead
from .diffusion import epsilon_loss, epsilon_loss_grad, forward_diffuse, sample
from .encoder import DurationPredictor, Encoder
from .exceptions import ContractError, NonFiniteError, ShapeError
from .nn import LayerSpec, ParamStore
from .schedule import NoiseSchedule


class BatchItem(BaseModel):
    """One utterance of a training batch with its window and noise draw"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    tokens: np.ndarray
    durations: np.ndarray
    waveform: np.ndarray
    window: WindowSpec
    epsilon: np.ndarray
    sqrt_alpha_bar: float = Field(ge=0.0, le=1.0)
    mel_target: Optional[np.ndarray] = None
    # seeds dropout, ZoneOut and block masking for this item
    seed: int = 0


class Batch(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    items: List[BatchItem]

    def __len__(self) -> int:
        return len(self.items)


class ItemLosses(BaseModel):
    eps_loss: float
    dur_loss: float
    mel_loss: float = 0.0


class SynthesisResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    waveform: np.ndarray
    durations: np.ndarray
    total_frames: int


def check_finite(**tensors: np.ndarray) -> None:
    """Raise for the first named tensor holding NaN or inf"""
    for name, value in tensors.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(name)


def block_mask(
    total_frames: int, rng: np.random.Generator, block_len: int, count: int
) -> np.ndarray:
    """Keep mask over frames with ``count`` zeroed spans of ``block_len`` (clamped to the length)"""
    keep = np.ones(total_frames, dtype=bool)
    block_len = min(block_len, total_frames)
    for _ in range(count):
        start = int(rng.integers(0, total_frames - block_len + 1))
        keep[start:start + block_len] = False
    return keep


def mask_blocks(
    frames: np.ndarray, rng: np.random.Generator, block_len: int = 32, count: int = 2
) -> np.ndarray:
    keep = block_mask(frames.shape[0], rng, block_len, count)
    return frames * keep[:, None].astype(frames.dtype)


def mel_loss(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ShapeError(f"mel prediction {pred.shape} does not match target {target.shape}")
    return float(np.mean((pred.astype(np.float64) - target) ** 2))


def mel_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return (2.0 * (pred - target.astype(pred.dtype)) / pred.size).astype(pred.dtype)


class Phone2WaveModel:
    def __init__(self, config: ModelConfig, seed: int = 0, verbose=False):
        self.config = config
        self.verbose = verbose
        self.dtype = np.dtype(config.dtype)
        self.store = ParamStore(self.dtype)
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(config, self.store, rng)
        self.duration_predictor = DurationPredictor(config, self.store, rng)
        self.upsampler = GaussianUpsampler()
        self.decoder = Decoder(config, self.store, rng)
        self.mel_head = MelHead(config, self.store, rng) if config.multitask else None
        if verbose:
            print(f"[DEBUG] Built model with {self.parameter_count()} parameters ({self.dtype})")

    def encode(self, tokens, train: bool = False, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return self.encoder.forward(np.asarray(tokens), train, rng)

    def predict_durations(self, hiddens: np.ndarray):
        """(durations, ranges), both strictly positive, in frames"""
        return self.duration_predictor.forward(hiddens)

    def resample(
        self, hiddens: np.ndarray, durations: np.ndarray, ranges: np.ndarray, total_frames: Optional[int] = None
    ) -> np.ndarray:
        return self.upsampler.forward(hiddens, Alignment(durations, ranges), total_frames)

    def eps_theta(self, y_noisy: np.ndarray, frames: np.ndarray, sqrt_alpha_bar: float) -> np.ndarray:
        return self.decoder.forward(np.asarray(y_noisy, dtype=self.dtype), frames, sqrt_alpha_bar)

    def predict_mel(self, frames: np.ndarray) -> np.ndarray:
        if self.mel_head is None:
            raise ContractError("mel head requested but the model was built without multitask")
        return self.mel_head.forward(frames)

    def loss_and_grads(
        self,
        item: BatchItem,
        lambda_dur: float = 0.1,
        lambda_mel: float = 1.0,
        loss_scale: float = 1.0,
    ) -> ItemLosses:
        """Forward one item in training mode and accumulate scaled gradients into the store"""
        cfg = self.config
        rng = np.random.default_rng(item.seed)
        durations = np.asarray(item.durations, dtype=np.float64)
        total_frames = frame_count(durations)
        if item.waveform.shape[0] != total_frames * cfg.samples_per_frame:
            raise ShapeError(
                f"waveform of {item.waveform.shape[0]} samples does not cover {total_frames} frames"
            )

        hiddens = self.encoder.forward(np.asarray(item.tokens), True, rng)
        dur_pred, ranges = self.duration_predictor.forward(hiddens)
        check_finite(hiddens=hiddens, dur_pred=dur_pred, ranges=ranges)
        dur_loss = duration_loss(dur_pred, durations)

        # ground-truth durations place the Gaussians; only the ranges are learned here
        frames = self.upsampler.forward(hiddens, Alignment(durations, ranges), total_frames)
        check_finite(frames=frames)
        keep = None
        conditioned = frames
        if cfg.mask_enabled:
            keep = block_mask(total_frames, rng, cfg.mask_block_len, cfg.mask_count)
            conditioned = frames * keep[:, None].astype(frames.dtype)

        window = item.window
        y0 = np.asarray(item.waveform[window.sample_slice], dtype=self.dtype)
        epsilon = np.asarray(item.epsilon, dtype=self.dtype)
        y_noisy = forward_diffuse(y0, item.sqrt_alpha_bar, epsilon).astype(self.dtype, copy=False)
        eps_pred = self.decoder.forward(y_noisy, conditioned[window.frame_slice], item.sqrt_alpha_bar)
        check_finite(eps_pred=eps_pred)
        eps_loss = epsilon_loss(eps_pred, epsilon)

        mel = 0.0
        mel_pred = None
        if self.mel_head is not None:
            if item.mel_target is None:
                raise ContractError("multitask training needs a mel target for every item")
            mel_pred = self.mel_head.forward(frames)
            check_finite(mel_pred=mel_pred)
            mel = mel_loss(mel_pred, item.mel_target)

        dwindow = self.decoder.backward(epsilon_loss_grad(eps_pred, epsilon) * loss_scale)
        dframes = np.zeros_like(frames)
        dframes[window.frame_slice] = dwindow
        if keep is not None:
            dframes *= keep[:, None].astype(dframes.dtype)
        if mel_pred is not None and lambda_mel != 0.0:
            dmel = mel_loss_grad(mel_pred, item.mel_target) * (lambda_mel * loss_scale)
            dframes += self.mel_head.backward(dmel.astype(self.dtype))

        dhiddens, _, dranges = self.upsampler.backward(dframes)
        ddur = duration_loss_grad(dur_pred, durations) * (lambda_dur * loss_scale)
        dhiddens = dhiddens + self.duration_predictor.backward(
            ddur.astype(self.dtype), dranges.astype(self.dtype)
        )
        self.encoder.backward(dhiddens.astype(self.dtype, copy=False))
        return ItemLosses(eps_loss=eps_loss, dur_loss=dur_loss, mel_loss=mel)

    def synthesize(
        self,
        tokens,
        schedule: NoiseSchedule,
        rng: np.random.Generator,
        durations: Optional[np.ndarray] = None,
    ) -> SynthesisResult:
        """Full-utterance ancestral sampling, clipped to [-1, 1].

        Predicted durations are used unless teacher ones are given.
        """
        hiddens = self.encode(tokens, train=False)
        dur_pred, ranges = self.predict_durations(hiddens)
        used = dur_pred if durations is None else np.asarray(durations, dtype=np.float64)
        alignment = Alignment(used, ranges)
        frames = gaussian_upsample(hiddens, alignment)
        waveform = sample(
            lambda y, x, sab: self.decoder.forward(y, x, sab),
            frames,
            schedule,
            rng,
            samples_per_frame=self.config.samples_per_frame,
            dtype=self.dtype,
        )
        check_finite(waveform=waveform)
        if self.verbose:
            print(f"[DEBUG] Synthesized {frames.shape[0]} frames in {schedule.N} steps")
        return SynthesisResult(
            waveform=np.clip(waveform, -1.0, 1.0),
            durations=np.asarray(used, dtype=np.float64),
            total_frames=frames.shape[0],
        )

    def parameter_count(self, prefix: Optional[str] = None) -> int:
        return self.store.num_parameters(prefix)

    def layer_specs(self) -> List[LayerSpec]:
        specs = self.encoder.specs() + self.duration_predictor.specs() + self.decoder.specs()
        if self.mel_head is not None:
            specs += self.mel_head.specs()
        return specs
