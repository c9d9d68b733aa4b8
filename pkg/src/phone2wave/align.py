#!/usr/bin/env python3
"""Duration-driven Gaussian resampling and training-window extraction."""

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .exceptions import AlignmentError, ContractError, ShapeError


class Alignment(BaseModel):
    """Per-token durations and influence ranges, both in frames"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    durations: np.ndarray
    ranges: np.ndarray

    @field_validator("durations", "ranges", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return np.asarray(value, dtype=np.float64).reshape(-1)

    def __init__(self, durations, ranges):
        super().__init__(durations=durations, ranges=ranges)
        if self.durations.size == 0:
            raise ContractError("An alignment needs at least one token")
        if self.durations.shape != self.ranges.shape:
            raise ShapeError(
                f"durations {self.durations.shape} and ranges {self.ranges.shape} differ"
            )
        if not np.all(self.durations > 0.0):
            raise ContractError("durations must be positive")
        if not np.all(self.ranges > 0.0):
            raise AlignmentError("influence ranges must be positive")

    @property
    def centers(self) -> np.ndarray:
        return np.cumsum(self.durations) - 0.5 * self.durations

    @property
    def total_frames(self) -> int:
        return frame_count(self.durations)


def frame_count(durations) -> int:
    """Frames covered by a duration vector: the sum rounded half up, at least one"""
    return max(1, int(np.floor(float(np.sum(durations)) + 0.5)))


class WindowSpec(BaseModel):
    start_frame: int = Field(ge=0)
    length_frames: int = Field(ge=1)
    samples_per_frame: int = Field(300, ge=1)

    @property
    def start_sample(self) -> int:
        return self.start_frame * self.samples_per_frame

    @property
    def length_samples(self) -> int:
        return self.length_frames * self.samples_per_frame

    @property
    def frame_slice(self) -> slice:
        return slice(self.start_frame, self.start_frame + self.length_frames)

    @property
    def sample_slice(self) -> slice:
        return slice(self.start_sample, self.start_sample + self.length_samples)


def upsample_weights(alignment: Alignment, total_frames: Optional[int] = None) -> np.ndarray:
    """(T, N) matrix of normalized Gaussian weights; frame t sits at t + 0.5"""
    if total_frames is None:
        total_frames = alignment.total_frames
    positions = np.arange(total_frames, dtype=np.float64)[:, None] + 0.5
    sigma = alignment.ranges[None, :]
    logits = -((positions - alignment.centers[None, :]) ** 2) / (2.0 * sigma ** 2)
    top = logits.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        bad = int(np.argmin(np.isfinite(top[:, 0])))
        raise AlignmentError(f"Frame {bad} receives zero weight from every token")
    w = np.exp(logits - top)
    return w / w.sum(axis=1, keepdims=True)


def gaussian_upsample(
    hiddens: np.ndarray, alignment: Alignment, total_frames: Optional[int] = None
) -> np.ndarray:
    """Resample per-token vectors (N, C) to frames (T, C)"""
    if hiddens.shape[0] != alignment.durations.shape[0]:
        raise ShapeError(
            f"{hiddens.shape[0]} hidden vectors for {alignment.durations.shape[0]} durations"
        )
    w = upsample_weights(alignment, total_frames)
    return (w @ hiddens).astype(hiddens.dtype, copy=False)


class GaussianUpsampler:
    """Differentiable resampler; backward yields gradients for hiddens, durations and ranges"""

    def __init__(self, verbose=False):
        self.verbose = verbose
        self._cache = None

    def forward(
        self, hiddens: np.ndarray, alignment: Alignment, total_frames: Optional[int] = None
    ) -> np.ndarray:
        if total_frames is None:
            total_frames = alignment.total_frames
        out = gaussian_upsample(hiddens, alignment, total_frames)
        self._cache = (hiddens, alignment, total_frames)
        if self.verbose:
            print(f"[DEBUG] Upsampled {hiddens.shape[0]} tokens to {total_frames} frames")
        return out

    def backward(self, dout: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (d hiddens, d durations, d ranges); total_frames is held fixed"""
        if self._cache is None:
            raise RuntimeError("GaussianUpsampler.backward called without a cached forward")
        hiddens, alignment, total_frames = self._cache
        self._cache = None
        w = upsample_weights(alignment, total_frames)
        dtype = np.result_type(hiddens, dout)
        dhiddens = (w.T @ dout).astype(dtype, copy=False)

        dw = dout.astype(np.float64) @ hiddens.astype(np.float64).T
        dlogits = w * (dw - (w * dw).sum(axis=1, keepdims=True))
        positions = np.arange(total_frames, dtype=np.float64)[:, None] + 0.5
        offset = positions - alignment.centers[None, :]
        sigma = alignment.ranges
        dcenters = (dlogits * offset).sum(axis=0) / sigma ** 2
        dranges = (dlogits * offset ** 2).sum(axis=0) / sigma ** 3
        # c_i = sum_{j<=i} d_j - d_i / 2
        ddurations = np.cumsum(dcenters[::-1])[::-1] - 0.5 * dcenters
        return dhiddens, ddurations, dranges


def duration_loss(pred_durations: np.ndarray, true_durations: np.ndarray) -> float:
    pred = np.asarray(pred_durations, dtype=np.float64)
    true = np.asarray(true_durations, dtype=np.float64)
    if pred.shape != true.shape:
        raise ShapeError(f"duration_loss: shapes {pred.shape} and {true.shape} differ")
    if pred.size == 0:
        raise ContractError("duration_loss of empty sequences")
    return float(np.mean((pred - true) ** 2))


def duration_loss_grad(pred_durations: np.ndarray, true_durations: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred_durations)
    return 2.0 * (pred - np.asarray(true_durations, dtype=pred.dtype)) / pred.size


def choose_window(
    total_frames: int,
    window_frames: int,
    rng: np.random.Generator,
    samples_per_frame: int = 300,
    warn: bool = True,
) -> WindowSpec:
    """Uniform start in [0, total - window]; short clips use the whole utterance"""
    if total_frames < 1:
        raise ContractError("Cannot window an empty utterance")
    if window_frames > total_frames:
        if warn:
            print(
                f"Warning: window of {window_frames} frames exceeds utterance of "
                f"{total_frames} frames; using the full utterance"
            )
        window_frames = total_frames
    start = int(rng.integers(0, total_frames - window_frames + 1))
    return WindowSpec(
        start_frame=start, length_frames=window_frames, samples_per_frame=samples_per_frame
    )


def sample_window(
    frames: np.ndarray,
    waveform: np.ndarray,
    window_frames: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, WindowSpec]:
    total = frames.shape[0]
    if total == 0 or waveform.shape[0] % total:
        raise ShapeError(
            f"waveform of {waveform.shape[0]} samples is not a whole number of {total} frames"
        )
    spec = choose_window(total, window_frames, rng, waveform.shape[0] // total)
    return frames[spec.frame_slice], waveform[spec.sample_slice], spec
