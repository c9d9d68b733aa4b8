#!/usr/bin/env python3
"""Mono 16-bit PCM WAV output."""

import wave
from pathlib import Path
from typing import Tuple

import numpy as np

from .exceptions import IntegrityError, NonFiniteError

PCM_SCALE = 32767


def quantize(waveform: np.ndarray) -> np.ndarray:
    """Clip to [-1, 1], scale by 32767, round half away from zero; NaN and inf are rejected"""
    x = np.asarray(waveform, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("waveform")
    x = np.clip(x, -1.0, 1.0) * PCM_SCALE
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype("<i2")


def wav_write(waveform: np.ndarray, sample_rate: int, path, verbose=False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pcm = quantize(waveform)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(pcm.tobytes())
    if verbose:
        print(f"[DEBUG] Wrote {pcm.size} samples at {sample_rate} Hz to {path}")


def wav_read(path) -> Tuple[np.ndarray, int]:
    """(samples in [-1, 1] as float32, sample rate)"""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1 or w.getsampwidth() != 2:
                raise IntegrityError(
                    f"{path}: expected mono 16-bit PCM, got {w.getnchannels()} channels "
                    f"of {8 * w.getsampwidth()} bits"
                )
            rate = w.getframerate()
            frames = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as e:
        raise IntegrityError(f"{path}: malformed WAV header: {e}")
    pcm = np.frombuffer(frames, dtype="<i2")
    return (pcm.astype(np.float32) / PCM_SCALE), rate
