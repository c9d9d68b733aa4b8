#!/usr/bin/env python3
"""Synthetic harmonic-tone corpus, log-mel features and the corpus container.

Container layout (little-endian):
    magic b"P2WCORP\\0", u16 version, u32 count, u32 sample_rate,
    u32 samples_per_frame, u32 num_content_tokens
    per utterance: u32 n_tokens, u32 n_samples, u16 tokens[n_tokens],
    u16 durations[n_tokens], f32 samples[n_samples]
    u32 CRC-32 of everything before it
"""

import json
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import librosa
import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import CorpusConfig, MelConfig
from .exceptions import ContractError, IntegrityError, ShapeError, UnknownTokenError, VersionMismatchError

CORPUS_MAGIC = b"P2WCORP\0"
CORPUS_VERSION = 1
_HEADER = struct.Struct("<8sHIIII")
_UTTERANCE = struct.Struct("<II")
_CRC = struct.Struct("<I")


class Utterance(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tokens: np.ndarray
    durations: np.ndarray
    waveform: np.ndarray
    sample_rate: int = 4000
    samples_per_frame: int = 40

    @property
    def total_frames(self) -> int:
        return int(self.durations.sum())


def token_frequency(token: int, config: CorpusConfig) -> float:
    """Fundamental of a content token; silence and end-of-sequence have none"""
    k = token - 2
    return config.base_frequency * 2.0 ** (k / 12.0)


def _envelope(length: int, fade_fraction: float) -> np.ndarray:
    env = np.ones(length)
    fade = int(round(fade_fraction * length))
    if fade > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(fade) + 0.5) / fade)
        env[:fade] = ramp
        env[length - fade:] = ramp[::-1]
    return env


def gen_token_sequence(rng: np.random.Generator, config: CorpusConfig) -> np.ndarray:
    """Content tokens grouped into words separated by silence, closed by end-of-sequence"""
    count = int(rng.integers(config.min_tokens, config.max_tokens + 1))
    tokens: List[int] = []
    for i in range(count - 1):
        if 0 < i < count - 2 and tokens[-1] != config.silence_id and rng.random() < config.silence_probability:
            tokens.append(config.silence_id)
        else:
            tokens.append(int(rng.integers(2, config.vocab_size)))
    tokens.append(config.eos_id)
    return np.asarray(tokens, dtype=np.int64)


def gen_utterance(
    tokens: Sequence[int],
    rng: np.random.Generator,
    config: CorpusConfig,
    durations: Optional[Sequence[int]] = None,
) -> Utterance:
    """Render tokens as harmonic tones with continuous phase; durations drawn unless given"""
    tokens = np.asarray(tokens, dtype=np.int64)
    bad = tokens[(tokens < 0) | (tokens >= config.vocab_size)]
    if bad.size:
        raise UnknownTokenError(f"Token id {int(bad[0])} outside vocabulary of size {config.vocab_size}")
    if durations is None:
        durations = rng.integers(config.min_duration, config.max_duration + 1, size=tokens.size)
    durations = np.asarray(durations, dtype=np.int64)
    if durations.shape != tokens.shape:
        raise ShapeError(f"{durations.size} durations for {tokens.size} tokens")

    spf = config.samples_per_frame
    sr = config.sample_rate
    harmonics = np.arange(1, config.num_harmonics + 1)
    weights = (1.0 / harmonics) / np.sum(1.0 / harmonics)
    phases = np.zeros(config.num_harmonics)
    segments = []
    for token, frames in zip(tokens, durations):
        n = int(frames) * spf
        if token in (config.silence_id, config.eos_id):
            segments.append(np.zeros(n))
            continue
        step = 2.0 * np.pi * harmonics * token_frequency(int(token), config) / sr
        t = np.arange(n)[:, None]
        tone = np.sin(phases[None, :] + step[None, :] * t) @ weights
        phases = np.mod(phases + step * n, 2.0 * np.pi)
        segments.append(config.amplitude * _envelope(n, config.fade_fraction) * tone)
    waveform = np.concatenate(segments) if segments else np.zeros(0)
    return Utterance(
        tokens=tokens,
        durations=durations,
        waveform=np.clip(waveform, -1.0, 1.0).astype(np.float32),
        sample_rate=sr,
        samples_per_frame=spf,
    )


def utterance_seed(seed: int, index: int) -> List[int]:
    return [seed, index]


def generate_corpus(
    config: CorpusConfig, seed: int, count: Optional[int] = None, start: int = 0, verbose=False
) -> List[Utterance]:
    """Utterances ``start .. start + count``; each has its own generator seeded by (seed, index)"""
    if count is None:
        count = config.train_count + config.holdout_count
    utterances = []
    for index in range(start, start + count):
        rng = np.random.default_rng(utterance_seed(seed, index))
        utterances.append(gen_utterance(gen_token_sequence(rng, config), rng, config))
    if verbose:
        print(f"[DEBUG] Generated {count} utterances from seed {seed}")
    return utterances


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """(n_mels, n_fft // 2 + 1) triangular filters, unit peak, HTK mel scale"""
    return librosa.filters.mel(
        sr=cfg.sample_rate,
        n_fft=cfg.n_fft,
        n_mels=cfg.n_mels,
        fmin=cfg.fmin,
        fmax=cfg.fmax,
        htk=True,
        norm=None,
        dtype=np.float64,
    )


def mel_band_centers(cfg: MelConfig) -> np.ndarray:
    return librosa.mel_frequencies(n_mels=cfg.n_mels + 2, fmin=cfg.fmin, fmax=cfg.fmax, htk=True)[1:-1]


def num_mel_frames(num_samples: int, cfg: MelConfig) -> int:
    return (num_samples - cfg.win_length) // cfg.hop_length + 1


def mel_power(waveform: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Pre-log mel energies, shape (frames, n_mels)"""
    x = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if x.size < cfg.win_length:
        raise ContractError(f"waveform of {x.size} samples is shorter than one window ({cfg.win_length})")
    # librosa centres the win_length Hann inside each n_fft frame; shifting the
    # signal by that offset makes frame t cover samples [t * hop, t * hop + win)
    left = (cfg.n_fft - cfg.win_length) // 2
    padded = np.pad(x, (left, cfg.n_fft - cfg.win_length - left))
    spectrum = librosa.stft(
        padded,
        n_fft=cfg.n_fft,
        hop_length=cfg.hop_length,
        win_length=cfg.win_length,
        window="hann",
        center=False,
    )
    power = np.abs(spectrum) ** 2
    return (mel_filterbank(cfg) @ power).T


def mel_spectrogram(waveform: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Log-mel matrix (frames, n_mels) with a floor before the log"""
    return np.log(np.maximum(mel_power(waveform, cfg), cfg.log_floor))


def mel_target(waveform: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Log-mel of the whole utterance padded so there is one mel frame per hop"""
    pad = cfg.win_length - cfg.hop_length
    left = pad // 2
    padded = np.pad(np.asarray(waveform, dtype=np.float64), (left, pad - left))
    return mel_spectrogram(padded, cfg)


def log_mel_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-frame Euclidean distance over the frames both matrices share"""
    frames = min(a.shape[0], b.shape[0])
    if frames == 0:
        raise ContractError("log_mel_distance needs at least one common frame")
    if a.shape[1:] != b.shape[1:]:
        raise ShapeError(f"mel bins differ: {a.shape[1:]} vs {b.shape[1:]}")
    return float(np.mean(np.linalg.norm(a[:frames] - b[:frames], axis=1)))


def corpus_size_bytes(utterances: Sequence[Utterance]) -> int:
    body = sum(_UTTERANCE.size + 4 * u.tokens.size + 4 * u.waveform.size for u in utterances)
    return _HEADER.size + body + _CRC.size


def corpus_write(utterances: Sequence[Utterance], path, config: CorpusConfig, verbose=False) -> str:
    """Write the container; returns the CRC-32 as 8 hex digits"""
    parts = [
        _HEADER.pack(
            CORPUS_MAGIC,
            CORPUS_VERSION,
            len(utterances),
            config.sample_rate,
            config.samples_per_frame,
            config.num_content_tokens,
        )
    ]
    for u in utterances:
        if u.samples_per_frame != config.samples_per_frame or u.sample_rate != config.sample_rate:
            raise ContractError("utterance rates differ from the corpus config")
        parts.append(_UTTERANCE.pack(u.tokens.size, u.waveform.size))
        parts.append(np.asarray(u.tokens, dtype="<u2").tobytes())
        parts.append(np.asarray(u.durations, dtype="<u2").tobytes())
        parts.append(np.asarray(u.waveform, dtype="<f4").tobytes())
    body = b"".join(parts)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(body)
        f.write(_CRC.pack(crc))
    if verbose:
        print(f"[DEBUG] Wrote {len(utterances)} utterances to {path} ({len(body) + 4} bytes)")
    return f"{crc:08x}"


def corpus_read(path, verbose=False) -> List[Utterance]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size + _CRC.size:
        raise IntegrityError(f"{path}: truncated corpus ({len(raw)} bytes)")
    magic, version, count, sample_rate, spf, _ = _HEADER.unpack_from(raw, 0)
    if magic != CORPUS_MAGIC:
        raise IntegrityError(f"{path}: not a phone2wave corpus")
    if version != CORPUS_VERSION:
        raise VersionMismatchError(f"{path}: corpus version {version}, this build reads {CORPUS_VERSION}")
    body = raw[:-_CRC.size]
    (stored,) = _CRC.unpack_from(raw, len(raw) - _CRC.size)
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise IntegrityError(f"{path}: checksum mismatch")

    utterances = []
    offset = _HEADER.size
    for i in range(count):
        if offset + _UTTERANCE.size > len(body):
            raise IntegrityError(f"{path}: truncated at utterance {i}")
        n_tokens, n_samples = _UTTERANCE.unpack_from(body, offset)
        offset += _UTTERANCE.size
        end = offset + 4 * n_tokens + 4 * n_samples
        if end > len(body):
            raise IntegrityError(f"{path}: truncated at utterance {i}")
        tokens = np.frombuffer(body, "<u2", n_tokens, offset).astype(np.int64)
        durations = np.frombuffer(body, "<u2", n_tokens, offset + 2 * n_tokens).astype(np.int64)
        samples = np.frombuffer(body, "<f4", n_samples, offset + 4 * n_tokens).astype(np.float32)
        utterances.append(
            Utterance(
                tokens=tokens,
                durations=durations,
                waveform=samples,
                sample_rate=sample_rate,
                samples_per_frame=spf,
            )
        )
        offset = end
    if offset != len(body):
        raise IntegrityError(f"{path}: {len(body) - offset} trailing bytes")
    if verbose:
        print(f"[DEBUG] Read {count} utterances from {path}")
    return utterances


def build_manifest(
    config: CorpusConfig, seed: int, checksum: str, count: Optional[int] = None
) -> Dict[str, Any]:
    """Human-readable description of a corpus file; train utterances come first"""
    if count is None:
        count = config.train_count + config.holdout_count
    train = min(config.train_count, count)
    return {
        "format_version": CORPUS_VERSION,
        "seed": seed,
        "utterance_seeds": "[seed, index]",
        "count": count,
        "splits": {"train": [0, train], "holdout": [train, count]},
        "crc32": checksum,
        "corpus_config": config.model_dump(),
    }


def write_manifest(manifest: Dict[str, Any], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def split_corpus(utterances: List[Utterance], manifest: Optional[Dict[str, Any]], train_count: int):
    """(train, holdout) using the manifest split when present"""
    if manifest is not None:
        train_count = manifest["splits"]["train"][1]
    return utterances[:train_count], utterances[train_count:]


def manifest_path(corpus_path) -> Path:
    corpus_path = Path(corpus_path)
    return corpus_path.with_name(corpus_path.stem + ".manifest.json")


def check_corpus_config(utterances: Sequence[Utterance], config: CorpusConfig) -> None:
    for u in utterances[:1]:
        if u.sample_rate != config.sample_rate or u.samples_per_frame != config.samples_per_frame:
            raise ContractError(
                f"corpus was written at {u.sample_rate} Hz / {u.samples_per_frame} samples per frame, "
                f"run config expects {config.sample_rate} Hz / {config.samples_per_frame}"
            )
