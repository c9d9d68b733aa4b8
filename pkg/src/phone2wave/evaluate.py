#!/usr/bin/env python3
"""Objective evaluation on held-out utterances.

For each utterance and step count the model synthesizes twice, once with
the reference durations and once with its own predictions, and the log-mel
distance to the reference is reported next to the distance of a pure
N(0, I) waveform of the same length. Both are clipped to [-1, 1] as
synthesized audio is.
"""

from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .align import Alignment, gaussian_upsample
from .config import MelConfig
from .data import Utterance, log_mel_distance, mel_target
from .diffusion import epsilon_loss, forward_diffuse
from .exceptions import NonFiniteError
from .model import Phone2WaveModel
from .schedule import NoiseSchedule, inference_schedule, sample_noise_level


def _mean(values: List[float]) -> float:
    return float(np.mean(values)) if values else 0.0


def _check_row(row: Dict[str, Any]) -> None:
    values = {k: v for k, v in row.items() if isinstance(v, float)}
    for steps, kinds in row["log_mel"].items():
        values.update({f"log_mel[{steps}].{kind}": v for kind, v in kinds.items()})
    for name, value in values.items():
        if not np.isfinite(value):
            raise NonFiniteError(f"utterance {row['index']} {name}")


def eps_validation_loss(
    model: Phone2WaveModel, utt: Utterance, schedule: NoiseSchedule, rng: np.random.Generator
) -> float:
    """ε loss on the full utterance at one sampled noise level, evaluation mode"""
    hiddens = model.encode(utt.tokens, train=False)
    _, ranges = model.predict_durations(hiddens)
    frames = gaussian_upsample(hiddens, Alignment(utt.durations, ranges), utt.total_frames)
    sqrt_ab = sample_noise_level(schedule, rng)
    epsilon = rng.standard_normal(utt.waveform.shape[0]).astype(model.dtype)
    y_noisy = forward_diffuse(utt.waveform.astype(model.dtype), sqrt_ab, epsilon)
    return epsilon_loss(model.eps_theta(y_noisy, frames, sqrt_ab), epsilon)


def evaluate(
    model: Phone2WaveModel,
    holdout: Sequence[Utterance],
    schedule: NoiseSchedule,
    steps_list: Sequence[int],
    mel_config: MelConfig,
    seed: int = 0,
    max_utterances: Optional[int] = None,
    mean_duration: Optional[float] = None,
    synthesize: bool = True,
    verbose=False,
) -> Dict[str, Any]:
    """Deterministic report; every random draw is seeded from (seed, utterance, purpose)"""
    utterances = list(holdout)[: max_utterances or len(holdout)]
    if mean_duration is None:
        all_durations = np.concatenate([u.durations for u in utterances]) if utterances else np.zeros(1)
        mean_duration = float(np.mean(all_durations))
    schedules = {s: inference_schedule(schedule, s) for s in steps_list}

    rows = []
    for i, utt in enumerate(utterances):
        reference = mel_target(utt.waveform, mel_config)
        noise = np.clip(np.random.default_rng([seed, i, 0]).standard_normal(utt.waveform.shape[0]), -1.0, 1.0)
        hiddens = model.encode(utt.tokens, train=False)
        pred, _ = model.predict_durations(hiddens)
        true = utt.durations.astype(np.float64)
        row: Dict[str, Any] = {
            "index": i,
            "num_tokens": int(utt.tokens.size),
            "noise_baseline": log_mel_distance(mel_target(noise, mel_config), reference),
            "eps_val_loss": eps_validation_loss(model, utt, schedule, np.random.default_rng([seed, i, 1])),
            "dur_mse": float(np.mean((pred - true) ** 2)),
            "dur_mse_mean_predictor": float(np.mean((mean_duration - true) ** 2)),
            "total_duration_error": float(abs(pred.sum() - true.sum())),
            "log_mel": {},
        }
        if synthesize:
            for s, sched in schedules.items():
                teacher = model.synthesize(utt.tokens, sched, np.random.default_rng([seed, i, 2, s]), utt.durations)
                predicted = model.synthesize(utt.tokens, sched, np.random.default_rng([seed, i, 3, s]))
                row["log_mel"][str(s)] = {
                    "teacher": log_mel_distance(mel_target(teacher.waveform, mel_config), reference),
                    "predicted": log_mel_distance(mel_target(predicted.waveform, mel_config), reference),
                }
        _check_row(row)
        if verbose:
            print(f"[DEBUG] Evaluated holdout utterance {i}: {row['log_mel']}")
        rows.append(row)

    summary: Dict[str, Any] = {
        key: _mean([r[key] for r in rows])
        for key in ("noise_baseline", "eps_val_loss", "dur_mse", "dur_mse_mean_predictor", "total_duration_error")
    }
    summary["log_mel"] = {
        str(s): {
            kind: _mean([r["log_mel"][str(s)][kind] for r in rows])
            for kind in ("teacher", "predicted")
        }
        for s in steps_list
        if synthesize
    }
    return {
        "seed": seed,
        "num_utterances": len(rows),
        "steps_list": [int(s) for s in steps_list],
        "schedule": schedule.to_config(),
        "summary": summary,
        "utterances": rows,
    }
