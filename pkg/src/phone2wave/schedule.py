#!/usr/bin/env python3
"""Diffusion noise schedule and training-time noise-level sampling."""

from typing import Dict, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import ScheduleConfig
from .exceptions import ConfigurationError


class NoiseSchedule(BaseModel):
    """Immutable beta sequence with the derived alpha products.

    Arrays are indexed 0..N-1 for steps n = 1..N; ``alpha_bar(0)`` is the
    empty product 1.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    sqrt_alpha_bars: np.ndarray
    beta_start: float
    beta_end: float

    @property
    def N(self) -> int:
        return int(self.betas.shape[0])

    @classmethod
    def from_betas(cls, betas: Sequence[float], strict: bool = True) -> "NoiseSchedule":
        """Build from explicit betas.

        ``strict=False`` admits beta = 0 steps, used to analyse degenerate
        no-noise updates.
        """
        betas = np.asarray(betas, dtype=np.float64).reshape(-1)
        if betas.size == 0:
            raise ConfigurationError("A schedule needs at least one step", ["schedule.N"])
        lower_ok = np.all(betas > 0.0) if strict else np.all(betas >= 0.0)
        if not lower_ok or not np.all(betas < 1.0):
            raise ConfigurationError(
                "Every beta must lie in (0, 1)", ["schedule.beta_start", "schedule.beta_end"]
            )
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        for arr in (betas, alphas, alpha_bars):
            arr.setflags(write=False)
        sqrt_alpha_bars = np.sqrt(alpha_bars)
        sqrt_alpha_bars.setflags(write=False)
        return cls(
            betas=betas,
            alphas=alphas,
            alpha_bars=alpha_bars,
            sqrt_alpha_bars=sqrt_alpha_bars,
            beta_start=float(betas[0]),
            beta_end=float(betas[-1]),
        )

    def alpha_bar(self, n: int) -> float:
        """ᾱ_n for n in [0, N]"""
        if not 0 <= n <= self.N:
            raise IndexError(f"step {n} outside [0, {self.N}]")
        return 1.0 if n == 0 else float(self.alpha_bars[n - 1])

    def to_config(self) -> Dict[str, float]:
        return {"beta_start": self.beta_start, "beta_end": self.beta_end, "N": self.N}


def make_linear_schedule(beta_start: float, beta_end: float, N: int) -> NoiseSchedule:
    """N evenly spaced betas from beta_start to beta_end inclusive"""
    if N < 1:
        raise ConfigurationError("N must be at least 1", ["schedule.N"])
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ConfigurationError(
            f"Require 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})",
            ["schedule.beta_start", "schedule.beta_end"],
        )
    betas = np.linspace(beta_start, beta_end, N, dtype=np.float64)
    schedule = NoiseSchedule.from_betas(betas)
    # linspace with one point drops beta_end
    return schedule.model_copy(update={"beta_end": float(beta_end)}) if N == 1 else schedule


def schedule_from_config(config: ScheduleConfig) -> NoiseSchedule:
    return make_linear_schedule(config.beta_start, config.beta_end, config.num_steps)


def sample_noise_level(schedule: NoiseSchedule, rng: np.random.Generator) -> float:
    """Draw √ᾱ: uniform step n in 1..N, then ᾱ uniform on [ᾱ_n, ᾱ_{n-1}]"""
    n = int(rng.integers(1, schedule.N + 1))
    low = schedule.alpha_bar(n)
    high = schedule.alpha_bar(n - 1)
    return float(np.sqrt(rng.uniform(low, high)))


def _linear_alpha_bar_end(beta_start: float, beta_end: float, steps: int) -> float:
    return float(np.prod(1.0 - np.linspace(beta_start, beta_end, steps)))


def inference_schedule(
    schedule_train: NoiseSchedule,
    steps: int,
    tolerance: float = 1e-10,
    verbose: bool = False,
) -> NoiseSchedule:
    """Shorter linear schedule whose terminal ᾱ matches the training one.

    beta_start is kept from the training schedule and beta_end is found by
    bisection; when even a constant schedule at beta_start would overshoot,
    the constant schedule reaching the target is returned instead.
    """
    if not 1 <= steps <= schedule_train.N:
        raise ConfigurationError(
            f"Inference steps must lie in [1, {schedule_train.N}], got {steps}",
            ["steps"],
        )
    if steps == schedule_train.N:
        return schedule_train

    target = float(schedule_train.alpha_bars[-1])
    if steps == 1:
        return NoiseSchedule.from_betas([1.0 - target])

    constant_beta = 1.0 - target ** (1.0 / steps)
    beta_start = schedule_train.beta_start
    if constant_beta <= beta_start:
        if verbose:
            print(f"[DEBUG] Using constant beta {constant_beta:.6g} for {steps} steps")
        return NoiseSchedule.from_betas(np.full(steps, constant_beta))

    low, high = beta_start, 1.0 - 1e-12
    beta_end: Optional[float] = None
    for _ in range(200):
        mid = 0.5 * (low + high)
        value = _linear_alpha_bar_end(beta_start, mid, steps)
        if abs(value - target) <= tolerance * target:
            beta_end = mid
            break
        # terminal alpha-bar decreases as beta_end grows
        if value > target:
            low = mid
        else:
            high = mid
    if beta_end is None:
        beta_end = 0.5 * (low + high)

    if verbose:
        print(
            f"[DEBUG] Inference schedule: {steps} steps, beta {beta_start:.3g}..{beta_end:.6g}"
        )
    return make_linear_schedule(beta_start, beta_end, steps)
