#!/usr/bin/env python3
"""Forward noising, the ε-prediction objective and the reverse samplers."""

from typing import Callable, Iterator, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from .exceptions import ContractError, ShapeError
from .schedule import NoiseSchedule

EpsPredictor = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class DiffusionState(BaseModel):
    """Current iterate y_n of the reverse process"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    y: np.ndarray
    step: int
    schedule: NoiseSchedule


def _same_length(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def forward_diffuse(y0: np.ndarray, sqrt_alpha_bar: float, epsilon: np.ndarray) -> np.ndarray:
    """√ᾱ·y0 + √(1−ᾱ)·ε"""
    y0 = np.asarray(y0)
    epsilon = np.asarray(epsilon)
    _same_length(y0, epsilon, "forward_diffuse")
    if not 0.0 <= sqrt_alpha_bar <= 1.0:
        raise ContractError(f"sqrt_alpha_bar must lie in [0, 1], got {sqrt_alpha_bar}")
    noise_scale = np.sqrt(1.0 - sqrt_alpha_bar * sqrt_alpha_bar)
    return sqrt_alpha_bar * y0 + noise_scale * epsilon


def epsilon_loss(eps_pred: np.ndarray, eps_true: np.ndarray) -> float:
    """Mean absolute error"""
    eps_pred = np.asarray(eps_pred)
    eps_true = np.asarray(eps_true)
    _same_length(eps_pred, eps_true, "epsilon_loss")
    if eps_pred.size == 0:
        raise ContractError("epsilon_loss of empty inputs")
    return float(np.mean(np.abs(eps_pred - eps_true)))


def epsilon_loss_grad(eps_pred: np.ndarray, eps_true: np.ndarray) -> np.ndarray:
    """d epsilon_loss / d eps_pred (subgradient 0 at ties)"""
    _same_length(eps_pred, eps_true, "epsilon_loss_grad")
    return np.sign(eps_pred - eps_true) / eps_pred.size


def posterior_sigma(schedule: NoiseSchedule, n: int) -> float:
    """σ_n = √(((1−ᾱ_{n−1})/(1−ᾱ_n))·β_n), with σ_1 = 0"""
    beta = float(schedule.betas[n - 1])
    if n == 1 or beta == 0.0:
        return 0.0
    ratio = (1.0 - schedule.alpha_bar(n - 1)) / (1.0 - schedule.alpha_bar(n))
    return float(np.sqrt(ratio * beta))


def ancestral_step(
    y_n: np.ndarray,
    eps_pred: np.ndarray,
    n: int,
    schedule: NoiseSchedule,
    z: np.ndarray,
) -> np.ndarray:
    """One reverse update y_n -> y_{n-1}"""
    if not 1 <= n <= schedule.N:
        raise ContractError(f"step {n} outside [1, {schedule.N}]")
    _same_length(y_n, eps_pred, "ancestral_step")
    _same_length(y_n, z, "ancestral_step noise")
    beta = float(schedule.betas[n - 1])
    alpha = float(schedule.alphas[n - 1])
    eps_coef = 0.0 if beta == 0.0 else beta / np.sqrt(1.0 - schedule.alpha_bar(n))
    mean = (y_n - eps_coef * eps_pred) / np.sqrt(alpha)
    sigma = posterior_sigma(schedule, n)
    if sigma == 0.0:
        return mean
    return mean + sigma * z


def langevin_step(y: np.ndarray, score: np.ndarray, eta: float, z: np.ndarray) -> np.ndarray:
    """y + (η/2)·score + √η·z"""
    if not eta > 0.0:
        raise ContractError(f"Langevin step size must be positive, got {eta}")
    _same_length(np.asarray(y), np.asarray(score), "langevin_step")
    _same_length(np.asarray(y), np.asarray(z), "langevin_step noise")
    return y + 0.5 * eta * score + np.sqrt(eta) * z


def langevin_chain(
    score_fn: Callable[[np.ndarray], np.ndarray],
    y_init: np.ndarray,
    eta: float,
    num_steps: int,
    rng: np.random.Generator,
    burn_in: int = 0,
) -> np.ndarray:
    """Run Langevin dynamics and return the iterates after burn-in"""
    y = np.asarray(y_init, dtype=np.float64)
    trace = np.empty((max(num_steps - burn_in, 0),) + y.shape)
    for i in range(num_steps):
        y = langevin_step(y, score_fn(y), eta, rng.standard_normal(y.shape))
        if i >= burn_in:
            trace[i - burn_in] = y
    return trace


def reverse_process(
    eps_fn: EpsPredictor,
    x: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    samples_per_frame: int = 1,
    dtype=np.float64,
    y_init: Optional[np.ndarray] = None,
) -> Iterator[DiffusionState]:
    """Yield the state after every ancestral step, from y_N down to y_0"""
    length = int(np.shape(x)[0]) * samples_per_frame
    if y_init is None:
        y = rng.standard_normal(length).astype(dtype)
    else:
        y = np.asarray(y_init, dtype=dtype)
        if y.shape != (length,):
            raise ShapeError(f"y_init has shape {y.shape}, expected ({length},)")
    yield DiffusionState(y=y, step=schedule.N, schedule=schedule)
    for n in range(schedule.N, 0, -1):
        # z is drawn before the predictor is called
        z = rng.standard_normal(length).astype(dtype) if n > 1 else np.zeros(length, dtype)
        eps = np.asarray(eps_fn(y, x, float(schedule.sqrt_alpha_bars[n - 1])), dtype=dtype)
        y = ancestral_step(y, eps, n, schedule, z).astype(dtype, copy=False)
        yield DiffusionState(y=y, step=n - 1, schedule=schedule)


def sample(
    eps_fn: EpsPredictor,
    x: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    samples_per_frame: int = 1,
    dtype=np.float64,
) -> np.ndarray:
    """Ancestral sampling from y_N ~ N(0, I); output length = frames × samples_per_frame"""
    state = None
    for state in reverse_process(eps_fn, x, schedule, rng, samples_per_frame, dtype):
        pass
    return state.y
