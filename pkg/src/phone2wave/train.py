#!/usr/bin/env python3
"""Optimizer, batch assembly, training loop, metrics stream and resumable state."""

import csv
import queue
import threading
import time
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Set

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .align import choose_window
from .config import RunConfig
from .data import Utterance, mel_target
from .exceptions import ContractError, IntegrityError, NonFiniteError
from .model import Batch, BatchItem, Phone2WaveModel
from .nn import load_checkpoint, save_checkpoint
from .schedule import NoiseSchedule, sample_noise_level, schedule_from_config

METRIC_FIELDS = ["step", "eps_loss", "dur_loss", "mel_loss", "lr", "wallclock"]
CHECKPOINT_PATTERN = "ckpt_{step:07d}.p2w"


def adam_update(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    m: Dict[str, np.ndarray],
    v: Dict[str, np.ndarray],
    step: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam, in place; ``step`` counts from 1"""
    if step < 1:
        raise ContractError(f"Adam step counts from 1, got {step}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"grad:{name}", step)
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for name, p in params.items():
        g = grads[name]
        m[name] *= beta1
        m[name] += (1.0 - beta1) * g
        v[name] *= beta2
        v[name] += (1.0 - beta2) * g * g
        m_hat = m[name] / c1
        v_hat = v[name] / c2
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)


class StepMetrics(BaseModel):
    step: int
    eps_loss: float
    dur_loss: float
    mel_loss: float
    total_loss: float
    lr: float
    grad_norm: float
    wallclock: float = 0.0

    def row(self) -> Dict[str, str]:
        return {
            "step": str(self.step),
            "eps_loss": repr(self.eps_loss),
            "dur_loss": repr(self.dur_loss),
            "mel_loss": repr(self.mel_loss),
            "lr": repr(self.lr),
            "wallclock": repr(self.wallclock),
        }


class TrainState(BaseModel):
    """Step counter, Adam moments and running loss statistics; parameters live in the model's store"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    step: int = 0
    seed: int = 0
    m: Dict[str, np.ndarray] = Field(default_factory=dict)
    v: Dict[str, np.ndarray] = Field(default_factory=dict)
    # exponential moving averages of each loss term
    running: Dict[str, float] = Field(default_factory=dict)

    @classmethod
    def fresh(cls, model: Phone2WaveModel, seed: int) -> "TrainState":
        return cls(
            seed=seed,
            m={n: np.zeros_like(p) for n, p in model.store.items()},
            v={n: np.zeros_like(p) for n, p in model.store.items()},
        )


class MetricsWriter:
    """Append-only CSV with a fixed header"""

    def __init__(self, path, verbose=False):
        self.path = Path(path)
        self.verbose = verbose

    def start(self, resume_step: Optional[int] = None) -> None:
        """Create the file, or keep rows before ``resume_step`` when resuming"""
        self.path.parent.mkdir(parents=True, exist_ok=True)
        rows: List[Dict[str, str]] = []
        if resume_step is not None and self.path.exists():
            with open(self.path, "r", newline="", encoding="utf-8") as f:
                rows = [r for r in csv.DictReader(f) if int(r["step"]) < resume_step]
            if self.verbose:
                print(f"[DEBUG] Keeping {len(rows)} metric rows before step {resume_step}")
        with open(self.path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)

    def append(self, metrics: StepMetrics) -> None:
        with open(self.path, "a", newline="", encoding="utf-8") as f:
            csv.DictWriter(f, fieldnames=METRIC_FIELDS, lineterminator="\n").writerow(metrics.row())

    def read(self) -> List[Dict[str, str]]:
        with open(self.path, "r", newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))


def checkpoint_path(directory, step: int) -> Path:
    return Path(directory) / CHECKPOINT_PATTERN.format(step=step)


def latest_checkpoint(directory) -> Optional[Path]:
    found = sorted(Path(directory).glob("ckpt_*.p2w"))
    return found[-1] if found else None


class Trainer:
    def __init__(
        self,
        config: RunConfig,
        model: Phone2WaveModel,
        train_set: Sequence[Utterance],
        state: Optional[TrainState] = None,
        verbose=False,
    ):
        if not train_set:
            raise ContractError("Training needs at least one utterance")
        self.config = config
        self.model = model
        self.train_set = list(train_set)
        self.verbose = verbose
        self.schedule: NoiseSchedule = schedule_from_config(config.schedule)
        self.state = state if state is not None else TrainState.fresh(model, config.seed)
        self._short_clips: Set[int] = set()
        self._mel_targets: Optional[List[np.ndarray]] = None
        if config.model.multitask:
            self._mel_targets = [mel_target(u.waveform, config.mel) for u in self.train_set]
            if self.verbose:
                print(f"[DEBUG] Precomputed {len(self._mel_targets)} mel targets")

    def learning_rate(self, step: int) -> float:
        tc = self.config.train
        if tc.warmup and step < tc.warmup_steps:
            return tc.learning_rate * (step + 1) / tc.warmup_steps
        return tc.learning_rate

    def make_batch(self, step: int, batch_size: Optional[int] = None) -> Batch:
        """Batch for ``step``; depends only on (seed, step) and the corpus"""
        rng = np.random.default_rng([self.config.seed, step])
        size = batch_size or self.config.train.batch_size
        mc = self.config.model
        items = []
        for index in rng.integers(0, len(self.train_set), size=size):
            utt = self.train_set[int(index)]
            short = utt.total_frames < mc.window_frames and int(index) not in self._short_clips
            if short:
                self._short_clips.add(int(index))
            window = choose_window(utt.total_frames, mc.window_frames, rng, mc.samples_per_frame, warn=short)
            sqrt_ab = sample_noise_level(self.schedule, rng)
            epsilon = rng.standard_normal(window.length_samples).astype(self.model.dtype)
            items.append(
                BatchItem(
                    tokens=utt.tokens,
                    durations=utt.durations,
                    waveform=utt.waveform,
                    window=window,
                    epsilon=epsilon,
                    sqrt_alpha_bar=sqrt_ab,
                    mel_target=None if self._mel_targets is None else self._mel_targets[int(index)],
                    seed=int(rng.integers(0, 2**31 - 1)),
                )
            )
        return Batch(items=items)

    def _accumulate(self, items: Sequence[BatchItem], total: int) -> Dict[str, float]:
        tc = self.config.train
        sums = {"eps_loss": 0.0, "dur_loss": 0.0, "mel_loss": 0.0}
        for item in items:
            losses = self.model.loss_and_grads(
                item, tc.lambda_dur, tc.lambda_mel, loss_scale=1.0 / total
            )
            for key in sums:
                value = getattr(losses, key)
                if not np.isfinite(value):
                    raise NonFiniteError(key, self.state.step)
                sums[key] += value / total
        return sums

    def _apply(self, losses: Dict[str, float], started: Optional[float]) -> StepMetrics:
        tc = self.config.train
        store = self.model.store
        bad = store.grads.first_non_finite()
        if bad is not None:
            raise NonFiniteError(f"grad:{bad}", self.state.step)
        grad_norm = store.grads.norm()
        if tc.grad_clip is not None and grad_norm > tc.grad_clip:
            store.grads.scale(tc.grad_clip / grad_norm)
        lr = self.learning_rate(self.state.step)
        adam_update(
            store.params, store.grads, self.state.m, self.state.v,
            self.state.step + 1, lr, tc.beta1, tc.beta2, tc.adam_eps,
        )
        total = losses["eps_loss"] + tc.lambda_dur * losses["dur_loss"] + tc.lambda_mel * losses["mel_loss"]
        wallclock = time.monotonic() - started if (tc.log_wallclock and started is not None) else 0.0
        metrics = StepMetrics(
            step=self.state.step, total_loss=total, lr=lr, grad_norm=grad_norm, wallclock=wallclock, **losses
        )
        for key, value in losses.items():
            prev = self.state.running.get(key, value)
            self.state.running[key] = 0.98 * prev + 0.02 * value
        self.state.step += 1
        return metrics

    def train_step(self, batch: Batch, started: Optional[float] = None) -> StepMetrics:
        self.model.store.zero_grad()
        losses = self._accumulate(batch.items, len(batch))
        return self._apply(losses, started)

    def train_step_sharded(self, shards: Sequence[Batch], started: Optional[float] = None) -> StepMetrics:
        """One optimizer step over several shards, each weighted by its size"""
        total = sum(len(s) for s in shards)
        if total == 0:
            raise ContractError("train_step_sharded needs at least one item")
        self.model.store.zero_grad()
        losses = {"eps_loss": 0.0, "dur_loss": 0.0, "mel_loss": 0.0}
        for shard in shards:
            for key, value in self._accumulate(shard.items, total).items():
                losses[key] += value
        return self._apply(losses, started)

    def batches(self, start: int, stop: int) -> Iterator[Batch]:
        """Batches for steps start..stop-1, optionally assembled by a producer thread"""
        depth = self.config.train.prefetch
        if depth == 0:
            for step in range(start, stop):
                yield self.make_batch(step)
            return

        handoff: "queue.Queue" = queue.Queue(maxsize=depth)
        done = threading.Event()

        def produce():
            try:
                for step in range(start, stop):
                    if done.is_set():
                        return
                    handoff.put(self.make_batch(step))
            except Exception as e:
                handoff.put(e)

        worker = threading.Thread(target=produce, name="batch-prefetch", daemon=True)
        worker.start()
        try:
            for _ in range(start, stop):
                batch = handoff.get()
                if isinstance(batch, Exception):
                    raise batch
                yield batch
        finally:
            done.set()
            while worker.is_alive():
                try:
                    handoff.get_nowait()
                except queue.Empty:
                    worker.join(timeout=0.05)

    def run(
        self,
        steps: int,
        metrics: Optional[MetricsWriter] = None,
        checkpoint_dir=None,
        on_step: Optional[Callable[[StepMetrics], None]] = None,
    ) -> List[StepMetrics]:
        """Train until ``steps`` total steps, checkpointing every ``checkpoint_every``"""
        started = time.monotonic()
        history = []
        every = self.config.train.checkpoint_every
        for batch in self.batches(self.state.step, steps):
            result = self.train_step(batch, started)
            history.append(result)
            if metrics is not None:
                metrics.append(result)
            if on_step is not None:
                on_step(result)
            if self.verbose and result.step % 50 == 0:
                print(
                    f"[DEBUG] step {result.step}: eps {result.eps_loss:.4f} "
                    f"dur {result.dur_loss:.4f} mel {result.mel_loss:.4f}"
                )
            if checkpoint_dir is not None and self.state.step % every == 0:
                self.save(checkpoint_path(checkpoint_dir, self.state.step))
        if checkpoint_dir is not None and not checkpoint_path(checkpoint_dir, self.state.step).exists():
            self.save(checkpoint_path(checkpoint_dir, self.state.step))
        return history

    def save(self, path) -> None:
        save_training_checkpoint(path, self.model, self.state, self.config, self.verbose)

    def resume(self, path) -> None:
        self.state = load_training_checkpoint(path, self.model, self.verbose)


def save_training_checkpoint(
    path, model: Phone2WaveModel, state: TrainState, config: RunConfig, verbose=False
) -> None:
    arrays = model.store.state_dict()
    for name in model.store:
        arrays[f"adam.m:{name}"] = state.m[name]
        arrays[f"adam.v:{name}"] = state.v[name]
    meta = {
        "step": state.step,
        "seed": state.seed,
        "running": state.running,
        "config": config.model_dump(by_alias=True),
    }
    save_checkpoint(path, arrays, meta, model.layer_specs(), verbose)


def load_model_checkpoint(path, model: Phone2WaveModel, verbose=False):
    """Load parameters and buffers only; returns the checkpoint for its metadata"""
    ckpt = load_checkpoint(path, verbose)
    state = {k: a for k, a in ckpt.arrays.items() if not k.startswith("adam.")}
    try:
        model.store.load_state_dict(state)
    except KeyError as e:
        raise IntegrityError(f"{path}: checkpoint does not fit this model: {e}")
    return ckpt


def load_training_checkpoint(path, model: Phone2WaveModel, verbose=False) -> TrainState:
    ckpt = load_model_checkpoint(path, model, verbose)
    dtype = model.dtype
    m = {n: ckpt.arrays[f"adam.m:{n}"].astype(dtype) for n in model.store}
    v = {n: ckpt.arrays[f"adam.v:{n}"].astype(dtype) for n in model.store}
    return TrainState(
        step=int(ckpt.meta["step"]),
        seed=int(ckpt.meta.get("seed", 0)),
        m=m,
        v=v,
        running=dict(ckpt.meta.get("running", {})),
    )
