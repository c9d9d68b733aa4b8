#!/usr/bin/env python3

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigurationError


class ScheduleConfig(BaseModel):
    """Linear beta schedule; serialized as {beta_start, beta_end, N}"""

    model_config = ConfigDict(populate_by_name=True)

    beta_start: float = Field(1e-4, gt=0.0, lt=1.0)
    beta_end: float = Field(5e-3, gt=0.0, lt=1.0)
    num_steps: int = Field(1000, ge=1, alias="N")

    @model_validator(mode="after")
    def _check_order(self):
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start must not exceed beta_end")
        return self


class CorpusConfig(BaseModel):
    """Synthetic harmonic-tone corpus"""

    sample_rate: int = Field(4000, gt=0)
    samples_per_frame: int = Field(40, gt=0)
    num_content_tokens: int = Field(12, ge=1)
    min_duration: int = Field(3, ge=1)
    max_duration: int = Field(10, ge=1)
    min_tokens: int = Field(4, ge=1)
    max_tokens: int = Field(12, ge=1)
    base_frequency: float = Field(220.0, gt=0.0)
    num_harmonics: int = Field(3, ge=1)
    amplitude: float = Field(0.5, gt=0.0, le=1.0)
    fade_fraction: float = Field(0.15, ge=0.0, le=0.5)
    silence_probability: float = Field(0.15, ge=0.0, lt=1.0)
    train_count: int = Field(500, ge=0)
    holdout_count: int = Field(50, ge=0)

    # id 0 is silence, id 1 is end-of-sequence, content tokens follow
    @property
    def silence_id(self) -> int:
        return 0

    @property
    def eos_id(self) -> int:
        return 1

    @property
    def vocab_size(self) -> int:
        return self.num_content_tokens + 2

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.min_duration > self.max_duration:
            raise ValueError("min_duration must not exceed max_duration")
        if self.min_tokens > self.max_tokens:
            raise ValueError("min_tokens must not exceed max_tokens")
        top = self.base_frequency * 2 ** ((self.num_content_tokens - 1) / 12)
        if top * self.num_harmonics >= self.sample_rate / 2:
            raise ValueError(
                "highest harmonic of the highest token must stay below Nyquist"
            )
        return self


class MelConfig(BaseModel):
    """Log-mel feature extraction"""

    sample_rate: int = Field(4000, gt=0)
    win_length: int = Field(160, gt=0)
    hop_length: int = Field(40, gt=0)
    n_fft: int = Field(256, gt=0)
    n_mels: int = Field(32, gt=0)
    fmin: float = Field(20.0, ge=0.0)
    fmax: float = Field(1900.0, gt=0.0)
    log_floor: float = Field(1e-5, gt=0.0)

    @model_validator(mode="after")
    def _check_geometry(self):
        if not (self.hop_length <= self.win_length <= self.n_fft):
            raise ValueError("mel config requires hop_length <= win_length <= n_fft")
        if not (self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError("mel cutoffs require fmin < fmax <= sample_rate / 2")
        return self


class ModelConfig(BaseModel):
    """Encoder, duration predictor, decoder and mel head sizes"""

    vocab_size: int = Field(14, ge=1)
    embedding_dim: int = Field(32, ge=1)
    encoder_channels: List[int] = Field(default_factory=lambda: [32, 32, 32])
    encoder_kernel: int = Field(5, ge=1)
    lstm_units: int = Field(64, ge=1)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    zoneout: float = Field(0.1, ge=0.0, lt=1.0)
    duration_channels: List[int] = Field(default_factory=lambda: [32, 32])
    duration_kernel: int = Field(3, ge=1)
    range_floor: float = Field(0.1, gt=0.0)
    frame_conv_channels: int = Field(64, ge=1)
    input_conv_channels: int = Field(16, ge=2)
    up_factors: List[int] = Field(default_factory=lambda: [5, 2, 2, 2])
    up_channels: List[int] = Field(default_factory=lambda: [64, 64, 32, 32])
    down_channels: List[int] = Field(default_factory=lambda: [32, 32, 64])
    dilations: List[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    samples_per_frame: int = Field(40, ge=1)
    window_frames: int = Field(64, ge=1)
    mask_enabled: bool = False
    mask_block_len: int = Field(32, ge=1)
    mask_count: int = Field(2, ge=0)
    multitask: bool = False
    mel_bins: int = Field(32, ge=1)
    leaky_slope: float = Field(0.2, ge=0.0)
    bn_momentum: float = Field(0.99, ge=0.0, lt=1.0)
    dtype: Literal["float32", "float64"] = "float32"

    @property
    def down_factors(self) -> List[int]:
        return list(reversed(self.up_factors[1:]))

    @property
    def level_channels(self) -> List[int]:
        """Channel count of each down-branch level, full rate first"""
        return [self.input_conv_channels] + list(self.down_channels)

    @model_validator(mode="after")
    def _check_ladder(self):
        if not self.up_factors:
            raise ValueError("up_factors must not be empty")
        if any(f < 1 for f in self.up_factors):
            raise ValueError("up_factors must be positive integers")
        if math.prod(self.up_factors) != self.samples_per_frame:
            raise ValueError(
                f"product of up_factors {self.up_factors} must equal "
                f"samples_per_frame {self.samples_per_frame}"
            )
        if len(self.up_channels) != len(self.up_factors):
            raise ValueError("up_channels needs one entry per up factor")
        if len(self.down_channels) != len(self.up_factors) - 1:
            raise ValueError("down_channels needs one entry per down factor")
        if len(self.dilations) != 4:
            raise ValueError("dilations needs exactly four entries")
        if len(self.encoder_channels) < 1 or len(self.duration_channels) < 1:
            raise ValueError("encoder and duration stacks need at least one layer")
        if any(c % 2 for c in self.level_channels):
            raise ValueError("down-branch channels must be even for noise embeddings")
        if any(c < 1 for c in self.encoder_channels + self.duration_channels):
            raise ValueError("channel counts must be positive")
        if any(c < 1 for c in self.up_channels + self.down_channels):
            raise ValueError("channel counts must be positive")
        return self

    @property
    def hidden_dim(self) -> int:
        return 2 * self.lstm_units

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        """Named network sizes: small/large encoder crossed with base/large decoder"""
        presets: Dict[str, Dict[str, Any]] = {
            "desk": {},
            "desk-large-encoder": {
                "embedding_dim": 64,
                "encoder_channels": [64, 64, 64],
                "lstm_units": 128,
            },
            "desk-large-decoder": {
                "frame_conv_channels": 96,
                "up_channels": [96, 96, 64, 48],
                "input_conv_channels": 24,
                "down_channels": [48, 48, 96],
            },
            "desk-large": {
                "embedding_dim": 64,
                "encoder_channels": [64, 64, 64],
                "lstm_units": 128,
                "frame_conv_channels": 96,
                "up_channels": [96, 96, 64, 48],
                "input_conv_channels": 24,
                "down_channels": [48, 48, 96],
            },
            "full-base": {
                "vocab_size": 14,
                "embedding_dim": 512,
                "encoder_channels": [512, 512, 512],
                "lstm_units": 256,
                "duration_channels": [256, 256],
                "frame_conv_channels": 768,
                "input_conv_channels": 32,
                "up_factors": [5, 5, 3, 2, 2],
                "up_channels": [512, 512, 256, 128, 128],
                "down_channels": [128, 128, 256, 512],
                "samples_per_frame": 300,
                "window_frames": 256,
                "mel_bins": 128,
            },
            "full-large": {
                "vocab_size": 14,
                "embedding_dim": 2048,
                "encoder_channels": [2048, 2048, 2048],
                "lstm_units": 1024,
                "duration_channels": [256, 256],
                "frame_conv_channels": 768,
                "input_conv_channels": 32,
                "up_factors": [5, 5, 3, 2, 2],
                "up_channels": [768, 768, 384, 256, 256],
                "down_channels": [128, 128, 256, 512],
                "samples_per_frame": 300,
                "window_frames": 256,
                "mel_bins": 128,
            },
        }
        if name not in presets:
            raise ConfigurationError(
                f"Unknown model preset '{name}'; choose from {sorted(presets)}",
                ["model.preset"],
            )
        values = dict(presets[name])
        values.update(overrides)
        return cls(**values)


class TrainConfig(BaseModel):
    """Optimizer and training-loop settings"""

    steps: int = Field(2000, ge=0)
    batch_size: int = Field(8, ge=1)
    learning_rate: float = Field(1e-3, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    grad_clip: Optional[float] = Field(1.0, gt=0.0)
    warmup: bool = False
    warmup_steps: int = Field(100, ge=1)
    lambda_dur: float = Field(0.1, ge=0.0)
    lambda_mel: float = Field(1.0, ge=0.0)
    checkpoint_every: int = Field(500, ge=1)
    prefetch: int = Field(0, ge=0)
    log_wallclock: bool = False


class EvalConfig(BaseModel):
    """Evaluation and ablation settings"""

    steps_list: List[int] = Field(default_factory=lambda: [50, 1000])
    max_utterances: int = Field(8, ge=1)
    window_sizes: List[int] = Field(default_factory=lambda: [16, 64])
    size_presets: List[str] = Field(
        default_factory=lambda: [
            "desk",
            "desk-large-decoder",
            "desk-large-encoder",
            "desk-large",
        ]
    )

    @model_validator(mode="after")
    def _check_steps(self):
        if not self.steps_list or any(s < 1 for s in self.steps_list):
            raise ValueError("steps_list entries must be positive")
        return self


class RunConfig(BaseModel):
    """Root configuration of a run; validated as a whole before any work starts"""

    seed: int = 0
    out_dir: str = "runs/default"
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    corpus: CorpusConfig = Field(default_factory=CorpusConfig)
    mel: MelConfig = Field(default_factory=MelConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def _check_cross_module(self):
        if self.model.samples_per_frame != self.corpus.samples_per_frame:
            raise ValueError("model.samples_per_frame must equal corpus.samples_per_frame")
        if self.model.vocab_size != self.corpus.vocab_size:
            raise ValueError(
                f"model.vocab_size must be corpus.num_content_tokens + 2 "
                f"({self.corpus.vocab_size})"
            )
        if self.mel.sample_rate != self.corpus.sample_rate:
            raise ValueError("mel.sample_rate must equal corpus.sample_rate")
        if self.model.multitask:
            if self.mel.hop_length != self.corpus.samples_per_frame:
                raise ValueError(
                    "multitask head needs mel.hop_length == samples_per_frame"
                )
            if self.model.mel_bins != self.mel.n_mels:
                raise ValueError("model.mel_bins must equal mel.n_mels")
        if max(self.eval.steps_list) > self.schedule.num_steps:
            raise ValueError("eval.steps_list entries must not exceed schedule N")
        return self


class Settings(BaseSettings):
    """Environment overrides (PHONE2WAVE_CONFIG, PHONE2WAVE_OUT_DIR, ...)"""

    model_config = SettingsConfigDict(
        env_prefix="phone2wave_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    config: Optional[str] = None
    out_dir: Optional[str] = None
    seed: Optional[int] = None
    verbose: bool = False


def _field_paths(error: ValidationError) -> List[str]:
    return [".".join(str(part) for part in err["loc"]) or "<root>" for err in error.errors()]


class ConfigManager:
    def __init__(
        self,
        verbose=False,
        config_file=None,
        out_dir=None,
        seed=None,
    ):
        self.settings = Settings()
        self.verbose = verbose or self.settings.verbose

        # CLI overrides win over environment
        self.config_file = config_file or self.settings.config
        self.out_dir = out_dir or self.settings.out_dir
        self.seed = seed if seed is not None else self.settings.seed

    def load(self, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Load the JSON run config, apply overrides and validate everything"""
        data: Dict[str, Any] = {}
        if self.config_file:
            path = Path(self.config_file)
            if self.verbose:
                print(f"[DEBUG] Loading run config from {path}")
            if not path.exists():
                raise ConfigurationError(f"Config file not found: {path}", ["--config"])
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as e:
                raise ConfigurationError(f"Invalid JSON in {path}: {e}", ["--config"])
        elif self.verbose:
            print("[DEBUG] No config file given, using desk defaults")

        if self.seed is not None:
            data["seed"] = self.seed
        if self.out_dir:
            data["out_dir"] = str(self.out_dir)
        for dotted, value in (overrides or {}).items():
            node = data
            *parents, leaf = dotted.split(".")
            for part in parents:
                node = node.setdefault(part, {})
            node[leaf] = value
            if self.verbose:
                print(f"[DEBUG] Override {dotted} = {value}")

        return self.validate(data)

    def validate(self, data: Dict[str, Any]) -> RunConfig:
        try:
            config = RunConfig.model_validate(data)
        except ValidationError as e:
            paths = _field_paths(e)
            details = "; ".join(
                f"{p}: {err['msg']}" for p, err in zip(paths, e.errors())
            )
            raise ConfigurationError(f"Invalid run config: {details}", paths)
        if self.verbose:
            print(
                f"[DEBUG] Config valid: seed={config.seed}, out_dir={config.out_dir}, "
                f"N={config.schedule.num_steps}, up_factors={config.model.up_factors}"
            )
        return config

    def save(self, config: RunConfig, filename: str) -> None:
        """Write the effective run config as structured text"""
        if self.verbose:
            print(f"[DEBUG] Saving run config to {filename}")
        Path(filename).parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w", encoding="utf-8") as f:
            json.dump(config.model_dump(by_alias=True), f, indent=2, sort_keys=True)
            f.write("\n")

    def load_json(self, filename: str) -> Optional[Dict[str, Any]]:
        """Load a JSON sidecar (manifest, report); None when absent"""
        path = Path(filename)
        if not path.exists():
            if self.verbose:
                print(f"[DEBUG] File {filename} does not exist")
            return None
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
