#!/usr/bin/env python3

from typing import Callable, List, Literal, Optional, Sequence, Tuple

from .config import ModelConfig, RunConfig
from .data import Utterance
from .evaluate import evaluate
from .exceptions import ConfigurationError
from .model import Phone2WaveModel
from .reports import ReportManager
from .schedule import schedule_from_config
from .train import Trainer

AblationAxis = Literal["window", "size", "mask", "multitask", "steps"]
AXES = ("window", "size", "mask", "multitask", "steps")


class AblationRunner:
    """Trains and evaluates one variant per setting of a single knob"""

    def __init__(
        self,
        config: RunConfig,
        train_set: Sequence[Utterance],
        holdout: Sequence[Utterance],
        verbose=False,
        on_variant: Optional[Callable[[str], None]] = None,
    ):
        self.config = config
        self.train_set = list(train_set)
        self.holdout = list(holdout)
        self.verbose = verbose
        self.on_variant = on_variant
        self.report_manager = ReportManager(verbose=verbose)

    def variants(self, axis: str) -> List[Tuple[str, RunConfig]]:
        base = self.config
        if axis == "window":
            return [
                (f"window={w}", base.model_copy(update={"model": base.model.model_copy(update={"window_frames": w})}))
                for w in base.eval.window_sizes
            ]
        if axis == "size":
            out = []
            for name in base.eval.size_presets:
                model = ModelConfig.preset(
                    name,
                    vocab_size=base.model.vocab_size,
                    samples_per_frame=base.model.samples_per_frame,
                    up_factors=base.model.up_factors,
                    window_frames=base.model.window_frames,
                    dtype=base.model.dtype,
                )
                out.append((f"size={name}", base.model_copy(update={"model": model})))
            return out
        if axis == "mask":
            return [
                (f"mask={flag}", base.model_copy(update={"model": base.model.model_copy(update={"mask_enabled": flag})}))
                for flag in (False, True)
            ]
        if axis == "multitask":
            out = []
            for flag in (False, True):
                model = base.model.model_copy(update={"multitask": flag, "mel_bins": base.mel.n_mels})
                out.append((f"multitask={flag}", base.model_copy(update={"model": model})))
            return out
        raise ConfigurationError(f"Unknown ablation axis '{axis}'; choose from {list(AXES)}", ["axis"])

    def _train(self, config: RunConfig) -> Phone2WaveModel:
        model = Phone2WaveModel(config.model, seed=config.seed)
        Trainer(config, model, self.train_set, verbose=self.verbose).run(config.train.steps)
        return model

    def _evaluate(self, model: Phone2WaveModel, config: RunConfig, steps_list: Sequence[int]):
        return evaluate(
            model,
            self.holdout,
            schedule_from_config(config.schedule),
            steps_list,
            config.mel,
            seed=config.seed,
            max_utterances=config.eval.max_utterances,
            mean_duration=mean_token_duration(self.train_set),
            verbose=self.verbose,
        )

    def run(self, axis: str, model: Optional[Phone2WaveModel] = None) -> ReportManager:
        """Fills the report manager's ablation rows; the steps axis reuses ``model`` without retraining"""
        if axis == "steps":
            if model is None:
                model = self._train(self.config)
            for steps in self.config.eval.steps_list:
                if self.on_variant:
                    self.on_variant(f"steps={steps}")
                report = self._evaluate(model, self.config, [steps])
                self.report_manager.add_ablation_row(f"steps={steps}", model.parameter_count(), report, steps)
            return self.report_manager

        full = max(self.config.eval.steps_list)
        for name, variant in self.variants(axis):
            if self.on_variant:
                self.on_variant(name)
            trained = self._train(variant)
            report = self._evaluate(trained, variant, [full])
            self.report_manager.add_ablation_row(name, trained.parameter_count(), report, full)
        return self.report_manager


def mean_token_duration(utterances: Sequence[Utterance]) -> float:
    total = sum(float(u.durations.sum()) for u in utterances)
    count = sum(int(u.durations.size) for u in utterances)
    return total / max(count, 1)
