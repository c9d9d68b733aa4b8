"""Desk-scale runs on the default corpus; minutes to hours on a CPU."""

import csv

import numpy as np
import pytest

from phone2wave.ablation import AblationRunner, mean_token_duration
from phone2wave.config import RunConfig
from phone2wave.data import generate_corpus
from phone2wave.evaluate import evaluate
from phone2wave.model import Phone2WaveModel
from phone2wave.reports import ABLATION_COLUMNS
from phone2wave.schedule import schedule_from_config
from phone2wave.train import Trainer

pytestmark = pytest.mark.slow

# untrained ε = 0 scores E|ε| = sqrt(2/pi) ~ 0.798
EPS_CRITERION = 0.6


@pytest.fixture(scope="module")
def desk_corpus():
    config = RunConfig()
    utterances = generate_corpus(config.corpus, config.seed)
    split = config.corpus.train_count
    return config, utterances[:split], utterances[split:]


@pytest.fixture(scope="module")
def desk_report(desk_corpus):
    config, train, holdout = desk_corpus
    model = Phone2WaveModel(config.model, seed=config.seed)
    Trainer(config, model, train).run(config.train.steps)
    return evaluate(
        model,
        holdout,
        schedule_from_config(config.schedule),
        config.eval.steps_list,
        config.mel,
        seed=config.seed,
        max_utterances=config.eval.max_utterances,
        mean_duration=mean_token_duration(train),
    )


class TestDeskRun:
    def test_eps_validation_loss(self, desk_report):
        assert desk_report["summary"]["eps_val_loss"] < EPS_CRITERION

    def test_full_step_synthesis_halves_noise_distance(self, desk_report):
        summary = desk_report["summary"]
        full = str(desk_report["schedule"]["N"])
        assert summary["log_mel"][full]["teacher"] < 0.5 * summary["noise_baseline"]

    def test_durations_beat_mean_predictor(self, desk_report):
        summary = desk_report["summary"]
        assert summary["dur_mse"] < summary["dur_mse_mean_predictor"]

    def test_twentieth_of_the_steps_costs_little(self, desk_report):
        n = desk_report["schedule"]["N"]
        log_mel = desk_report["summary"]["log_mel"]
        full = log_mel[str(n)]["teacher"]
        reduced = log_mel[str(n // 20)]["teacher"]
        assert reduced <= 1.25 * full
        assert full <= reduced

    def test_report_is_finite(self, desk_report):
        summary = desk_report["summary"]
        values = [v for v in summary.values() if isinstance(v, float)]
        values += [v for kinds in summary["log_mel"].values() for v in kinds.values()]
        assert np.all(np.isfinite(values))


class TestWindowAblation:
    def test_both_windows_train_and_table_is_written(self, desk_corpus, tmp_path):
        config, train, holdout = desk_corpus
        assert config.eval.window_sizes == [16, 64]
        reports = AblationRunner(config, train, holdout).run("window")
        rows = reports.ablation_rows
        assert [r["variant"] for r in rows] == ["window=16", "window=64"]
        for row in rows:
            assert row["eps_val_loss"] < EPS_CRITERION, row["variant"]

        reports.save_ablation_csv(tmp_path / "ablation_window.csv")
        with open(tmp_path / "ablation_window.csv", newline="") as f:
            table = list(csv.DictReader(f))
        assert [r["variant"] for r in table] == ["window=16", "window=64"]
        assert list(table[0]) == ABLATION_COLUMNS
        text = reports.render_ablation_text("Ablation: window")
        assert "window=16" in text and "window=64" in text
