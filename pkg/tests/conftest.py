import numpy as np
import pytest

from phone2wave.config import CorpusConfig, MelConfig, ModelConfig, RunConfig, ScheduleConfig, TrainConfig, EvalConfig


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), zero when both vanish"""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(loss_fn, array: np.ndarray, h: float = 1e-6, indices=None) -> np.ndarray:
    """Central differences of ``loss_fn()`` with respect to ``array``, perturbed in place"""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        plus = loss_fn()
        flat[i] = old - h
        minus = loss_fn()
        flat[i] = old
        gflat[i] = (plus - minus) / (2.0 * h)
    return grad


def randomize_output_convs(store, rng, std: float = 0.3) -> None:
    """Fill the zero-initialised output convs with noise so every gradient path is live"""
    for name, p in store.items():
        if ".output_conv." in name:
            p[...] = std * rng.standard_normal(p.shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    # rate 12 = 3 * 2 * 2, 8 channels everywhere
    return ModelConfig(
        vocab_size=6,
        embedding_dim=8,
        encoder_channels=[8],
        encoder_kernel=3,
        lstm_units=4,
        dropout=0.0,
        zoneout=0.0,
        duration_channels=[8],
        duration_kernel=3,
        frame_conv_channels=8,
        input_conv_channels=8,
        up_factors=[3, 2, 2],
        up_channels=[8, 8, 8],
        down_channels=[8, 8],
        dilations=[1, 2, 1, 2],
        samples_per_frame=12,
        window_frames=4,
        mel_bins=8,
        dtype="float64",
    )


@pytest.fixture
def tiny_corpus_config():
    return CorpusConfig(
        sample_rate=600,
        samples_per_frame=12,
        num_content_tokens=4,
        min_duration=2,
        max_duration=4,
        min_tokens=3,
        max_tokens=5,
        base_frequency=60.0,
        num_harmonics=2,
        train_count=6,
        holdout_count=2,
    )


@pytest.fixture
def tiny_run_config(tiny_model_config, tiny_corpus_config, tmp_path):
    return RunConfig(
        seed=7,
        out_dir=str(tmp_path / "run"),
        schedule=ScheduleConfig(beta_start=1e-3, beta_end=0.2, N=20),
        corpus=tiny_corpus_config,
        mel=MelConfig(sample_rate=600, win_length=24, hop_length=12, n_fft=32, n_mels=8, fmin=10.0, fmax=290.0),
        model=tiny_model_config,
        train=TrainConfig(steps=3, batch_size=2, learning_rate=1e-3, checkpoint_every=2),
        eval=EvalConfig(steps_list=[2, 20], max_utterances=2, window_sizes=[2, 4], size_presets=["desk"]),
    )
