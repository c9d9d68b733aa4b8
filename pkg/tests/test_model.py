import numpy as np
import pytest

from phone2wave.align import WindowSpec
from phone2wave.config import ModelConfig
from phone2wave.exceptions import ContractError, NonFiniteError, ResolutionError, ShapeError, UnknownTokenError
from phone2wave.model import BatchItem, Phone2WaveModel, block_mask, mask_blocks, mel_loss, mel_loss_grad
from phone2wave.nn.functional import softplus
from phone2wave.schedule import make_linear_schedule

from conftest import numeric_grad, randomize_output_convs, relative_error

TOKENS = np.array([2, 3, 0, 4, 1])
DURATIONS = np.array([2, 3, 1, 2, 1])


def make_item(config: ModelConfig, seed: int = 5, with_mel: bool = False) -> BatchItem:
    rng = np.random.default_rng(seed)
    frames = int(DURATIONS.sum())
    window = WindowSpec(start_frame=3, length_frames=4, samples_per_frame=config.samples_per_frame)
    return BatchItem(
        tokens=TOKENS,
        durations=DURATIONS,
        waveform=0.3 * rng.standard_normal(frames * config.samples_per_frame),
        window=window,
        epsilon=rng.standard_normal(window.length_samples),
        sqrt_alpha_bar=0.7,
        mel_target=rng.standard_normal((frames, config.mel_bins)) if with_mel else None,
        seed=seed,
    )


def sampled_gradient_check(model: Phone2WaveModel, item: BatchItem, lambda_dur: float, lambda_mel: float):
    rng = np.random.default_rng(0)
    randomize_output_convs(model.store, rng)

    def total_loss():
        losses = model.loss_and_grads(item, lambda_dur, lambda_mel)
        return losses.eps_loss + lambda_dur * losses.dur_loss + lambda_mel * losses.mel_loss

    model.store.zero_grad()
    model.loss_and_grads(item, lambda_dur, lambda_mel)
    analytic = {n: g.copy() for n, g in model.store.grads.items()}
    checked = 0
    for name, p in model.store.items():
        picks = rng.choice(p.size, size=min(2, p.size), replace=False)
        numeric = numeric_grad(total_loss, p, indices=picks)
        a = analytic[name].reshape(-1)[picks]
        n = numeric.reshape(-1)[picks]
        if max(np.abs(a).max(), np.abs(n).max()) < 1e-9:
            continue
        assert relative_error(a, n) < 1e-4, name
        checked += 1
    assert checked > len(model.store) // 2


class TestParameterCounts:
    def test_hand_computed(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        # embedding 48, conv 200, batch norm 16, two LSTM directions of 208
        assert model.parameter_count("encoder.") == 680
        # conv 200, projection 18
        assert model.parameter_count("duration.") == 218
        # frame conv 200, three UBlocks of 872, output conv 25, input conv 48,
        # two DBlocks of 872, three FiLMs of 600
        assert model.parameter_count("decoder.") == 6433
        assert model.parameter_count() == 680 + 218 + 6433

    def test_mel_head_only_with_multitask(self, tiny_model_config):
        plain = Phone2WaveModel(tiny_model_config)
        multi = Phone2WaveModel(tiny_model_config.model_copy(update={"multitask": True}))
        assert plain.parameter_count("mel_head.") == 0
        # factor-1 UBlock (8 -> 8) is 872, projection 8 -> 8 is 72
        assert multi.parameter_count("mel_head.") == 944

    def test_same_seed_same_weights(self, tiny_model_config):
        a = Phone2WaveModel(tiny_model_config, seed=3)
        b = Phone2WaveModel(tiny_model_config, seed=3)
        for name, p in a.store.items():
            assert p.tobytes() == b.store[name].tobytes()

    def test_layer_specs_cover_decoder(self, tiny_model_config):
        names = [s.name for s in Phone2WaveModel(tiny_model_config).layer_specs()]
        assert len(names) == len(set(names))
        assert "decoder.ublock0" in names and "decoder.dblock1" in names and "decoder.film2" in names


class TestForward:
    def test_encode_and_durations(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        hiddens = model.encode(TOKENS)
        assert hiddens.shape == (5, tiny_model_config.hidden_dim)
        durations, ranges = model.predict_durations(hiddens)
        assert np.all(durations > 0)
        assert np.all(ranges >= tiny_model_config.range_floor)

    def test_unknown_token(self, tiny_model_config):
        with pytest.raises(UnknownTokenError):
            Phone2WaveModel(tiny_model_config).encode(np.array([2, 9]))

    def test_eps_theta_shape_and_resolution(self, tiny_model_config, rng):
        model = Phone2WaveModel(tiny_model_config)
        frames = rng.standard_normal((4, tiny_model_config.hidden_dim))
        assert model.eps_theta(rng.standard_normal(48), frames, 0.5).shape == (48,)
        with pytest.raises(ResolutionError):
            model.eps_theta(rng.standard_normal(47), frames, 0.5)

    def test_mel_head_requires_multitask(self, tiny_model_config, rng):
        with pytest.raises(ContractError):
            Phone2WaveModel(tiny_model_config).predict_mel(rng.standard_normal((3, 8)))

    def test_waveform_must_cover_durations(self, tiny_model_config):
        item = make_item(tiny_model_config)
        item = item.model_copy(update={"waveform": item.waveform[:-1]})
        with pytest.raises(ShapeError):
            Phone2WaveModel(tiny_model_config).loss_and_grads(item)

    def test_zero_duration_weights_give_softplus_of_bias(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        for name in model.store.names("duration."):
            model.store[name][:] = 0.0
        model.store["duration.projection.bias"][:] = [0.7, -1.2]
        hiddens = model.encode(TOKENS)
        durations, ranges = model.predict_durations(hiddens)
        np.testing.assert_allclose(durations, np.full(TOKENS.size, softplus(np.array(0.7))))
        np.testing.assert_allclose(
            ranges, np.full(TOKENS.size, softplus(np.array(-1.2)) + tiny_model_config.range_floor)
        )

    def test_fractional_durations_round_half_up(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        durations = np.array([2.0, 1.5, 1.0, 2.0, 1.0])
        item = make_item(tiny_model_config).model_copy(
            update={"durations": durations, "waveform": np.zeros(8 * 12)}
        )
        # 7.5 -> 8 and 6.5 -> 7; round-half-even would give 6 for the second
        model.loss_and_grads(item)
        short = item.model_copy(
            update={"durations": durations - np.array([1.0, 0, 0, 0, 0]), "waveform": np.zeros(7 * 12)}
        )
        model.loss_and_grads(short)
        with pytest.raises(ShapeError):
            model.loss_and_grads(short.model_copy(update={"waveform": np.zeros(6 * 12)}))


class TestGradients:
    def test_end_to_end(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config, seed=1)
        sampled_gradient_check(model, make_item(tiny_model_config), 0.5, 0.0)

    def test_end_to_end_with_mask(self, tiny_model_config):
        config = tiny_model_config.model_copy(update={"mask_enabled": True, "mask_block_len": 2, "mask_count": 1})
        model = Phone2WaveModel(config, seed=2)
        sampled_gradient_check(model, make_item(config), 0.1, 0.0)

    def test_end_to_end_with_mel_head(self, tiny_model_config):
        config = tiny_model_config.model_copy(update={"multitask": True})
        model = Phone2WaveModel(config, seed=4)
        sampled_gradient_check(model, make_item(config, with_mel=True), 0.1, 0.5)

    def test_loss_scale_is_linear(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        randomize_output_convs(model.store, np.random.default_rng(3))
        item = make_item(tiny_model_config)
        model.store.zero_grad()
        model.loss_and_grads(item, loss_scale=1.0)
        full = {n: g.copy() for n, g in model.store.grads.items()}
        model.store.zero_grad()
        model.loss_and_grads(item, loss_scale=0.25)
        for name, g in model.store.grads.items():
            np.testing.assert_allclose(g, 0.25 * full[name], rtol=1e-12, atol=1e-15)

    def test_item_seed_fixes_dropout_and_zoneout(self, tiny_model_config):
        config = tiny_model_config.model_copy(update={"dropout": 0.3, "zoneout": 0.2})
        model = Phone2WaveModel(config)
        randomize_output_convs(model.store, np.random.default_rng(3))
        item = make_item(config)
        first = model.loss_and_grads(item)
        second = model.loss_and_grads(item)
        assert first == second
        other = model.loss_and_grads(item.model_copy(update={"seed": 99}))
        assert other.eps_loss != first.eps_loss


class TestMasking:
    def test_block_mask_counts(self):
        keep = block_mask(20, np.random.default_rng(0), 4, 1)
        assert keep.sum() == 16
        starts = np.flatnonzero(~keep)
        assert np.all(np.diff(starts) == 1)

    def test_block_longer_than_utterance(self):
        keep = block_mask(3, np.random.default_rng(0), 32, 2)
        assert not keep.any()

    def test_no_blocks(self):
        assert block_mask(5, np.random.default_rng(0), 2, 0).all()

    def test_mask_zeroes_rows(self, rng):
        frames = rng.standard_normal((30, 3)) + 5.0
        masked = mask_blocks(frames, np.random.default_rng(1), 4, 2)
        zero_rows = np.all(masked == 0.0, axis=1)
        assert 4 <= zero_rows.sum() <= 8
        np.testing.assert_allclose(masked[~zero_rows], frames[~zero_rows])

    def test_marginal_masked_frequency(self):
        total, block_len, count = 10, 3, 2
        starts = total - block_len + 1
        covered = np.array([min(t, starts - 1) - max(0, t - block_len + 1) + 1 for t in range(total)])
        expected = 1.0 - (1.0 - covered / starts) ** count
        rng = np.random.default_rng(21)
        draws = 10_000
        masked = np.zeros(total)
        for _ in range(draws):
            masked += mask_blocks(np.ones((total, 1)), rng, block_len, count)[:, 0] == 0.0
        np.testing.assert_allclose(masked / draws, expected, atol=0.02)


class TestMelLoss:
    def test_value_and_gradient(self, rng):
        pred, target = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        assert mel_loss(pred, target) == pytest.approx(np.mean((pred - target) ** 2))
        assert relative_error(mel_loss_grad(pred, target), numeric_grad(lambda: mel_loss(pred, target), pred)) < 1e-6
        with pytest.raises(ShapeError):
            mel_loss(pred, target[:2])


class TestSynthesize:
    def test_teacher_durations_fix_length(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        schedule = make_linear_schedule(1e-3, 0.2, 3)
        result = model.synthesize(TOKENS, schedule, np.random.default_rng(0), durations=DURATIONS)
        assert result.total_frames == 9
        assert result.waveform.shape == (9 * 12,)
        np.testing.assert_allclose(result.durations, DURATIONS)

    def test_predicted_durations(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        schedule = make_linear_schedule(1e-3, 0.2, 2)
        result = model.synthesize(TOKENS, schedule, np.random.default_rng(0))
        assert result.waveform.shape == (result.total_frames * 12,)
        assert result.total_frames == max(1, int(np.floor(result.durations.sum() + 0.5)))

    def test_seeded_and_single_precision(self, tiny_model_config):
        config = tiny_model_config.model_copy(update={"dtype": "float32"})
        model = Phone2WaveModel(config)
        schedule = make_linear_schedule(1e-3, 0.2, 2)
        a = model.synthesize(TOKENS, schedule, np.random.default_rng(4), durations=DURATIONS)
        b = model.synthesize(TOKENS, schedule, np.random.default_rng(4), durations=DURATIONS)
        assert a.waveform.dtype == np.float32
        assert a.waveform.tobytes() == b.waveform.tobytes()


class TestNonFinite:
    def test_nan_encoder_names_hiddens(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        model.store["encoder.embedding.table"][:] = np.nan
        with pytest.raises(NonFiniteError) as err:
            model.loss_and_grads(make_item(tiny_model_config))
        assert err.value.tensor_name == "hiddens"

    def test_nan_decoder_names_eps_pred(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        model.store["decoder.output_conv.bias"][:] = np.nan
        with pytest.raises(NonFiniteError) as err:
            model.loss_and_grads(make_item(tiny_model_config))
        assert err.value.tensor_name == "eps_pred"

    def test_nan_synthesis_names_waveform(self, tiny_model_config):
        model = Phone2WaveModel(tiny_model_config)
        model.store["decoder.output_conv.bias"][:] = np.inf
        with pytest.raises(NonFiniteError) as err:
            model.synthesize(TOKENS, make_linear_schedule(1e-3, 0.2, 2), np.random.default_rng(0), DURATIONS)
        assert err.value.tensor_name == "waveform"
