import numpy as np
import pytest

from phone2wave.config import ScheduleConfig
from phone2wave.exceptions import ConfigurationError
from phone2wave.schedule import (
    NoiseSchedule,
    inference_schedule,
    make_linear_schedule,
    sample_noise_level,
    schedule_from_config,
)


class TestLinearSchedule:
    def test_endpoints_and_length(self):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        assert s.N == 1000
        assert s.betas[0] == pytest.approx(1e-4)
        assert s.betas[-1] == pytest.approx(5e-3)

    def test_alpha_bar_is_brute_force_product(self):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        for n in (1, 2, 17, 500, 1000):
            brute = 1.0
            for beta in s.betas[:n]:
                brute *= 1.0 - beta
            assert abs(s.alpha_bar(n) - brute) < 1e-12

    def test_alpha_bar_strictly_decreasing(self):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        values = [s.alpha_bar(n) for n in range(s.N + 1)]
        assert values[0] == 1.0
        assert np.all(np.diff(values) < 0)

    def test_single_step_keeps_beta_end(self):
        s = make_linear_schedule(0.3, 0.3, 1)
        assert s.N == 1
        assert s.alpha_bar(1) == pytest.approx(0.7)
        assert s.to_config() == {"beta_start": 0.3, "beta_end": 0.3, "N": 1}

    @pytest.mark.parametrize(
        "start,end,n",
        [(0.0, 0.1, 10), (0.2, 0.1, 10), (0.1, 1.0, 10), (1e-4, 5e-3, 0)],
    )
    def test_rejects_invalid(self, start, end, n):
        with pytest.raises(ConfigurationError):
            make_linear_schedule(start, end, n)

    def test_from_betas_strict(self):
        with pytest.raises(ConfigurationError):
            NoiseSchedule.from_betas([0.1, 0.0])
        s = NoiseSchedule.from_betas([0.1, 0.0], strict=False)
        assert s.alpha_bar(2) == pytest.approx(0.9)

    def test_arrays_are_read_only(self):
        s = make_linear_schedule(1e-4, 5e-3, 10)
        with pytest.raises(ValueError):
            s.betas[0] = 0.5

    def test_alpha_bar_index_range(self):
        s = make_linear_schedule(1e-4, 5e-3, 10)
        with pytest.raises(IndexError):
            s.alpha_bar(11)

    def test_from_config_uses_alias(self):
        cfg = ScheduleConfig.model_validate({"beta_start": 1e-4, "beta_end": 2e-2, "N": 50})
        assert schedule_from_config(cfg).N == 50
        assert cfg.model_dump(by_alias=True)["N"] == 50


class TestNoiseLevel:
    def test_within_bounds(self):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        rng = np.random.default_rng(0)
        draws = np.array([sample_noise_level(s, rng) for _ in range(5000)])
        assert draws.max() <= 1.0
        assert draws.min() >= np.sqrt(s.alpha_bar(s.N))

    def test_single_step_interval(self):
        s = NoiseSchedule.from_betas([0.36])
        rng = np.random.default_rng(3)
        draws = np.array([sample_noise_level(s, rng) for _ in range(2000)])
        assert np.all((draws >= 0.8) & (draws <= 1.0))

    def test_interval_choice_is_uniform(self):
        # constant beta: the three intervals are [0.9, 1], [0.81, 0.9], [0.729, 0.81]
        s = NoiseSchedule.from_betas([0.1, 0.1, 0.1])
        rng = np.random.default_rng(11)
        alpha_bars = np.array([sample_noise_level(s, rng) for _ in range(6000)]) ** 2
        edges = [s.alpha_bar(3), s.alpha_bar(2), s.alpha_bar(1), 1.0]
        np.testing.assert_allclose(edges, [0.729, 0.81, 0.9, 1.0])
        counts, _ = np.histogram(alpha_bars, bins=edges)
        assert counts.sum() == 6000
        expected = 6000 / 3
        chi_square = float(np.sum((counts - expected) ** 2 / expected))
        # 99.9% quantile of chi-square with two degrees of freedom
        assert chi_square < 13.82

    def test_uniform_within_interval(self):
        s = NoiseSchedule.from_betas([0.36])
        rng = np.random.default_rng(12)
        alpha_bars = np.array([sample_noise_level(s, rng) for _ in range(4000)]) ** 2
        assert np.mean(alpha_bars) == pytest.approx(0.82, abs=0.01)
        assert np.var(alpha_bars) == pytest.approx(0.36 ** 2 / 12, rel=0.1)

    def test_deterministic_given_generator(self):
        s = make_linear_schedule(1e-4, 5e-3, 100)
        a = [sample_noise_level(s, np.random.default_rng(9)) for _ in range(3)]
        b = [sample_noise_level(s, np.random.default_rng(9)) for _ in range(3)]
        assert a == b


class TestInferenceSchedule:
    def test_full_steps_identity(self):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        assert inference_schedule(s, 1000) is s

    def test_one_step_matches_terminal(self):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        short = inference_schedule(s, 1)
        assert short.N == 1
        assert short.alpha_bar(1) == pytest.approx(s.alpha_bar(1000), rel=1e-2)

    def test_fifty_steps_endpoint(self):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        short = inference_schedule(s, 50)
        assert short.N == 50
        assert short.beta_start == pytest.approx(1e-4)
        assert short.alpha_bar(50) == pytest.approx(s.alpha_bar(1000), rel=1e-8)
        assert np.all(np.diff(short.betas) > 0)

    @pytest.mark.parametrize("steps", [1, 2, 6, 20, 50, 200, 999])
    def test_terminal_alpha_bar_within_one_percent(self, steps):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        short = inference_schedule(s, steps)
        assert short.N == steps
        assert abs(short.alpha_bar(steps) - s.alpha_bar(1000)) <= 0.01 * s.alpha_bar(1000)
        assert np.all((short.betas > 0.0) & (short.betas < 1.0))

    def test_constant_fallback(self):
        # a flat beta_start schedule would already overshoot the terminal alpha-bar
        s = NoiseSchedule.from_betas([0.3, 0.01, 0.01, 0.01])
        short = inference_schedule(s, 2)
        np.testing.assert_allclose(short.betas, short.betas[0])
        assert short.betas[0] < 0.3
        assert short.alpha_bar(2) == pytest.approx(s.alpha_bar(4), rel=1e-10)

    @pytest.mark.parametrize("steps", [0, 1001])
    def test_out_of_range(self, steps):
        s = make_linear_schedule(1e-4, 5e-3, 1000)
        with pytest.raises(ConfigurationError):
            inference_schedule(s, steps)
