import json

import numpy as np
import pytest

from phone2wave.config import CorpusConfig, MelConfig
from phone2wave.data import (
    Utterance,
    build_manifest,
    check_corpus_config,
    corpus_read,
    corpus_size_bytes,
    corpus_write,
    gen_token_sequence,
    gen_utterance,
    generate_corpus,
    log_mel_distance,
    manifest_path,
    mel_band_centers,
    mel_filterbank,
    mel_spectrogram,
    mel_target,
    num_mel_frames,
    split_corpus,
    token_frequency,
    write_manifest,
)
from phone2wave.exceptions import ContractError, IntegrityError, UnknownTokenError, VersionMismatchError


def peak_frequency(segment: np.ndarray, sample_rate: int) -> float:
    spectrum = np.abs(np.fft.rfft(segment * np.hanning(segment.size)))
    return float(np.argmax(spectrum) * sample_rate / segment.size)


class TestTokens:
    def test_frequencies(self):
        cfg = CorpusConfig()
        assert token_frequency(2, cfg) == pytest.approx(220.0)
        assert token_frequency(14, cfg) == pytest.approx(440.0)

    def test_sequence_shape(self):
        cfg = CorpusConfig()
        rng = np.random.default_rng(0)
        for _ in range(200):
            tokens = gen_token_sequence(rng, cfg)
            assert cfg.min_tokens <= tokens.size <= cfg.max_tokens
            assert tokens[-1] == cfg.eos_id
            assert tokens[0] != cfg.silence_id
            assert np.all(tokens[:-1] != cfg.eos_id)
            # no two silences in a row
            silent = tokens == cfg.silence_id
            assert not np.any(silent[1:] & silent[:-1])


class TestUtterance:
    def test_single_token_peak(self):
        cfg = CorpusConfig()
        for token in (2, 7, 13):
            utt = gen_utterance([token], np.random.default_rng(0), cfg, durations=[20])
            assert utt.waveform.shape == (20 * cfg.samples_per_frame,)
            bin_width = cfg.sample_rate / utt.waveform.size
            assert abs(peak_frequency(utt.waveform, cfg.sample_rate) - token_frequency(token, cfg)) <= bin_width

    def test_segments_recover_token_peaks(self):
        cfg = CorpusConfig()
        tokens = [3, 9, 0, 5, 1]
        utt = gen_utterance(tokens, np.random.default_rng(1), cfg, durations=[16, 12, 4, 20, 3])
        boundaries = np.concatenate([[0], np.cumsum(utt.durations)]) * cfg.samples_per_frame
        for token, lo, hi in zip(tokens, boundaries[:-1], boundaries[1:]):
            segment = utt.waveform[lo:hi]
            if token in (cfg.silence_id, cfg.eos_id):
                assert np.all(segment == 0.0)
                continue
            bin_width = cfg.sample_rate / segment.size
            assert abs(peak_frequency(segment, cfg.sample_rate) - token_frequency(token, cfg)) <= bin_width

    def test_phase_is_continuous(self):
        cfg = CorpusConfig(fade_fraction=0.0)
        utt = gen_utterance([4, 4], np.random.default_rng(0), cfg, durations=[5, 5])
        whole = gen_utterance([4], np.random.default_rng(0), cfg, durations=[10])
        np.testing.assert_allclose(utt.waveform, whole.waveform, atol=1e-5)

    def test_envelope_fades_to_zero(self):
        cfg = CorpusConfig()
        utt = gen_utterance([6], np.random.default_rng(0), cfg, durations=[10])
        assert abs(utt.waveform[0]) < 0.01 and abs(utt.waveform[-1]) < 0.05
        assert np.max(np.abs(utt.waveform)) <= cfg.amplitude

    def test_durations_recorded(self):
        cfg = CorpusConfig()
        utt = gen_utterance([2, 3, 1], np.random.default_rng(2), cfg)
        assert utt.total_frames * cfg.samples_per_frame == utt.waveform.size
        assert np.all((utt.durations >= cfg.min_duration) & (utt.durations <= cfg.max_duration))

    def test_unknown_token(self):
        with pytest.raises(UnknownTokenError):
            gen_utterance([2, 99], np.random.default_rng(0), CorpusConfig())


class TestCorpus:
    def test_deterministic_and_indexable(self, tiny_corpus_config):
        a = generate_corpus(tiny_corpus_config, seed=3)
        b = generate_corpus(tiny_corpus_config, seed=3, count=2, start=4)
        assert len(a) == 8
        for x, y in zip(a[4:6], b):
            assert x.waveform.tobytes() == y.waveform.tobytes()
            np.testing.assert_array_equal(x.tokens, y.tokens)

    def test_write_read(self, tiny_corpus_config, tmp_path):
        utterances = generate_corpus(tiny_corpus_config, seed=1)
        path = tmp_path / "c.p2wc"
        crc = corpus_write(utterances, path, tiny_corpus_config)
        assert len(crc) == 8
        assert path.stat().st_size == corpus_size_bytes(utterances)
        back = corpus_read(path)
        assert len(back) == len(utterances)
        for u, v in zip(utterances, back):
            np.testing.assert_array_equal(u.tokens, v.tokens)
            np.testing.assert_array_equal(u.durations, v.durations)
            assert u.waveform.tobytes() == v.waveform.tobytes()
            assert v.samples_per_frame == 12 and v.sample_rate == 600

    def test_size_formula(self, tiny_corpus_config):
        utterances = generate_corpus(tiny_corpus_config, seed=1, count=3)
        expected = 26 + sum(8 + 4 * u.tokens.size + 4 * u.waveform.size for u in utterances) + 4
        assert corpus_size_bytes(utterances) == expected

    def test_corruption_detected(self, tiny_corpus_config, tmp_path):
        path = tmp_path / "c.p2wc"
        corpus_write(generate_corpus(tiny_corpus_config, seed=1, count=2), path, tiny_corpus_config)
        raw = bytearray(path.read_bytes())
        raw[40] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(IntegrityError):
            corpus_read(path)

    def test_truncation_and_version(self, tiny_corpus_config, tmp_path):
        path = tmp_path / "c.p2wc"
        corpus_write(generate_corpus(tiny_corpus_config, seed=1, count=2), path, tiny_corpus_config)
        raw = path.read_bytes()
        path.write_bytes(raw[:20])
        with pytest.raises(IntegrityError):
            corpus_read(path)
        bumped = bytearray(raw)
        bumped[8:10] = (2).to_bytes(2, "little")
        path.write_bytes(bytes(bumped))
        with pytest.raises(VersionMismatchError):
            corpus_read(path)

    def test_rate_mismatch(self, tiny_corpus_config):
        utterances = generate_corpus(tiny_corpus_config, seed=1, count=1)
        with pytest.raises(ContractError):
            check_corpus_config(utterances, CorpusConfig())
        check_corpus_config(utterances, tiny_corpus_config)

    def test_manifest(self, tiny_corpus_config, tmp_path):
        utterances = generate_corpus(tiny_corpus_config, seed=5)
        manifest = build_manifest(tiny_corpus_config, 5, "deadbeef")
        assert manifest["splits"] == {"train": [0, 6], "holdout": [6, 8]}
        path = manifest_path(tmp_path / "corpus.p2wc")
        assert path.name == "corpus.manifest.json"
        write_manifest(manifest, path)
        loaded = json.loads(path.read_text())
        train, holdout = split_corpus(utterances, loaded, 0)
        assert len(train) == 6 and len(holdout) == 2
        train, holdout = split_corpus(utterances, None, 5)
        assert len(train) == 5 and len(holdout) == 3


class TestMel:
    def test_filterbank_shape_and_peaks(self):
        cfg = MelConfig()
        fb = mel_filterbank(cfg)
        assert fb.shape == (cfg.n_mels, cfg.n_fft // 2 + 1)
        assert np.all(fb >= 0.0) and np.all(fb.max(axis=1) <= 1.0)
        assert np.all(np.diff(mel_band_centers(cfg)) > 0)

    def test_frame_count(self):
        cfg = MelConfig()
        assert num_mel_frames(400, cfg) == (400 - 160) // 40 + 1
        assert mel_spectrogram(np.zeros(400), cfg).shape == (7, cfg.n_mels)

    def test_frame_t_covers_hop_times_t_onwards(self):
        cfg = MelConfig()
        x = np.zeros(400)
        x[210] = 1.0
        above = mel_spectrogram(x, cfg).max(axis=1) > np.log(cfg.log_floor)
        assert above.tolist() == [False, False, True, True, True, True, False]

    def test_target_has_one_frame_per_hop(self):
        cfg = MelConfig()
        assert mel_target(np.zeros(40 * 12), cfg).shape == (12, cfg.n_mels)

    def test_silence_hits_floor(self):
        cfg = MelConfig()
        np.testing.assert_allclose(mel_spectrogram(np.zeros(400), cfg), np.log(cfg.log_floor))

    def test_tone_lands_in_nearest_band(self):
        cfg = MelConfig()
        t = np.arange(4000) / cfg.sample_rate
        mel = mel_spectrogram(np.sin(2 * np.pi * 500.0 * t), cfg)
        band = int(np.argmax(mel.mean(axis=0)))
        assert band == int(np.argmin(np.abs(mel_band_centers(cfg) - 500.0)))

    def test_too_short(self):
        with pytest.raises(ContractError):
            mel_spectrogram(np.zeros(10), MelConfig())

    def test_distance(self, rng):
        a = rng.standard_normal((5, 3))
        assert log_mel_distance(a, a) == 0.0
        assert log_mel_distance(a, a + 1.0) == pytest.approx(np.sqrt(3.0))
        # only common frames count
        assert log_mel_distance(a, np.vstack([a, a])) == 0.0
