import struct
import wave

import numpy as np
import pytest

from phone2wave.exceptions import IntegrityError, NonFiniteError
from phone2wave.wav import quantize, wav_read, wav_write


class TestQuantize:
    def test_clip_and_round(self):
        pcm = quantize(np.array([-2.0, -1.0, 0.0, 0.5, 1.0, 3.0, -0.5, 0.25]))
        np.testing.assert_array_equal(pcm, [-32767, -32767, 0, 16384, 32767, 32767, -16384, 8192])
        assert pcm.dtype == np.dtype("<i2")

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(NonFiniteError):
            quantize(np.array([0.0, bad, 0.5]))


class TestWav:
    def test_header_fields(self, tmp_path):
        path = tmp_path / "a.wav"
        wav_write(np.zeros(100), 4000, path)
        raw = path.read_bytes()
        assert raw[:4] == b"RIFF" and raw[8:12] == b"WAVE"
        channels, rate = struct.unpack_from("<HI", raw, 22)
        assert (channels, rate) == (1, 4000)
        assert len(raw) == 44 + 200

    def test_round_trip(self, tmp_path, rng):
        x = np.clip(rng.standard_normal(333) * 0.3, -1, 1)
        path = tmp_path / "a.wav"
        wav_write(x, 22050, path)
        y, rate = wav_read(path)
        assert rate == 22050
        np.testing.assert_allclose(y, x, atol=0.5 / 32767 + 1e-7)

    def test_bit_identical_rewrite(self, tmp_path, rng):
        x = rng.standard_normal(50) * 0.2
        wav_write(x, 4000, tmp_path / "a.wav")
        wav_write(x, 4000, tmp_path / "b.wav")
        assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()

    def test_rejects_stereo(self, tmp_path):
        path = tmp_path / "s.wav"
        with wave.open(str(path), "wb") as w:
            w.setnchannels(2)
            w.setsampwidth(2)
            w.setframerate(8000)
            w.writeframes(b"\x00" * 16)
        with pytest.raises(IntegrityError):
            wav_read(path)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "g.wav"
        path.write_bytes(b"not a wav file at all")
        with pytest.raises(IntegrityError):
            wav_read(path)

    def test_one_second_sine_file_size(self, tmp_path):
        path = tmp_path / "sine.wav"
        t = np.arange(4000) / 4000.0
        wav_write(np.sin(2 * np.pi * 440.0 * t), 4000, path)
        assert path.stat().st_size == 8044
        samples, rate = wav_read(path)
        assert rate == 4000 and samples.shape == (4000,)

    def test_non_finite_writes_nothing(self, tmp_path):
        path = tmp_path / "nan.wav"
        with pytest.raises(NonFiniteError):
            wav_write(np.array([0.1, np.nan]), 4000, path)
        assert not path.exists()
