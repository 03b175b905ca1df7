import numpy as np
import pytest
from scipy.io import wavfile

from trunet.errors import WavFormatError
from trunet.wavio import wav_read, wav_write


def test_float32_round_trip_is_exact(tmp_path, rng):
    x = rng.standard_normal(1000).astype(np.float32).astype(np.float64)
    wav_write(tmp_path / "a.wav", x)
    np.testing.assert_array_equal(wav_read(tmp_path / "a.wav"), x)


def test_pcm16_scaling(tmp_path):
    wavfile.write(tmp_path / "p.wav", 16000, np.array([-32768, 0, 16384, 32767], dtype=np.int16))
    assert wav_read(tmp_path / "p.wav").tolist() == [-1.0, 0.0, 0.5, 32767 / 32768]
    wav_write(tmp_path / "q.wav", np.array([-1.0, 0.5, 2.0]), pcm16=True)
    assert wavfile.read(tmp_path / "q.wav")[1].tolist() == [-32768, 16384, 32767]


def test_stereo_rejected(tmp_path):
    wavfile.write(tmp_path / "s.wav", 16000, np.zeros((10, 2), dtype=np.int16))
    with pytest.raises(WavFormatError, match="mono required"):
        wav_read(tmp_path / "s.wav")


def test_wrong_rate_rejected(tmp_path):
    wavfile.write(tmp_path / "r.wav", 44100, np.zeros(10, dtype=np.int16))
    with pytest.raises(WavFormatError, match="16000 Hz required"):
        wav_read(tmp_path / "r.wav")


def test_unsupported_format_and_garbage(tmp_path):
    wavfile.write(tmp_path / "i.wav", 16000, np.zeros(10, dtype=np.int32))
    with pytest.raises(WavFormatError, match="unsupported"):
        wav_read(tmp_path / "i.wav")
    (tmp_path / "g.wav").write_bytes(b"RIFX not a wave file at all")
    with pytest.raises(WavFormatError, match="malformed"):
        wav_read(tmp_path / "g.wav")
    with pytest.raises(FileNotFoundError):
        wav_read(tmp_path / "missing.wav")


def test_write_rejects_bad_input(tmp_path):
    with pytest.raises(WavFormatError):
        wav_write(tmp_path / "x.wav", np.zeros((4, 2)))
    with pytest.raises(WavFormatError):
        wav_write(tmp_path / "x.wav", np.array([0.0, np.nan]))
