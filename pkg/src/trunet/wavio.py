"""Mono 16 kHz WAV reading/writing (PCM16 or float32)."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.io import wavfile

from trunet.errors import WavFormatError

SAMPLE_RATE = 16000


def wav_read(path, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Samples as float64; PCM16 is scaled by 1/32768, float32 kept exact."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except (ValueError, EOFError, OSError) as exc:
        raise WavFormatError(f"{path}: malformed header ({exc})") from exc
    if data.ndim != 1:
        raise WavFormatError(f"{path}: mono required, file has {data.shape[1]} channels "
                             "(downmix first, e.g. `sox in.wav -c 1 out.wav`)")
    if rate != sample_rate:
        raise WavFormatError(f"{path}: {sample_rate} Hz required, file is {rate} Hz "
                             f"(resample first, e.g. `sox in.wav -r {sample_rate} out.wav`)")
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.float32:
        return data.astype(np.float64)
    raise WavFormatError(f"{path}: unsupported sample format {data.dtype}; "
                         "use 16-bit PCM or 32-bit float")


def wav_write(path, samples, sample_rate: int = SAMPLE_RATE, pcm16: bool = False):
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise WavFormatError("only mono audio can be written")
    if not np.all(np.isfinite(x)):
        raise WavFormatError("refusing to write non-finite samples")
    if pcm16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(np.float32)
    wavfile.write(path, sample_rate, data)
