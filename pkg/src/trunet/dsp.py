"""STFT analysis/synthesis, phase demodulation and power-law compression.

Frames are left-aligned (frame ``t`` covers ``[t*hop, t*hop + window)``) and
there is no centre padding. A 512-point frame yields 256 bins: the DC and
Nyquist bins of a real frame are both real, so the Nyquist value is carried
in the imaginary part of the DC bin and unpacked again at synthesis. That
keeps 256 bins without discarding information, so analysis followed by
synthesis is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from trunet.errors import InsufficientSamplesError, ShapeError


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    window_size: int = 512
    hop_size: int = 128
    sample_rate: int = 16000
    window: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n, hop = self.window_size, self.hop_size
        if n <= 0 or n & (n - 1):
            raise ValueError(f"window_size must be a power of two, got {n}")
        if hop <= 0 or n % hop:
            raise ValueError(f"hop_size {hop} must divide window_size {n}")
        object.__setattr__(self, "window", periodic_hann(n))

    @property
    def fft_size(self) -> int:
        return self.window_size

    @property
    def n_bins(self) -> int:
        return self.window_size // 2

    @property
    def cola_gain(self) -> float:
        """Overlap-added squared window; constant for Hann at hop <= N/2."""
        w2 = self.window ** 2
        return float(w2.reshape(-1, self.hop_size).sum(axis=0).mean())

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_size) // self.hop_size + 1


def frame_signal(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Strided T x window view of ``x`` (read-only)."""
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_size)
    return frames[:: cfg.hop_size]


def stft(audio, cfg: StftConfig = StftConfig(), *, full: bool = False) -> np.ndarray:
    """Left-aligned STFT returning a T x F complex array.

    With ``full=True`` all ``window_size // 2 + 1`` bins are kept (used by the
    multi-resolution spectral loss); otherwise the Nyquist bin is packed into
    bin 0 (see :func:`pack_nyquist`).
    """
    x = np.asarray(audio, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected mono 1-D audio, got shape {x.shape}")
    if len(x) < cfg.window_size:
        raise InsufficientSamplesError(
            f"insufficient samples: need at least {cfg.window_size}, got {len(x)}"
        )
    spec = np.fft.rfft(frame_signal(x, cfg) * cfg.window, axis=-1)
    return spec if full else pack_nyquist(spec)


def pack_nyquist(spec: np.ndarray) -> np.ndarray:
    """``(..., N/2 + 1)`` real-signal spectrum -> ``(..., N/2)`` with the
    Nyquist value stored as the imaginary part of bin 0."""
    spec = np.asarray(spec)
    out = spec[..., :-1].copy()
    out[..., 0] = spec[..., 0].real + 1j * spec[..., -1].real
    return out


def unpack_nyquist(spec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pack_nyquist`; any complex bin 0 is split into two
    real values, so the result is always a valid real-signal spectrum."""
    spec = np.asarray(spec)
    out = np.empty((*spec.shape[:-1], spec.shape[-1] + 1), dtype=np.complex128)
    out[..., 1:-1] = spec[..., 1:]
    out[..., 0] = spec[..., 0].real
    out[..., -1] = spec[..., 0].imag
    return out


def analyze_frame(frame, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Packed spectrum of one ``window_size`` frame (same values as :func:`stft`)."""
    return pack_nyquist(np.fft.rfft(np.asarray(frame) * cfg.window))


def synthesize_frames(spec: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Inverse FFT of each frame with the synthesis window and COLA scaling.

    Returns a ``(..., window_size)`` array ready to be overlap-added.
    """
    spec = np.asarray(spec)
    if spec.shape[-1] != cfg.n_bins:
        raise ShapeError(
            f"spectrogram has {spec.shape[-1]} bins, config expects {cfg.n_bins}"
        )
    frames = np.fft.irfft(unpack_nyquist(spec), n=cfg.window_size, axis=-1)
    return frames * (cfg.window / cfg.cola_gain)


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    n_frames, n = frames.shape
    out = np.zeros((n_frames - 1) * hop + n)
    # one strided add per hop-sized slice of the window keeps this vectorised
    for k in range(n // hop):
        seg = frames[:, k * hop : (k + 1) * hop]
        view = out[k * hop : k * hop + n_frames * hop].reshape(n_frames, hop)
        view += seg
    return out


def istft(spec, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Overlap-add synthesis; length ``(T - 1) * hop + window_size``.

    The first and last ``window_size - hop_size`` samples are not covered by
    the full set of overlapping frames and are not perfectly reconstructed.
    """
    spec = np.asarray(spec)
    if spec.ndim != 2:
        raise ShapeError(f"expected T x F spectrogram, got shape {spec.shape}")
    return overlap_add(synthesize_frames(spec, cfg), cfg.hop_size)


def demodulate_phase(spec, cfg: StftConfig = StftConfig(), start_frame: int = 0):
    """Cos/sin of the phase with the per-hop phase advance of each bin removed.

    ``start_frame`` is the absolute index of the first row, so streaming callers
    get the same values as a whole-signal call. Zero bins map to (1, 0).
    """
    spec = np.asarray(spec)
    squeeze = spec.ndim == 1
    spec = np.atleast_2d(spec)
    n_frames, n_bins = spec.shape
    t = np.arange(start_frame, start_frame + n_frames, dtype=np.int64)[:, None]
    f = np.arange(n_bins, dtype=np.int64)[None, :]
    # integer modulus keeps the advance exact for arbitrarily long streams
    advance = 2.0 * np.pi * ((f * cfg.hop_size * t) % cfg.window_size) / cfg.window_size
    theta = np.angle(spec) - advance
    cos, sin = np.cos(theta), np.sin(theta)
    zero = spec == 0
    cos[zero], sin[zero] = 1.0, 0.0
    if squeeze:
        return cos[0], sin[0]
    return cos, sin


def power_compress(mag, exponent: float) -> np.ndarray:
    mag = np.asarray(mag, dtype=np.float64)
    if np.any(mag < 0):
        raise ValueError("power_compress expects non-negative magnitudes")
    return mag ** exponent
