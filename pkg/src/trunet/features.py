"""Four-channel input features: log-magnitude, PCEN, demodulated-phase cos/sin."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trunet.dsp import StftConfig, demodulate_phase
from trunet.errors import ShapeError

LOG_EPS = 1e-7
N_CHANNELS = 4


@dataclass(frozen=True)
class PcenParams:
    """Per-frequency PCEN parameters (each an F-length array)."""

    s: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    r: np.ndarray
    eps: float = 1e-6

    @classmethod
    def default(cls, n_bins: int = 256, s=0.025, alpha=0.98, delta=2.0, r=0.5):
        full = lambda v: np.full(n_bins, v, dtype=np.float64)  # noqa: E731
        return cls(full(s), full(alpha), full(delta), full(r))

    def validate(self):
        s, d, r = self.s, self.delta, self.r
        arrays = (self.s, self.alpha, self.delta, self.r)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("PCEN parameters must be finite")
        if np.any((s <= 0) | (s >= 1)) or np.any(d <= 0) or np.any((r <= 0) | (r > 1)):
            raise ValueError("PCEN parameters out of range: need 0<s<1, delta>0, 0<r<=1")
        return self


@dataclass
class PcenState:
    """Smoother memory. ``primed`` is False until the first frame is seen."""

    m: np.ndarray
    primed: bool = False

    @classmethod
    def zeros(cls, n_bins: int = 256):
        return cls(np.zeros(n_bins))


def pcen_step(energy, state: PcenState, params: PcenParams):
    """One causal PCEN frame; returns ``(output, new_state)``.

    The smoother starts at the first frame's energy instead of zero.
    """
    e = np.asarray(energy, dtype=np.float64)
    if np.any(e < 0):
        raise ValueError("PCEN energy must be non-negative")
    if state.primed:
        m = (1.0 - params.s) * state.m + params.s * e
    else:
        m = e.copy()
    gain = (params.eps + m) ** params.alpha
    out = (e / gain + params.delta) ** params.r - params.delta ** params.r
    return out, PcenState(m, True)


def log_magnitude(spec) -> np.ndarray:
    return np.log(np.abs(spec) + LOG_EPS)


def build_features(frame, pcen_state: PcenState, params: PcenParams,
                   frame_index: int = 0, cfg: StftConfig = StftConfig()):
    """Stack the four channels of one spectrum frame into an F x 4 array."""
    frame = np.asarray(frame)
    if frame.shape != (len(params.s),):
        raise ShapeError(f"frame has shape {frame.shape}, PCEN expects {len(params.s)} bins")
    mag = np.abs(frame)
    pcen, state = pcen_step(mag, pcen_state, params)
    cos, sin = demodulate_phase(frame, cfg, start_frame=frame_index)
    feats = np.stack([np.log(mag + LOG_EPS), pcen, cos, sin], axis=-1)
    return feats, state


def features_offline(spec, params: PcenParams, cfg: StftConfig = StftConfig(),
                     state: PcenState | None = None, start_frame: int = 0):
    """Whole-spectrogram version of :func:`build_features` (T x F x 4)."""
    spec = np.asarray(spec)
    mag = np.abs(spec)
    state = state or PcenState.zeros(spec.shape[1])
    pcen = np.empty_like(mag)
    for t in range(len(mag)):
        pcen[t], state = pcen_step(mag[t], state, params)
    cos, sin = demodulate_phase(spec, cfg, start_frame=start_frame)
    return np.stack([np.log(mag + LOG_EPS), pcen, cos, sin], axis=-1), state
