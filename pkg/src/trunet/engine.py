"""Frame-by-frame enhancement engine with zero lookahead.

Each call to :meth:`Enhancer.process_frame` consumes one hop of new samples,
analyses the most recent window, runs the network on that single frame,
masks, and overlap-adds. The emitted hop is the one that no future frame
touches, so the output lags the input by ``window_size - hop_size`` samples
(384 = 24 ms at the defaults) and depends on no future input.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from trunet.dsp import StftConfig, analyze_frame, istft, stft, synthesize_frames
from trunet.errors import ShapeError
from trunet.features import PcenState, build_features, features_offline
from trunet.graph import Network, TgruState
from trunet.phm import separate

SOURCES = ("direct", "reverb", "noise")


@dataclass
class StreamState:
    analysis: np.ndarray          # last window_size input samples
    ola: np.ndarray               # (3, window_size) pending overlap-add per source
    pcen: PcenState
    tgru: TgruState
    frame_index: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def nbytes(self) -> int:
        return (self.analysis.nbytes + self.ola.nbytes + self.pcen.m.nbytes
                + self.tgru.h.nbytes)


@dataclass(frozen=True)
class EnhancedAudio:
    direct: np.ndarray
    reverb: np.ndarray
    noise: np.ndarray

    def as_tuple(self):
        return self.direct, self.reverb, self.noise


@dataclass(frozen=True)
class RtfReport:
    mean_frame_ms: float
    p95_frame_ms: float
    rtf: float
    frames_measured: int
    mode: str = "f32"
    frame_ms: np.ndarray | None = field(default=None, repr=False, compare=False)

    def lines(self) -> list[str]:
        return [
            f"frames measured: {self.frames_measured} ({self.mode})",
            f"mean frame time: {self.mean_frame_ms:.4f} ms",
            f"p95 frame time:  {self.p95_frame_ms:.4f} ms",
            f"real-time factor: {self.rtf:.4f} (per 8 ms hop)",
            f"mean_frame_ms={self.mean_frame_ms:.6f}",
            f"p95_frame_ms={self.p95_frame_ms:.6f}",
            f"rtf={self.rtf:.6f}",
            f"frames_measured={self.frames_measured}",
            f"mode={self.mode}",
        ]


class Enhancer:
    """Binds an immutable :class:`Network` to STFT and masking settings.

    One enhancer may serve many streams; each stream owns a
    :class:`StreamState` from :meth:`new_stream`.
    """

    def __init__(self, network: Network, cfg: StftConfig = StftConfig(),
                 sign_mode: str = "hard", tau: float = 1.0, seed: int | None = None):
        if cfg.n_bins != network.config.freq_bins:
            raise ShapeError(f"STFT gives {cfg.n_bins} bins, network expects "
                             f"{network.config.freq_bins}")
        if sign_mode == "gumbel" and not tau > 0:
            raise ValueError(f"gumbel temperature must be positive, got {tau}")
        self.network = network
        self.cfg = cfg
        self.sign_mode = sign_mode
        self.tau = tau
        self.seed = seed

    @property
    def latency(self) -> int:
        return self.cfg.window_size - self.cfg.hop_size

    def new_stream(self) -> StreamState:
        n = self.cfg.window_size
        return StreamState(
            analysis=np.zeros(n),
            ola=np.zeros((len(SOURCES), n)),
            pcen=PcenState.zeros(self.cfg.n_bins),
            tgru=self.network.new_state(),
            rng=np.random.default_rng(self.seed),
        )

    def process_frame(self, state: StreamState, new_samples) -> np.ndarray:
        """Consume one hop; return ``(3, hop)`` finished samples (d, r, n)."""
        hop = self.cfg.hop_size
        chunk = np.asarray(new_samples, dtype=np.float64)
        if chunk.shape != (hop,):
            raise ShapeError(f"expected exactly {hop} new samples, got shape {chunk.shape}")
        buf = state.analysis
        buf[:-hop] = buf[hop:]
        buf[-hop:] = chunk
        X = analyze_frame(buf, self.cfg)
        feats, state.pcen = build_features(X, state.pcen, self.network.pcen,
                                           state.frame_index, self.cfg)
        heads, state.tgru = self.network.forward_frame(feats, state.tgru)
        sep = separate(X, heads, self.sign_mode, self.tau, state.rng)
        ola = state.ola
        ola += synthesize_frames(np.stack(sep_sources(sep)), self.cfg)
        out = ola[:, :hop].copy()
        ola[:, :-hop] = ola[:, hop:]
        ola[:, -hop:] = 0.0
        state.frame_index += 1
        return out

    def _n_chunks(self, n: int) -> int:
        return -(-(n + self.latency) // self.cfg.hop_size)

    def stream(self, x, state: StreamState | None = None) -> np.ndarray:
        """Raw streaming output ``(3, chunks*hop)``, still delayed by ``latency``."""
        x = np.asarray(x, dtype=np.float64)
        hop = self.cfg.hop_size
        k = self._n_chunks(len(x))
        padded = np.concatenate([x, np.zeros(k * hop - len(x))])
        state = state or self.new_stream()
        out = np.empty((len(SOURCES), k * hop))
        for i in range(k):
            out[:, i * hop : (i + 1) * hop] = self.process_frame(state, padded[i * hop : (i + 1) * hop])
        return out

    def enhance(self, x) -> EnhancedAudio:
        """Streaming enhancement with the algorithmic delay removed."""
        raw = self.stream(x)
        lat, n = self.latency, len(x)
        return EnhancedAudio(*(raw[i, lat : lat + n] for i in range(len(SOURCES))))

    def enhance_offline(self, x, return_raw: bool = False):
        """Whole-utterance path over the same frames; equals :meth:`enhance`."""
        x = np.asarray(x, dtype=np.float64)
        hop, lat, n = self.cfg.hop_size, self.latency, len(x)
        k = self._n_chunks(n)
        padded = np.concatenate([np.zeros(lat), x, np.zeros(k * hop - n)])
        X = stft(padded, self.cfg)
        feats, _ = features_offline(X, self.network.pcen, self.cfg)
        heads = self.network.forward_offline(feats)
        rng = np.random.default_rng(self.seed)
        sep = separate(X, heads, self.sign_mode, self.tau, rng)
        raw = np.stack([istft(s, self.cfg)[: k * hop] for s in sep_sources(sep)])
        if return_raw:
            return raw
        return EnhancedAudio(*(raw[i, lat : lat + n] for i in range(len(SOURCES))))


def sep_sources(sep):
    return sep.direct, sep.reverb, sep.noise


def process_frame(enhancer: Enhancer, state: StreamState, new_samples):
    return enhancer.process_frame(state, new_samples)


def remix(direct, reverb, target_db: float = 15.0) -> np.ndarray:
    """Add ``reverb`` back at ``target_db`` below ``direct`` (energy ratio)."""
    direct = np.asarray(direct, dtype=np.float64)
    reverb = np.asarray(reverb, dtype=np.float64)
    if direct.shape != reverb.shape:
        raise ShapeError(f"length mismatch: {direct.shape} vs {reverb.shape}")
    e_r = np.sum(reverb**2)
    if e_r == 0:
        return direct.copy()
    gain = np.sqrt(np.sum(direct**2) / (e_r * 10.0 ** (target_db / 10.0)))
    return direct + gain * reverb


def benchmark_rtf(enhancer: Enhancer, n_frames: int = 1000, warmup: int = 16,
                  seed: int = 0) -> RtfReport:
    """Wall-clock time of :meth:`Enhancer.process_frame` on random audio."""
    hop = enhancer.cfg.hop_size
    rng = np.random.default_rng(seed)
    audio = 0.1 * rng.standard_normal((warmup + n_frames, hop))
    state = enhancer.new_stream()
    times = np.empty(n_frames)
    for i in range(warmup + n_frames):
        t0 = time.perf_counter()
        enhancer.process_frame(state, audio[i])
        dt = time.perf_counter() - t0
        if i >= warmup:
            times[i - warmup] = dt * 1e3
    hop_ms = 1e3 * hop / enhancer.cfg.sample_rate
    mean = float(times.mean())
    return RtfReport(mean, float(np.percentile(times, 95)), mean / hop_ms, n_frames,
                     "int8" if enhancer.network.quantized else "f32", times)
