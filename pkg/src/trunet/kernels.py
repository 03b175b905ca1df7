"""Frequency-axis convolution, batch norm and GRU kernels in plain numpy.

All activations are laid out ``(..., F, C)``: any leading axes (frames, batch)
are carried through untouched, so the same kernels serve one streaming frame
and a whole offline spectrogram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from trunet.errors import ShapeError

BN_EPS = 1e-5

LAYER_KINDS = ("standard_conv", "pointwise", "depthwise", "transposed_conv", "bn", "fgru", "tgru")


@dataclass(frozen=True)
class LayerSpec:
    """``(kernel, stride, channels)`` triple of one encoder/decoder layer."""

    kernel: int
    stride: int
    channels: int
    kind: str = "standard_conv"

    def __post_init__(self):
        if min(self.kernel, self.stride, self.channels) <= 0:
            raise ValueError(f"layer spec must be positive: {self}")
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")


def same_padding(n: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """``(out_len, pad_low, pad_high)`` for 'same' padding with out = ceil(n/s)."""
    out = -(-n // stride)
    pad = max((out - 1) * stride + kernel - n, 0)
    return out, pad // 2, pad - pad // 2


def freq_windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Zero-padded sliding windows along F: ``(..., F', C, kernel)`` view."""
    out, lo, hi = same_padding(x.shape[-2], kernel, stride)
    win = np.lib.stride_tricks.sliding_window_view(pad_freq(x, lo, hi), kernel, axis=-2)
    return win[..., ::stride, :, :][..., :out, :, :]


def pad_freq(x: np.ndarray, lo: int, hi: int) -> np.ndarray:
    if lo == 0 and hi == 0:
        return x
    n = x.shape[-2]
    xp = np.zeros((*x.shape[:-2], n + lo + hi, x.shape[-1]), dtype=x.dtype)
    xp[..., lo : lo + n, :] = x
    return xp


def conv_core(x, w, stride: int, mode: str):
    """Unvalidated convolution body shared by the float and integer paths.

    Accumulates one tap at a time, so integer-valued float inputs give exact
    integer sums.
    """
    if mode == "pointwise" and stride == 1:
        return x @ w[0]
    kernel = w.shape[0]
    out, lo, hi = same_padding(x.shape[-2], kernel, stride)
    xp = pad_freq(x, lo, hi)
    span = (out - 1) * stride + 1
    y = None
    for k in range(kernel):
        tap = xp[..., k : k + span : stride, :]
        term = tap * w[k] if mode == "depthwise" else tap @ w[k]
        y = term if y is None else y + term
    return y


def _check(name, cond, msg):
    if not cond:
        raise ShapeError(f"{name}: {msg}")


def conv1d_freq(x, w, b=None, kernel: int | None = None, stride: int = 1,
                mode: str = "standard", name: str = "conv") -> np.ndarray:
    """Strided 1-D convolution along the frequency axis.

    Weight layouts: standard ``(k, Cin, Cout)``, pointwise ``(1, Cin, Cout)``,
    depthwise ``(k, C)``. 'Same' zero padding, low side gets ``pad // 2``;
    output length is ``ceil(F / stride)``.
    """
    x = np.asarray(x)
    w = np.asarray(w)
    cin = x.shape[-1]
    if mode == "depthwise":
        _check(name, w.ndim == 2 and w.shape[1] == cin,
               f"depthwise weight {w.shape} does not match {cin} input channels")
    elif mode in ("standard", "pointwise"):
        _check(name, w.ndim == 3 and w.shape[1] == cin,
               f"{mode} weight {w.shape} does not match {cin} input channels")
        if mode == "pointwise":
            _check(name, w.shape[0] == 1, f"pointwise weight must have kernel 1, got {w.shape}")
    else:
        raise ValueError(f"unknown conv mode {mode!r}")
    kernel = w.shape[0] if kernel is None else kernel
    _check(name, w.shape[0] == kernel, f"weight kernel {w.shape[0]} != declared {kernel}")
    cout = w.shape[-1]
    if b is not None:
        _check(name, np.shape(b) == (cout,), f"bias shape {np.shape(b)} != ({cout},)")
    y = conv_core(x, w, stride, mode)
    return y if b is None else y + b


def transposed_scatter(y: np.ndarray, stride: int) -> np.ndarray:
    """Overlap-add per-tap outputs ``(..., F, k, C)`` into ``(..., s*F, C)``.

    The full-length result ``(F-1)*s + k`` is cropped by ``(k-s)//2`` at the
    low end and the remainder at the high end.
    """
    *lead, n, kernel, cout = y.shape
    full = np.zeros((*lead, (n - 1) * stride + kernel, cout), dtype=y.dtype)
    span = (n - 1) * stride + 1
    for k in range(kernel):
        full[..., k : k + span : stride, :] += y[..., :, k, :]
    lo = (kernel - stride) // 2
    return full[..., lo : lo + stride * n, :]


def pack_transposed(w):
    """``(k, Cin, Cout)`` -> ``(Cin, k*Cout)`` so all taps come from one matmul."""
    kernel, cin, cout = w.shape
    return np.ascontiguousarray(np.moveaxis(w, 0, 1).reshape(cin, kernel * cout))


def transposed_core(x, w_packed, kernel: int, stride: int):
    y = x @ w_packed
    return transposed_scatter(y.reshape(*y.shape[:-1], kernel, -1), stride)


def transposed_conv1d_freq(x, w, b=None, kernel: int | None = None, stride: int = 1,
                           name: str = "tconv") -> np.ndarray:
    """Fractionally strided convolution producing exactly ``stride * F`` bins."""
    x = np.asarray(x)
    w = np.asarray(w)
    _check(name, w.ndim == 3 and w.shape[1] == x.shape[-1],
           f"transposed weight {w.shape} does not match {x.shape[-1]} input channels")
    kernel = w.shape[0] if kernel is None else kernel
    _check(name, w.shape[0] == kernel, f"weight kernel {w.shape[0]} != declared {kernel}")
    if kernel < stride:
        raise ShapeError(f"{name}: kernel {kernel} smaller than stride {stride}")
    out = transposed_core(x, pack_transposed(w), kernel, stride)
    return out if b is None else out + b


def bn_fold(gamma, beta, mean, var, eps: float = BN_EPS):
    """Per-channel ``(scale, shift)`` equivalent of inference batch norm."""
    scale = np.asarray(gamma) / np.sqrt(np.asarray(var) + eps)
    return scale, np.asarray(beta) - np.asarray(mean) * scale


def batch_norm_inference(x, gamma, beta, mean, var, eps: float = BN_EPS):
    if np.any(np.asarray(var) < 0):
        raise ValueError("batch norm variance must be non-negative")
    return np.asarray(gamma) * (np.asarray(x) - mean) / np.sqrt(np.asarray(var) + eps) + beta


def relu(x):
    return np.maximum(x, 0.0)


def logistic(x):
    """Overflow-free logistic sigmoid."""
    return expit(x)


@dataclass(frozen=True)
class GruWeights:
    """Packed GRU parameters, gate order ``[r, z, n]`` along the 3H axis."""

    W: np.ndarray     # (Cin, 3H)
    U: np.ndarray     # (H, 3H)
    b_ih: np.ndarray  # (3H,)
    b_hh: np.ndarray  # (3H,)

    def __post_init__(self):
        cin, h3 = np.shape(self.W)
        h = h3 // 3
        if h3 != 3 * h or np.shape(self.U) != (h, h3):
            raise ShapeError(f"GRU weights inconsistent: W {np.shape(self.W)}, U {np.shape(self.U)}")
        if np.shape(self.b_ih) != (h3,) or np.shape(self.b_hh) != (h3,):
            raise ShapeError("GRU biases must have length 3*hidden")

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    def input_proj(self, x):
        return x @ self.W + self.b_ih

    def hidden_proj(self, h):
        return h @ self.U + self.b_hh


def gru_combine(gi, gh, h):
    """Gate arithmetic given both projections (each ``(..., 3H)``)."""
    H = h.shape[-1]
    r = logistic(gi[..., :H] + gh[..., :H])
    z = logistic(gi[..., H : 2 * H] + gh[..., H : 2 * H])
    n = np.tanh(gi[..., 2 * H :] + r * gh[..., 2 * H :])
    return (1.0 - z) * n + z * h


def gru_cell_step(x, h, w):
    """One GRU update. ``w`` is :class:`GruWeights` or any object with the
    same ``input_proj``/``hidden_proj`` methods (e.g. a quantized cell)."""
    h = np.asarray(h, dtype=np.float64)
    return gru_combine(w.input_proj(np.asarray(x, dtype=np.float64)), w.hidden_proj(h), h)


def gru_sequence(seq, w, reverse: bool = False, h0=None):
    """Run a GRU over axis -2 of ``seq``; returns all hidden states."""
    seq = np.asarray(seq, dtype=np.float64)
    length = seq.shape[-2]
    H = w.hidden_size
    gi = w.input_proj(seq)
    h = np.zeros((*seq.shape[:-2], H)) if h0 is None else h0
    out = np.empty((*seq.shape[:-1], H))
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for i in steps:
        h = gru_combine(gi[..., i, :], w.hidden_proj(h), h)
        out[..., i, :] = h
    return out


def bigru_sequence(seq, fw, bw):
    """Bidirectional GRU along axis -2, outputs ``[forward, backward]``."""
    return np.concatenate([gru_sequence(seq, fw), gru_sequence(seq, bw, reverse=True)], axis=-1)
