"""Uniform symmetric INT8 quantization (zero-point fixed at 0).

Conv/transposed-conv inputs use static activation scales fixed from
calibration; GRU inputs and hidden states are re-quantized at every step from
their own max-abs. Biases, batch norm and everything outside the network stay
in floating point.

Integer products are evaluated on integer-valued float64 arrays so BLAS can be
used; this is exact while the accumulator stays below 2**53, and the 32-bit
accumulator bound is asserted on every product.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from trunet.errors import QuantizationError, ShapeError
from trunet.kernels import bn_fold, conv_core, gru_cell_step, pack_transposed, transposed_core
from trunet.weights import CALIBRATION_PREFIX, TensorEntry, WeightStore

QMAX = 127
SCALE_FLOOR = 1e-8
ACC_LIMIT = 2**31 - 1


@dataclass(frozen=True)
class QuantizedTensor:
    values: np.ndarray  # int8 in [-127, 127]
    scale: float

    @property
    def shape(self):
        return self.values.shape


def round_half_away(x):
    """Round to nearest, ties away from zero.

    ``x - trunc(x)`` is exact in floating point, so doubling and truncating
    it adds the carry without the error of the tempting ``floor(|x| + 0.5)``
    (which rounds 0.49999999999999994 up to 1).
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.trunc(x)
    frac = x - t
    frac *= 2.0
    np.trunc(frac, out=frac)
    frac += t
    return frac


def _quantize_values(x, scale):
    v = np.asarray(x, dtype=np.float64) / scale
    np.clip(v, -QMAX, QMAX, out=v)
    return round_half_away(v)


def quantize(x, scale: float) -> QuantizedTensor:
    if not scale > 0:
        raise QuantizationError(f"quantization scale must be positive, got {scale}")
    return QuantizedTensor(_quantize_values(x, scale).astype(np.int8), float(scale))


def dequantize(q: QuantizedTensor) -> np.ndarray:
    return q.values.astype(np.float64) * q.scale


def weight_scale(w) -> float:
    return max(float(np.max(np.abs(w))) / QMAX, SCALE_FLOOR)


@dataclass
class CalibrationStats:
    """Running averages of per-observation min and max for one site."""

    min_avg: float = 0.0
    max_avg: float = 0.0
    count: int = 0

    @property
    def scale(self) -> float:
        return max(abs(self.min_avg) / QMAX, abs(self.max_avg) / QMAX, SCALE_FLOOR)

    def observe(self, activation):
        a = np.asarray(activation)
        n = self.count + 1
        self.min_avg += (float(a.min()) - self.min_avg) / n
        self.max_avg += (float(a.max()) - self.max_avg) / n
        self.count = n
        return self


def calibrate(stats: CalibrationStats, activation) -> CalibrationStats:
    return stats.observe(activation)


def int_matmul(a, b):
    """Exact product of integer-valued arrays with the int32 bound checked."""
    return _check_acc(a @ b)


def qlinear(x: QuantizedTensor, w: QuantizedTensor, bias=None) -> np.ndarray:
    """``x @ w`` on int8 operands, rescaled and biased in full precision."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"qlinear: input {x.shape} incompatible with weight {w.shape}")
    acc = int_matmul(x.values.astype(np.float64), w.values.astype(np.float64))
    out = acc * (x.scale * w.scale)
    return out if bias is None else out + bias


def _dynamic_quant_rows(x):
    """Quantize each vector along the last axis with its own max-abs scale."""
    scale = np.maximum(np.max(np.abs(x), axis=-1, keepdims=True) / QMAX, SCALE_FLOOR)
    return _quantize_values(x, scale), scale


class QuantizedGru:
    """GRU cell with i8 W/U and per-step dynamic activation quantization."""

    def __init__(self, W: QuantizedTensor, U: QuantizedTensor, b_ih, b_hh):
        self.W, self.U = W, U
        self._Wf = W.values.astype(np.float64)
        self._Uf = U.values.astype(np.float64)
        self.b_ih = np.asarray(b_ih, dtype=np.float64)
        self.b_hh = np.asarray(b_hh, dtype=np.float64)

    @classmethod
    def from_float(cls, gru):
        return cls(quantize(gru.W, weight_scale(gru.W)), quantize(gru.U, weight_scale(gru.U)),
                   gru.b_ih, gru.b_hh)

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    def input_proj(self, x):
        q, s = _dynamic_quant_rows(np.asarray(x, dtype=np.float64))
        return int_matmul(q, self._Wf) * (s * self.W.scale) + self.b_ih

    def hidden_proj(self, h):
        q, s = _dynamic_quant_rows(np.asarray(h, dtype=np.float64))
        return int_matmul(q, self._Uf) * (s * self.U.scale) + self.b_hh


def dynamic_quant_gru_step(x, h, qweights: QuantizedGru):
    return gru_cell_step(x, h, qweights)


def _check_acc(acc):
    if acc.size and (acc.max() > ACC_LIMIT or acc.min() < -ACC_LIMIT):
        raise OverflowError("int32 accumulator overflow")
    return acc


def qconv_accumulate(x, w_int, act_scale: float, stride: int, mode: str):
    """Integer accumulator of a conv; ``w_int`` holds i8 values as float64."""
    return _check_acc(conv_core(_quantize_values(x, act_scale), w_int, stride, mode))


def qtransposed_accumulate(x, w_packed_int, kernel: int, act_scale: float, stride: int):
    xq = _quantize_values(x, act_scale)
    return _check_acc(transposed_core(xq, w_packed_int, kernel, stride))


def qconv1d_freq(x, w: QuantizedTensor, b, act_scale: float, stride: int = 1,
                 mode: str = "standard"):
    """Integer counterpart of :func:`trunet.kernels.conv1d_freq`."""
    acc = qconv_accumulate(x, w.values.astype(np.float64), act_scale, stride, mode)
    out = acc * (act_scale * w.scale)
    return out if b is None else out + b


def qtransposed_conv1d_freq(x, w: QuantizedTensor, b, act_scale: float, stride: int):
    wf = w.values.astype(np.float64)
    acc = qtransposed_accumulate(x, pack_transposed(wf), wf.shape[0], act_scale, stride)
    out = acc * (act_scale * w.scale)
    return out if b is None else out + b


@dataclass
class Calibrator:
    """Collects :class:`CalibrationStats` per activation site."""

    sites: dict[str, CalibrationStats] = field(default_factory=dict)

    def __call__(self, site: str, activation):
        self.sites.setdefault(site, CalibrationStats()).observe(activation)

    def scales(self) -> dict[str, float]:
        return {site: st.scale for site, st in self.sites.items()}


def quantize_model(store: WeightStore, calibration_audio, config=None) -> WeightStore:
    """Convert an f32 store to INT8 with static activation scales.

    Conv and GRU weight matrices become i8 with per-tensor scales. Each
    conv's inference batch norm is folded into its weight and f32 bias first,
    so an INT8 store carries no batch norm tensors; GRU biases and PCEN
    parameters are copied unchanged. One calibration
    observation is one clip's whole-utterance forward pass.
    """
    from trunet.dsp import StftConfig, stft
    from trunet.features import features_offline
    from trunet.graph import build, config_for_store, quantizable_weights

    if store.is_quantized:
        raise QuantizationError("store is already quantized")
    clips = list(calibration_audio)
    if not clips:
        raise QuantizationError("empty calibration set")
    config = config or config_for_store(store)
    net = build(config, store)
    cfg = StftConfig()
    calib = Calibrator()
    for clip in clips:
        feats, _ = features_offline(stft(clip, cfg), net.pcen, cfg)
        net.forward_offline(feats, observer=calib)

    updates: dict[str, TensorEntry] = {}
    drop = []
    for name in quantizable_weights(config):
        w = store.array(name)
        prefix = name[: -len(".w")]
        if name.endswith(".w") and f"{prefix}.bn.gamma" in store:
            # fold inference batch norm into the conv before quantizing
            bn = [store.array(f"{prefix}.bn.{k}") for k in ("gamma", "beta", "mean", "var")]
            scale, shift = bn_fold(*bn)
            w = w * scale
            bias = store.array(f"{prefix}.b") * scale + shift
            updates[f"{prefix}.b"] = TensorEntry(bias.astype(np.float32))
            drop += [f"{prefix}.bn.{k}" for k in ("gamma", "beta", "mean", "var")]
        q = quantize(w, weight_scale(w))
        updates[name] = TensorEntry(q.values, q.scale)
    for site, scale in calib.scales().items():
        updates[CALIBRATION_PREFIX + site] = TensorEntry(np.array(scale, dtype=np.float32))
    return store.replace(updates, drop=drop)
