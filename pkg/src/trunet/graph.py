"""TRU-Net topology: 1-D conv encoder, FGRU block, TGRU block, 1-D transposed
conv decoder with mirrored skip connections.

Tensor naming schema (shared by :func:`random_init`, the TRUW file and
:func:`build`)::

    pcen.{s,alpha,delta,r}                          (F,)
    enc.1.conv.{w,b}                                (5, 4, 64), (64,)
    enc.<l>.pw.{w,b}, enc.<l>.dw.{w,b}              l = 2..6
    fgru.{fw,bw}.{W,U,b_ih,b_hh}, fgru.pw.{w,b}
    tgru.cell.{W,U,b_ih,b_hh}, tgru.pw.{w,b}
    dec.<i>.proj.{w,b}, dec.<i>.tconv.{w,b}         i = 1..6
    <conv>.bn.{gamma,beta,mean,var}                 after every conv
    qscale.<conv>                                   INT8 stores only

Conv weights are ``(kernel, Cin, Cout)``, depthwise ``(kernel, C)``; GRU
``W`` is ``(Cin, 3H)`` and ``U`` is ``(H, 3H)`` with gate order ``[r, z, n]``.
An INT8 store holds i8 ``w``/``W``/``U`` with each conv's batch norm folded
into its weight and bias, so it has no ``bn.*`` tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trunet.errors import MissingTensorError, ShapeError
from trunet.features import PcenParams
from trunet.kernels import (
    GruWeights,
    LayerSpec,
    bigru_sequence,
    bn_fold,
    conv1d_freq,
    conv_core,
    gru_combine,
    pack_transposed,
    relu,
    same_padding,
    transposed_conv1d_freq,
    transposed_core,
)
from trunet.quant import (
    QuantizedGru,
    QuantizedTensor,
    qconv1d_freq,
    qconv_accumulate,
    qtransposed_accumulate,
    qtransposed_conv1d_freq,
)
from trunet.weights import CALIBRATION_PREFIX, TensorSpec, WeightStore, init_store, parameter_count

ENCODER_CFG = (
    LayerSpec(5, 2, 64, "standard_conv"),
    LayerSpec(3, 1, 128, "depthwise"),
    LayerSpec(5, 2, 128, "depthwise"),
    LayerSpec(3, 1, 128, "depthwise"),
    LayerSpec(5, 2, 128, "depthwise"),
    LayerSpec(3, 2, 128, "depthwise"),
)
DECODER_CFG = (
    LayerSpec(3, 2, 64, "transposed_conv"),
    LayerSpec(5, 2, 64, "transposed_conv"),
    LayerSpec(3, 1, 64, "transposed_conv"),
    LayerSpec(5, 2, 64, "transposed_conv"),
    LayerSpec(3, 1, 64, "transposed_conv"),
    LayerSpec(5, 2, 10, "transposed_conv"),
)
N_HEADS = 10


@dataclass(frozen=True)
class TrunetConfig:
    encoder: tuple[LayerSpec, ...] = ENCODER_CFG
    decoder: tuple[LayerSpec, ...] = DECODER_CFG
    fgru_hidden: int = 64
    tgru_hidden: int = 128
    tgru_out: int = 64
    proj_channels: int = 64
    input_channels: int = 4
    freq_bins: int = 256
    bottleneck_bins: int = 16
    use_fgru: bool = True

    @property
    def bottleneck_channels(self) -> int:
        return self.encoder[-1].channels

    def freq_ladder(self) -> tuple[list[int], list[int]]:
        """Frequency size after each encoder block and each decoder block."""
        enc, f = [], self.freq_bins
        for spec in self.encoder:
            f = same_padding(f, spec.kernel, spec.stride)[0]
            enc.append(f)
        dec = []
        for spec in self.decoder:
            f *= spec.stride
            dec.append(f)
        return enc, dec

    def validate(self):
        if len(self.encoder) != len(self.decoder):
            raise ShapeError("encoder and decoder need the same number of blocks")
        enc, dec = self.freq_ladder()
        if enc[-1] != self.bottleneck_bins or dec[-1] != self.freq_bins:
            raise ShapeError(
                f"topology mismatch for freq_bins={self.freq_bins}: encoder ladder {enc}, "
                f"decoder ladder {dec}, expected bottleneck {self.bottleneck_bins}"
            )
        for i, spec in enumerate(self.decoder[:-1]):
            skip_f = enc[len(enc) - 2 - i]
            if dec[i] != skip_f:
                raise ShapeError(f"decoder block {i + 2} input size {dec[i]} != skip size {skip_f}")
        if self.decoder[-1].channels != N_HEADS:
            raise ShapeError(f"final decoder block must emit {N_HEADS} channels")
        return self


def _bn_specs(prefix: str, c: int) -> dict[str, TensorSpec]:
    return {
        f"{prefix}.bn.gamma": TensorSpec((c,), "const", value=1.0),
        f"{prefix}.bn.beta": TensorSpec((c,), "const", value=0.0),
        f"{prefix}.bn.mean": TensorSpec((c,), "const", value=0.0),
        f"{prefix}.bn.var": TensorSpec((c,), "const", value=1.0),
    }


def _conv_specs(prefix: str, wshape: tuple[int, ...], fan_in: int) -> dict[str, TensorSpec]:
    c = wshape[-1]
    out = {
        f"{prefix}.w": TensorSpec(wshape, fan_in=fan_in),
        f"{prefix}.b": TensorSpec((c,), fan_in=fan_in),
    }
    out.update(_bn_specs(prefix, c))
    return out


def _gru_specs(prefix: str, cin: int, hidden: int) -> dict[str, TensorSpec]:
    return {
        f"{prefix}.W": TensorSpec((cin, 3 * hidden), fan_in=cin),
        f"{prefix}.U": TensorSpec((hidden, 3 * hidden), fan_in=hidden),
        f"{prefix}.b_ih": TensorSpec((3 * hidden,), fan_in=hidden),
        f"{prefix}.b_hh": TensorSpec((3 * hidden,), fan_in=hidden),
    }


def tensor_schema(config: TrunetConfig = TrunetConfig()) -> dict[str, TensorSpec]:
    """Every f32 tensor the network needs, in file order."""
    config.validate()
    F = config.freq_bins
    defaults = PcenParams.default(F)
    schema = {
        "pcen.s": TensorSpec((F,), "const", value=float(defaults.s[0])),
        "pcen.alpha": TensorSpec((F,), "const", value=float(defaults.alpha[0])),
        "pcen.delta": TensorSpec((F,), "const", value=float(defaults.delta[0])),
        "pcen.r": TensorSpec((F,), "const", value=float(defaults.r[0])),
    }
    cin = config.input_channels
    for l, spec in enumerate(config.encoder, start=1):
        k, c = spec.kernel, spec.channels
        if l == 1:
            schema.update(_conv_specs("enc.1.conv", (k, cin, c), k * cin))
        else:
            schema.update(_conv_specs(f"enc.{l}.pw", (1, cin, c), cin))
            schema.update(_conv_specs(f"enc.{l}.dw", (k, c), k))
        cin = c
    cb = config.bottleneck_channels
    if config.use_fgru:
        schema.update(_gru_specs("fgru.fw", cb, config.fgru_hidden))
        schema.update(_gru_specs("fgru.bw", cb, config.fgru_hidden))
        schema.update(_conv_specs("fgru.pw", (1, 2 * config.fgru_hidden, cb), 2 * config.fgru_hidden))
    schema.update(_gru_specs("tgru.cell", cb, config.tgru_hidden))
    schema.update(_conv_specs("tgru.pw", (1, config.tgru_hidden, config.tgru_out), config.tgru_hidden))
    skip_channels = [s.channels for s in config.encoder][::-1]
    cin = config.tgru_out
    for i, spec in enumerate(config.decoder, start=1):
        cat = cin + skip_channels[i - 1]
        p = config.proj_channels
        schema.update(_conv_specs(f"dec.{i}.proj", (1, cat, p), cat))
        schema.update(_conv_specs(f"dec.{i}.tconv", (spec.kernel, p, spec.channels), spec.kernel * p))
        cin = spec.channels
    return schema


def quantizable_weights(config: TrunetConfig = TrunetConfig()) -> list[str]:
    return [n for n in tensor_schema(config)
            if n.endswith((".w", ".W", ".U")) and not n.startswith("pcen.")]


def random_init(seed: int, config: TrunetConfig = TrunetConfig()) -> WeightStore:
    return init_store(tensor_schema(config), seed)


class ConvUnit:
    """Conv (any mode) + inference batch norm + optional ReLU.

    In float mode the batch norm is folded into the weights and bias once at
    construction; the quantized path applies it to the output rescale so the
    integer weights stay untouched. :meth:`reference` recomputes the same
    unit through the public kernels.
    """

    def __init__(self, name, mode, w, b, bn_scale, bn_shift, stride, use_relu=True,
                 act_scale=None):
        self.name = name
        self.mode = mode
        self.w = w
        self.b = b
        self.bn_scale = bn_scale
        self.bn_shift = bn_shift
        self.stride = stride
        self.use_relu = use_relu
        self.act_scale = act_scale
        if self.quantized:
            # integer weights stay exact; the batch norm rides on the output rescale
            wi = w.values.astype(np.float64)
            self._kernel = wi.shape[0]
            self._w_int = pack_transposed(wi) if mode == "transposed" else wi
            self._out_scale = act_scale * w.scale * np.asarray(bn_scale)
            self._b_folded = np.asarray(b) * bn_scale + bn_shift
        else:
            wf = np.asarray(w) * bn_scale
            if mode == "transposed":
                self._kernel = wf.shape[0]
                wf = pack_transposed(wf)
            self._w_folded = wf
            self._b_folded = np.asarray(b) * bn_scale + bn_shift

    @property
    def quantized(self) -> bool:
        return isinstance(self.w, QuantizedTensor)

    def __call__(self, x, observer=None):
        if observer is not None:
            observer(self.name, x)
        if self.quantized:
            if self.mode == "transposed":
                acc = qtransposed_accumulate(x, self._w_int, self._kernel, self.act_scale,
                                             self.stride)
            else:
                acc = qconv_accumulate(x, self._w_int, self.act_scale, self.stride, self.mode)
            y = acc * self._out_scale
        elif self.mode == "transposed":
            y = transposed_core(x, self._w_folded, self._kernel, self.stride)
        else:
            y = conv_core(x, self._w_folded, self.stride, self.mode)
        y += self._b_folded
        return np.maximum(y, 0.0, out=y) if self.use_relu else y

    def reference(self, x):
        """Unfolded computation through the validated public kernels."""
        if self.mode == "transposed":
            if self.quantized:
                y = qtransposed_conv1d_freq(x, self.w, self.b, self.act_scale, self.stride)
            else:
                y = transposed_conv1d_freq(x, self.w, self.b, stride=self.stride, name=self.name)
        elif self.quantized:
            y = qconv1d_freq(x, self.w, self.b, self.act_scale, self.stride, self.mode)
        else:
            y = conv1d_freq(x, self.w, self.b, stride=self.stride, mode=self.mode, name=self.name)
        y = y * self.bn_scale + self.bn_shift
        return relu(y) if self.use_relu else y


@dataclass
class TgruState:
    h: np.ndarray

    @classmethod
    def zeros(cls, config: TrunetConfig = TrunetConfig()):
        return cls(np.zeros((config.bottleneck_bins, config.tgru_hidden)))


class _Loader:
    """Pulls tensors out of a store, checking names and shapes."""

    def __init__(self, store: WeightStore, schema: dict[str, TensorSpec]):
        self.store = store
        self.schema = schema
        self.quantized = store.is_quantized

    def f32(self, name):
        if name not in self.store:
            raise MissingTensorError(f"missing tensor {name!r}")
        entry = self.store[name]
        want = self.schema[name].shape if name in self.schema else None
        if want is not None and entry.shape != want:
            raise ShapeError(f"tensor {name!r} has shape {entry.shape}, expected {want}")
        if entry.dtype != "f32":
            raise ShapeError(f"tensor {name!r} must be f32")
        return entry.data.astype(np.float64)

    def weight(self, name):
        if not self.quantized:
            return self.f32(name)
        if name not in self.store:
            raise MissingTensorError(f"missing tensor {name!r}")
        entry = self.store[name]
        if entry.shape != self.schema[name].shape:
            raise ShapeError(f"tensor {name!r} has shape {entry.shape}, expected {self.schema[name].shape}")
        if entry.dtype != "i8":
            raise ShapeError(f"tensor {name!r} must be i8 in a quantized store")
        return QuantizedTensor(entry.data, entry.scale)

    def bn(self, prefix):
        """Inference ``(scale, shift)``; INT8 stores carry it folded into the conv."""
        if self.quantized and f"{prefix}.bn.gamma" not in self.store:
            c = self.schema[f"{prefix}.bn.gamma"].shape
            return np.ones(c), np.zeros(c)
        return bn_fold(*(self.f32(f"{prefix}.bn.{k}") for k in ("gamma", "beta", "mean", "var")))

    def conv(self, prefix, mode, stride, use_relu=True):
        act_scale = None
        if self.quantized:
            qname = CALIBRATION_PREFIX + prefix
            if qname not in self.store:
                raise MissingTensorError(f"missing tensor {qname!r}")
            act_scale = float(self.store.array(qname))
        return ConvUnit(prefix, mode, self.weight(f"{prefix}.w"), self.f32(f"{prefix}.b"),
                        *self.bn(prefix), stride, use_relu, act_scale)

    def gru(self, prefix):
        W, U = self.weight(f"{prefix}.W"), self.weight(f"{prefix}.U")
        b_ih, b_hh = self.f32(f"{prefix}.b_ih"), self.f32(f"{prefix}.b_hh")
        if self.quantized:
            return QuantizedGru(W, U, b_ih, b_hh)
        return GruWeights(W, U, b_ih, b_hh)


@dataclass
class Network:
    """Built, immutable TRU-Net. Only :class:`TgruState` crosses frames."""

    config: TrunetConfig
    pcen: PcenParams
    encoder: list[list[ConvUnit]]
    fgru: tuple | None
    tgru: tuple
    decoder: list[tuple[ConvUnit, ConvUnit]]
    quantized: bool = False
    n_params: int = 0

    def new_state(self) -> TgruState:
        return TgruState.zeros(self.config)

    def conv_units(self):
        """Every :class:`ConvUnit` in execution order."""
        for block in self.encoder:
            yield from block
        if self.fgru is not None:
            yield self.fgru[2]
        yield self.tgru[1]
        for pair in self.decoder:
            yield from pair

    def saturation(self, features) -> dict[str, float]:
        """Fraction of each static-scale site's inputs that clip at +-127."""
        if not self.quantized:
            raise ValueError("saturation is only defined for a quantized network")
        scales = {u.name: u.act_scale for u in self.conv_units()}
        counts: dict[str, list[int]] = {}

        def observe(site, x):
            c = counts.setdefault(site, [0, 0])
            c[0] += int(np.count_nonzero(np.abs(x) / scales[site] >= 127.5))
            c[1] += x.size

        self.forward_offline(features, observer=observe)
        return {site: hit / total for site, (hit, total) in counts.items()}

    def encode_frame(self, x, observer=None):
        skips = []
        for block in self.encoder:
            for unit in block:
                x = unit(x, observer)
            skips.append(x)
        return x, skips

    def fgru_block(self, x, observer=None):
        if self.fgru is None:
            return x
        fw, bw, pw = self.fgru
        return pw(bigru_sequence(x, fw, bw), observer)

    def tgru_block(self, x, state: TgruState, observer=None):
        cell, pw = self.tgru
        h = gru_combine(cell.input_proj(x), cell.hidden_proj(state.h), state.h)
        return pw(h, observer), TgruState(h)

    def decode_frame(self, x, skips, observer=None):
        for i, (proj, tconv) in enumerate(self.decoder):
            x = np.concatenate([x, skips[-1 - i]], axis=-1)
            x = tconv(proj(x, observer), observer)
        return x

    def forward_frame(self, features, state: TgruState | None = None):
        """One frame ``(F, 4)`` -> heads ``(F, 10)`` and the new state."""
        features = np.asarray(features, dtype=np.float64)
        expect = (self.config.freq_bins, self.config.input_channels)
        if features.shape != expect:
            raise ShapeError(f"frame features have shape {features.shape}, expected {expect}")
        state = state or self.new_state()
        x, skips = self.encode_frame(features)
        x = self.fgru_block(x)
        x, state = self.tgru_block(x, state)
        return self.decode_frame(x, skips), state

    def forward_offline(self, features, observer=None, state: TgruState | None = None,
                        return_state: bool = False):
        """Whole utterance ``(T, F, 4)`` -> ``(T, F, 10)``.

        Frequency-axis work is batched over frames; the TGRU recursion runs
        frame by frame, so this equals repeated :meth:`forward_frame`.
        """
        features = np.asarray(features, dtype=np.float64)
        expect = (self.config.freq_bins, self.config.input_channels)
        if features.ndim != 3 or features.shape[1:] != expect:
            raise ShapeError(f"features have shape {features.shape}, expected (T, *{expect})")
        x, skips = self.encode_frame(features, observer)
        x = self.fgru_block(x, observer)
        cell, pw = self.tgru
        h = (state or self.new_state()).h
        gi = cell.input_proj(x)
        hs = np.empty((*x.shape[:-1], cell.hidden_size))
        for t in range(len(x)):
            h = gru_combine(gi[t], cell.hidden_proj(h), h)
            hs[t] = h
        out = self.decode_frame(pw(hs, observer), skips, observer)
        return (out, TgruState(h)) if return_state else out


def build(config: TrunetConfig, store: WeightStore) -> Network:
    """Validate ``store`` against the schema for ``config`` and wire the graph."""
    schema = tensor_schema(config)
    ld = _Loader(store, schema)
    pcen = PcenParams(*(ld.f32(f"pcen.{k}") for k in ("s", "alpha", "delta", "r"))).validate()

    encoder = []
    for l, spec in enumerate(config.encoder, start=1):
        if l == 1:
            encoder.append([ld.conv("enc.1.conv", "standard", spec.stride)])
        else:
            encoder.append([ld.conv(f"enc.{l}.pw", "pointwise", 1),
                            ld.conv(f"enc.{l}.dw", "depthwise", spec.stride)])
    fgru = None
    if config.use_fgru:
        fgru = (ld.gru("fgru.fw"), ld.gru("fgru.bw"), ld.conv("fgru.pw", "pointwise", 1))
    tgru = (ld.gru("tgru.cell"), ld.conv("tgru.pw", "pointwise", 1))
    decoder = []
    last = len(config.decoder)
    for i, spec in enumerate(config.decoder, start=1):
        decoder.append((ld.conv(f"dec.{i}.proj", "pointwise", 1),
                        ld.conv(f"dec.{i}.tconv", "transposed", spec.stride, use_relu=i != last)))
    return Network(config, pcen, encoder, fgru, tgru, decoder,
                   quantized=ld.quantized, n_params=parameter_count(store))


def config_for_store(store: WeightStore) -> TrunetConfig:
    """Default topology, with the FGRU block only if the store carries it."""
    return TrunetConfig(use_fgru="fgru.fw.W" in store)


def load_network(store: WeightStore) -> Network:
    return build(config_for_store(store), store)
