"""Named-tensor container and the TRUW weight file format.

Layout (little-endian, no padding)::

    b"TRUW"  u32 version=1  u32 tensor_count
    per tensor:
        u16 name_len, name (UTF-8), u8 dtype (0=f32, 1=i8), u8 ndim,
        u32 dims[ndim], f64 scale (only when dtype == 1), raw data
"""

from __future__ import annotations

import struct
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from trunet.errors import (
    BadMagicError,
    BadVersionError,
    DuplicateNameError,
    MissingTensorError,
    TruncatedError,
    WeightFormatError,
)

MAGIC = b"TRUW"
VERSION = 1
DTYPE_CODES = {"f32": 0, "i8": 1}
CODE_DTYPES = {0: "f32", 1: "i8"}
NP_DTYPES = {"f32": np.dtype("<f4"), "i8": np.dtype("i1")}
CALIBRATION_PREFIX = "qscale."


@dataclass(frozen=True)
class TensorEntry:
    data: np.ndarray
    scale: float | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype == np.int8:
            if self.scale is None or not self.scale > 0:
                raise ValueError("i8 tensors need a positive scale")
            data = data.astype(NP_DTYPES["i8"])
        else:
            if self.scale is not None:
                raise ValueError("only i8 tensors carry a scale")
            data = data.astype(NP_DTYPES["f32"])
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dtype(self) -> str:
        return "i8" if self.data.dtype == np.int8 else "f32"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def dequantized(self) -> np.ndarray:
        out = self.data.astype(np.float64)
        return out * self.scale if self.scale is not None else out


class WeightStore(Mapping):
    """Immutable name -> :class:`TensorEntry` mapping (insertion ordered)."""

    def __init__(self, entries: Iterable[tuple[str, TensorEntry]] | Mapping = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        table: dict[str, TensorEntry] = {}
        for name, entry in items:
            if name in table:
                raise DuplicateNameError(f"duplicate tensor name {name!r}")
            if not isinstance(entry, TensorEntry):
                entry = TensorEntry(entry)
            table[name] = entry
        self._entries = MappingProxyType(table)

    def __getitem__(self, name: str) -> TensorEntry:
        try:
            return self._entries[name]
        except KeyError:
            raise MissingTensorError(f"missing tensor {name!r}") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self):
        return f"WeightStore({len(self)} tensors, {parameter_count(self)} parameters)"

    @property
    def is_quantized(self) -> bool:
        return any(e.dtype == "i8" for e in self._entries.values())

    def array(self, name: str) -> np.ndarray:
        """Float64 value of a tensor, dequantized if stored as i8."""
        return self[name].dequantized()

    def replace(self, updates: Mapping[str, TensorEntry], drop: Iterable[str] = ()):
        """New store with ``updates`` applied and ``drop`` names removed."""
        drop = set(drop)
        table = {k: v for k, v in self._entries.items() if k not in drop}
        table.update({k: v if isinstance(v, TensorEntry) else TensorEntry(v)
                      for k, v in updates.items()})
        return WeightStore(table)


def parameter_count(store: Mapping[str, TensorEntry]) -> int:
    return sum(e.data.size for name, e in store.items()
               if not name.startswith(CALIBRATION_PREFIX))


def save_weights(store: WeightStore) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, entry in store.items():
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise WeightFormatError(f"tensor name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", DTYPE_CODES[entry.dtype], entry.data.ndim))
        parts.append(struct.pack(f"<{entry.data.ndim}I", *entry.shape))
        if entry.dtype == "i8":
            parts.append(struct.pack("<d", entry.scale))
        parts.append(np.ascontiguousarray(entry.data).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = memoryview(buf)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"truncated weight file while reading {what} at byte {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_weights(buf: bytes) -> WeightStore:
    rd = _Reader(buf)
    if len(buf) < 4 or bytes(buf[:4]) != MAGIC:
        raise BadMagicError("bad magic: not a TRUW weight file")
    rd.pos = 4
    version, count = rd.unpack("<II", "header")
    if version != VERSION:
        raise BadVersionError(f"unsupported TRUW version {version} (expected {VERSION})")
    entries = []
    seen = set()
    for i in range(count):
        (name_len,) = rd.unpack("<H", f"tensor {i} name length")
        try:
            name = bytes(rd.take(name_len, f"tensor {i} name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFormatError(f"tensor {i} name is not UTF-8") from exc
        if name in seen:
            raise DuplicateNameError(f"duplicate tensor name {name!r}")
        seen.add(name)
        code, ndim = rd.unpack("<BB", f"{name} dtype")
        if code not in CODE_DTYPES:
            raise WeightFormatError(f"{name}: unknown dtype code {code}")
        dtype = CODE_DTYPES[code]
        dims = rd.unpack(f"<{ndim}I", f"{name} dims")
        scale = rd.unpack("<d", f"{name} scale")[0] if dtype == "i8" else None
        if scale is not None and not scale > 0:
            raise WeightFormatError(f"{name}: i8 scale must be positive, got {scale}")
        npdt = NP_DTYPES[dtype]
        n = int(np.prod(dims, dtype=np.int64))
        raw = rd.take(n * npdt.itemsize, f"{name} data")
        data = np.frombuffer(raw, dtype=npdt).reshape(dims)
        entries.append((name, TensorEntry(data, scale)))
    if rd.pos != len(buf):
        raise WeightFormatError(f"{len(buf) - rd.pos} trailing bytes after last tensor")
    return WeightStore(entries)


def read_weights_file(path) -> WeightStore:
    with open(path, "rb") as fh:
        return load_weights(fh.read())


def write_weights_file(path, store: WeightStore) -> int:
    data = save_weights(store)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


@dataclass(frozen=True)
class TensorSpec:
    """Schema entry: shape plus how :func:`init_store` fills it."""

    shape: tuple[int, ...]
    init: str = "uniform"  # "uniform" (needs fan_in) or "const"
    fan_in: int | None = None
    value: float = 0.0


def init_store(schema: Mapping[str, TensorSpec], seed: int) -> WeightStore:
    """Deterministic test initialisation: U(-k, k), k = 1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    entries = []
    for name, spec in schema.items():
        if spec.init == "uniform":
            k = 1.0 / np.sqrt(spec.fan_in)
            data = rng.uniform(-k, k, size=spec.shape)
        elif spec.init == "const":
            data = np.full(spec.shape, spec.value)
        else:
            raise ValueError(f"{name}: unknown init {spec.init!r}")
        entries.append((name, TensorEntry(data.astype(np.float32))))
    return WeightStore(entries)
