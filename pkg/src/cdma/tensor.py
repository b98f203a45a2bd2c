"""Activation tensors, memory layouts and density statistics.

A tensor is stored as a flat array of 32-bit words (the IEEE-754 bit
patterns of single precision activations).  The layout name lists the
dimensions from outermost to innermost, so ``NCHW`` iterates ``W``
fastest.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence, Tuple

import numpy as np

from .errors import FormatError, InvalidInputError

WORD = np.dtype("<u4")
WORD_BYTES = 4

TENSOR_MAGIC = b"CDMA"
TENSOR_VERSION = 1
DTYPE_F32 = 0
_TENSOR_HEADER = struct.Struct("<4sHBB4I")


class Layout(enum.IntEnum):
    NCHW = 0
    NHWC = 1
    CHWN = 2

    @classmethod
    def parse(cls, name) -> "Layout":
        if isinstance(name, Layout):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise InvalidInputError(f"unknown layout {name!r}") from None


def as_words(data) -> np.ndarray:
    """Coerce bytes, float32 or uint32 data to a flat little-endian word array."""
    if isinstance(data, (bytes, bytearray, memoryview)):
        if len(data) % WORD_BYTES:
            raise InvalidInputError("byte length is not a multiple of 4")
        return np.frombuffer(data, dtype=WORD)
    arr = np.asarray(data)
    if arr.dtype == np.float32:
        arr = arr.view(np.uint32)
    elif arr.dtype.kind in "iu" and arr.dtype.itemsize != 4:
        arr = arr.astype(np.uint32)
    elif arr.dtype.kind == "i":
        arr = arr.view(np.uint32)
    elif arr.dtype.kind != "u":
        raise InvalidInputError(f"cannot interpret dtype {arr.dtype} as 32-bit words")
    return np.ascontiguousarray(arr.reshape(-1), dtype=WORD)


@dataclass(frozen=True, eq=False)
class ActivationTensor:
    """4D activation map; ``data`` holds raw words in ``layout`` order."""

    n: int
    c: int
    h: int
    w: int
    layout: Layout
    data: np.ndarray

    def __post_init__(self):
        for name in "nchw":
            if int(getattr(self, name)) < 0:
                raise InvalidInputError(f"negative dimension {name}")
        object.__setattr__(self, "layout", Layout.parse(self.layout))
        words = as_words(self.data)
        if words.size != self.n * self.c * self.h * self.w:
            raise InvalidInputError(
                f"data has {words.size} words, dims {self.dims} need {self.size}")
        if words.flags.writeable:
            words = words.copy()
            words.setflags(write=False)
        object.__setattr__(self, "data", words)

    @classmethod
    def from_array(cls, arr, layout=Layout.NCHW) -> "ActivationTensor":
        """Build from a 4D array whose axes follow ``layout``."""
        layout = Layout.parse(layout)
        arr = np.asarray(arr)
        if arr.ndim != 4:
            raise InvalidInputError("expected a 4D array")
        dims = dict(zip(layout.name, arr.shape))
        return cls(dims["N"], dims["C"], dims["H"], dims["W"], layout, as_words(arr))

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        return (self.n, self.c, self.h, self.w)

    @property
    def size(self) -> int:
        return self.n * self.c * self.h * self.w

    @property
    def nbytes(self) -> int:
        return self.size * WORD_BYTES

    @property
    def shape(self) -> Tuple[int, ...]:
        """Array shape in storage order."""
        d = dict(zip("NCHW", self.dims))
        return tuple(d[ch] for ch in self.layout.name)

    def as_array(self) -> np.ndarray:
        """Word array shaped in storage order (read-only view)."""
        return self.data.reshape(self.shape)

    @property
    def values(self) -> np.ndarray:
        return self.data.view(np.float32)

    def at(self, n: int, c: int, h: int, w: int) -> int:
        """Word at logical index (n, c, h, w)."""
        idx = dict(N=n, C=c, H=h, W=w)
        return int(self.as_array()[tuple(idx[ch] for ch in self.layout.name)])

    def __eq__(self, other):
        if not isinstance(other, ActivationTensor):
            return NotImplemented
        return (self.dims == other.dims and self.layout == other.layout
                and np.array_equal(self.data, other.data))

    __hash__ = None


def permute_layout(t: ActivationTensor, target) -> ActivationTensor:
    target = Layout.parse(target)
    if target == t.layout:
        return t
    src = t.layout.name
    axes = [src.index(ch) for ch in target.name]
    data = np.ascontiguousarray(t.as_array().transpose(axes)).reshape(-1)
    return ActivationTensor(t.n, t.c, t.h, t.w, target, data)


@dataclass(frozen=True)
class DensityStats:
    nonzero_count: int
    total_count: int

    @property
    def density(self) -> float:
        if self.total_count == 0:
            return 0.0
        return self.nonzero_count / self.total_count

    @property
    def sparsity(self) -> float:
        return 1.0 - self.density


def density(t) -> DensityStats:
    """Count words whose bit pattern is nonzero (-0.0 counts as nonzero)."""
    words = t.data if isinstance(t, ActivationTensor) else as_words(t)
    return DensityStats(int(np.count_nonzero(words)), int(words.size))


def weighted_network_sparsity(layers: Iterable[Tuple[DensityStats, int]]) -> float:
    """Network-wide sparsity with each layer weighted by its activation bytes."""
    layers = list(layers)
    if not layers:
        raise InvalidInputError("cannot aggregate sparsity over zero layers")
    num = 0.0
    den = 0
    for stats, nbytes in layers:
        if nbytes <= 0:
            raise InvalidInputError("layer byte size must be positive")
        num += stats.sparsity * nbytes
        den += nbytes
    return num / den


# -- binary tensor file -----------------------------------------------------

def dump_tensor(t: ActivationTensor) -> bytes:
    header = _TENSOR_HEADER.pack(TENSOR_MAGIC, TENSOR_VERSION, DTYPE_F32,
                                 int(t.layout), t.n, t.c, t.h, t.w)
    return header + t.data.tobytes()


def load_tensor(buf: bytes) -> ActivationTensor:
    if len(buf) < _TENSOR_HEADER.size:
        raise FormatError("tensor file shorter than its header")
    magic, version, dtype, layout, n, c, h, w = _TENSOR_HEADER.unpack_from(buf)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    if version != TENSOR_VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    if dtype != DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype}")
    if layout not in Layout._value2member_map_:
        raise FormatError(f"unknown layout code {layout}")
    body = memoryview(buf)[_TENSOR_HEADER.size:]
    if len(body) != n * c * h * w * WORD_BYTES:
        raise FormatError(
            f"tensor data is {len(body)} bytes, header dims need {n * c * h * w * WORD_BYTES}")
    return ActivationTensor(n, c, h, w, Layout(layout), np.frombuffer(body, dtype=WORD))


def write_tensor(f: BinaryIO, t: ActivationTensor) -> None:
    f.write(dump_tensor(t))


def read_tensor(f: BinaryIO) -> ActivationTensor:
    return load_tensor(f.read())


def parse_dims(text: str) -> Tuple[int, int, int, int]:
    parts = [p for p in text.replace("x", ",").split(",") if p.strip()]
    if len(parts) != 4:
        raise InvalidInputError(f"expected N,C,H,W, got {text!r}")
    try:
        dims = tuple(int(p) for p in parts)
    except ValueError:
        raise InvalidInputError(f"non-integer dimension in {text!r}") from None
    if any(d <= 0 for d in dims):
        raise InvalidInputError("dimensions must be positive")
    return dims  # type: ignore[return-value]


def dims_in_layout(dims: Sequence[int], layout: Layout) -> Tuple[int, ...]:
    d = dict(zip("NCHW", dims))
    return tuple(d[ch] for ch in Layout.parse(layout).name)
