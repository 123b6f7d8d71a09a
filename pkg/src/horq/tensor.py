"""Dense float32 tensors, convolution geometry and the im2col reshape.

Axis convention: inputs are ``(c_in, w_in, h_in)`` and filters are
``(c_out, c_in, w, h)``. Every flattening (filters, patches, output
positions) is row-major over those axes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from os import PathLike
from typing import Union

import numpy as np

from .errors import DomainError, FormatError, ShapeError

TENSOR_MAGIC = b"HORQTNSR"
MAX_RANK = 4


class Tensor:
    """Immutable float32 array of rank 1-4 with only finite entries."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float32, copy=True)
        if not 1 <= arr.ndim <= MAX_RANK:
            raise ShapeError(f"tensor rank must be 1..{MAX_RANK}, got {arr.ndim}")
        if any(d <= 0 for d in arr.shape):
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError("tensor contains NaN or Inf")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def rank(self) -> int:
        return self._data.ndim

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.shape == other.shape and self._data.tobytes() == other._data.tobytes()

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


ArrayLike = Union[Tensor, np.ndarray]


def _as_array(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)


@dataclass(frozen=True)
class ConvGeometry:
    """Convolution hyper-parameters bound to a concrete input size.

    ``w_out`` and ``h_out`` are derived; construction fails when the padded
    extent minus the filter extent is negative or not divisible by the stride.
    """

    c_in: int
    c_out: int
    w: int
    h: int
    w_in: int
    h_in: int
    s: int = 1
    p: int = 0
    w_out: int = field(init=False)
    h_out: int = field(init=False)

    def __post_init__(self):
        for name in ("c_in", "c_out", "w", "h", "w_in", "h_in", "s"):
            if int(getattr(self, name)) < 1:
                raise ShapeError(f"{name} must be positive, got {getattr(self, name)}")
        if self.p < 0:
            raise ShapeError(f"pad must be nonnegative, got {self.p}")
        object.__setattr__(self, "w_out", _out_extent(self.w_in, self.w, self.s, self.p, "width"))
        object.__setattr__(self, "h_out", _out_extent(self.h_in, self.h, self.s, self.p, "height"))

    @classmethod
    def for_operands(cls, x_shape, w_shape, stride: int = 1, pad: int = 0) -> "ConvGeometry":
        if len(x_shape) != 3:
            raise ShapeError(f"input must be rank 3 (c_in, w_in, h_in), got shape {tuple(x_shape)}")
        if len(w_shape) != 4:
            raise ShapeError(f"weights must be rank 4 (c_out, c_in, w, h), got shape {tuple(w_shape)}")
        if x_shape[0] != w_shape[1]:
            raise ShapeError(f"input has {x_shape[0]} channels but filters expect {w_shape[1]}")
        c_out, c_in, w, h = (int(d) for d in w_shape)
        return cls(c_in=c_in, c_out=c_out, w=w, h=h,
                   w_in=int(x_shape[1]), h_in=int(x_shape[2]), s=stride, p=pad)

    @property
    def patch_size(self) -> int:
        return self.c_in * self.w * self.h

    @property
    def n_positions(self) -> int:
        return self.w_out * self.h_out

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.c_in, self.w_in, self.h_in)

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.c_out, self.c_in, self.w, self.h)

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return (self.c_out, self.w_out, self.h_out)


def _out_extent(n_in: int, k: int, s: int, p: int, axis: str) -> int:
    span = n_in + 2 * p - k
    if span < 0:
        raise ShapeError(f"filter {axis} {k} exceeds padded input {axis} {n_in + 2 * p}")
    if span % s:
        raise ShapeError(
            f"(n_in + 2p - k) = {span} along {axis} is not divisible by stride {s}"
        )
    return span // s + 1


def reshape_weight(W: ArrayLike) -> np.ndarray:
    """Flatten each filter into one row: ``(c_out, c_in*w*h)``."""
    arr = _as_array(W)
    if arr.ndim != 4:
        raise ShapeError(f"weights must be rank 4, got shape {arr.shape}")
    return arr.reshape(arr.shape[0], -1).copy()


def im2col(X: ArrayLike, g: ConvGeometry) -> np.ndarray:
    """Stack receptive-field patches as columns.

    Returns a ``(c_in*w*h, w_out*h_out)`` float32 matrix. Column ``j``
    holds the patch for output position ``(j // h_out, j % h_out)``;
    positions falling in the padding read as 0.0.
    """
    arr = _as_array(X)
    if arr.shape != g.input_shape:
        raise ShapeError(f"input shape {arr.shape} does not match geometry {g.input_shape}")
    p, s = g.p, g.s
    padded = np.pad(arr, ((0, 0), (p, p), (p, p)), mode="constant", constant_values=0.0)
    cols = np.empty((g.c_in, g.w, g.h, g.w_out, g.h_out), dtype=np.float32)
    for i in range(g.w):
        i_stop = i + s * g.w_out
        for j in range(g.h):
            j_stop = j + s * g.h_out
            cols[:, i, j] = padded[:, i:i_stop:s, j:j_stop:s]
    return cols.reshape(g.patch_size, g.n_positions)


def reshape_output(Y_r: np.ndarray, g: ConvGeometry) -> Tensor:
    """Inverse of the output flattening: ``(c_out, w_out*h_out)`` to ``(c_out, w_out, h_out)``."""
    arr = np.asarray(Y_r, dtype=np.float32)
    if arr.shape != (g.c_out, g.n_positions):
        raise ShapeError(
            f"output matrix shape {arr.shape} does not match geometry "
            f"({g.c_out}, {g.n_positions})"
        )
    return Tensor(arr.reshape(g.output_shape))


# -- file I/O ---------------------------------------------------------------

def tensor_to_bytes(t: Tensor) -> bytes:
    header = TENSOR_MAGIC + struct.pack(f"<I{t.rank}I", t.rank, *t.shape)
    return header + t.data.astype("<f4", copy=False).tobytes()


def tensor_from_bytes(buf: bytes) -> Tensor:
    if len(buf) < 12 or buf[:8] != TENSOR_MAGIC:
        raise FormatError("not a tensor file (bad magic)")
    (rank,) = struct.unpack_from("<I", buf, 8)
    if not 1 <= rank <= MAX_RANK:
        raise FormatError(f"tensor rank {rank} outside 1..{MAX_RANK}")
    offset = 12 + 4 * rank
    if len(buf) < offset:
        raise FormatError("truncated tensor header")
    dims = struct.unpack_from(f"<{rank}I", buf, 12)
    if any(d == 0 for d in dims):
        raise FormatError(f"zero-length dimension in {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) != offset + 4 * count:
        raise FormatError(
            f"payload is {len(buf) - offset} bytes, expected {4 * count} for dims {dims}"
        )
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset).reshape(dims)
    if not np.all(np.isfinite(data)):
        raise FormatError("tensor payload contains NaN or Inf")
    return Tensor(data)


def save_tensor(path: str | PathLike, t: Tensor) -> None:
    if not isinstance(t, Tensor):
        t = Tensor(t)
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def load_tensor(path: str | PathLike) -> Tensor:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())
