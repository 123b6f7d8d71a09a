"""Bit-packed ±1 vectors and XNOR-popcount products.

Element ``i`` of a plane lives in bit ``i % 64`` of word ``i // 64``;
a set bit encodes +1, a clear bit encodes -1. Bits at positions ``>= n``
are always zero.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, ShapeError

WORD_BITS = 64


def n_words(n: int) -> int:
    return -(-n // WORD_BITS)


def tail_mask(n: int) -> np.uint64:
    """Mask of valid bits in the last word of an ``n``-element plane."""
    r = n % WORD_BITS
    return np.uint64(0xFFFFFFFFFFFFFFFF) if r == 0 else np.uint64((1 << r) - 1)


def pack_bits(positive: np.ndarray) -> np.ndarray:
    """Pack a boolean array along its last axis into little-endian uint64 words.

    Leading axes are preserved; the last axis of length ``n`` becomes
    ``ceil(n/64)`` words with zero tail bits.
    """
    positive = np.asarray(positive, dtype=bool)
    n = positive.shape[-1]
    nw = n_words(n)
    pad = nw * WORD_BITS - n
    if pad:
        widths = [(0, 0)] * (positive.ndim - 1) + [(0, pad)]
        positive = np.pad(positive, widths)
    packed = np.packbits(positive, axis=-1, bitorder="little")
    words = np.ascontiguousarray(packed).view("<u8")
    return words.astype(np.uint64, copy=False).reshape(positive.shape[:-1] + (nw,))


def unpack_bits(words: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns booleans of length ``n`` on the last axis."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    as_bytes = words.astype("<u8", copy=False).view(np.uint8)
    bits = np.unpackbits(as_bytes, axis=-1, bitorder="little")
    return bits[..., :n].astype(bool)


class BinaryPlane:
    """Immutable packed ±1 vector of logical length ``n``."""

    __slots__ = ("n", "words")

    def __init__(self, n: int, words):
        n = int(n)
        if n < 1:
            raise ShapeError(f"plane length must be positive, got {n}")
        words = np.array(words, dtype=np.uint64).reshape(-1)
        if words.size != n_words(n):
            raise ShapeError(f"{n} bits need {n_words(n)} words, got {words.size}")
        if words[-1] & ~tail_mask(n):
            raise DomainError("tail bits beyond n must be zero")
        words.setflags(write=False)
        self.n = n
        self.words = words

    @classmethod
    def ones(cls, n: int) -> "BinaryPlane":
        return cls(n, pack_bits(np.ones(n, dtype=bool)))

    def to_signs(self) -> np.ndarray:
        return np.where(unpack_bits(self.words, self.n), 1.0, -1.0).astype(np.float32)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, BinaryPlane):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.n, self.words.tobytes()))

    def __repr__(self):
        return f"BinaryPlane(n={self.n})"


def pack(v) -> BinaryPlane:
    """Pack a vector whose entries are exactly +1.0 or -1.0."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ShapeError("cannot pack an empty vector")
    if not np.all((v == 1.0) | (v == -1.0)):
        raise DomainError("pack expects entries in {-1, +1}")
    return BinaryPlane(v.size, pack_bits(v > 0))


def unpack(plane: BinaryPlane) -> np.ndarray:
    return plane.to_signs()


def xnor_dot(a: BinaryPlane, b: BinaryPlane) -> int:
    """±1 inner product via ``2 * popcount(XNOR & mask) - n``."""
    if a.n != b.n:
        raise ShapeError(f"plane lengths differ: {a.n} vs {b.n}")
    same = ~(a.words ^ b.words)
    same[-1] &= tail_mask(a.n)
    return 2 * int(np.bitwise_count(same).sum(dtype=np.int64)) - a.n


def popcount_gemm(a_words: np.ndarray, b_words: np.ndarray, n: int) -> np.ndarray:
    """Unscaled ±1 products between every row of two packed word matrices.

    ``a_words`` is (m, ceil(n/64)), ``b_words`` is (p, ceil(n/64));
    the result is the exact int64 (m, p) matrix of dot products.
    """
    a = np.ascontiguousarray(a_words, dtype=np.uint64)
    b = np.ascontiguousarray(b_words, dtype=np.uint64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1] or a.shape[1] != n_words(n):
        raise ShapeError(f"word matrices {a.shape} and {b.shape} do not fit length {n}")
    return n - 2 * _kernels.xor_popcount_gemm(a, b)


def _stack_operand(q, role: str):
    """Return (n, scales (count, K), words (count, K, nw)) for a GEMM operand."""
    if hasattr(q, "scales") and hasattr(q, "words") and hasattr(q, "n"):
        return q.n, np.asarray(q.scales, dtype=np.float32), np.asarray(q.words, dtype=np.uint64)
    items = list(q)
    if not items:
        raise ShapeError(f"{role} operand is empty")
    terms = []
    for item in items:
        if isinstance(item, tuple) and len(item) == 2 and isinstance(item[1], BinaryPlane):
            terms.append([item])
        elif hasattr(item, "terms"):
            terms.append(list(item.terms))
        else:
            raise DomainError(f"cannot interpret {type(item).__name__} as a {role} code")
    k = len(terms[0])
    if k == 0 or any(len(t) != k for t in terms):
        raise ShapeError(f"{role} codes must all have the same nonzero order")
    n = terms[0][0][1].n
    if any(plane.n != n for t in terms for _, plane in t):
        raise ShapeError(f"{role} planes have inconsistent lengths")
    scales = np.array([[beta for beta, _ in t] for t in terms], dtype=np.float32)
    words = np.stack([np.stack([plane.words for _, plane in t]) for t in terms])
    return n, scales, words


def binary_gemm(Wq, Xq) -> np.ndarray:
    """Scaled binary matrix product of quantized weights and inputs.

    ``Wq`` holds one code per output row (usually order 1, ``alpha * B``);
    ``Xq`` holds one order-K code per input column. Entry ``(o, c)`` is
    ``alpha_o * sum_i beta_ic * xnor_dot(B_o, H_ic)``. Accepts
    :class:`~horq.quantize.QuantizedMatrix` operands or plain sequences of
    ``(scale, BinaryPlane)`` pairs / HORQ codes.
    """
    n_w, w_scales, w_words = _stack_operand(Wq, "weight")
    n_x, x_scales, x_words = _stack_operand(Xq, "input")
    if n_w != n_x:
        raise ShapeError(f"weight planes have length {n_w} but input planes have {n_x}")
    if w_words.shape[0] == 0 or x_words.shape[0] == 0 or w_words.shape[1] == 0 or x_words.shape[1] == 0:
        raise ShapeError("binary_gemm needs nonempty codes")
    out = _kernels.scaled_binary_gemm(
        np.ascontiguousarray(w_words), np.ascontiguousarray(w_scales),
        np.ascontiguousarray(x_words), np.ascontiguousarray(x_scales), n_w,
    )
    return out.astype(np.float32)
