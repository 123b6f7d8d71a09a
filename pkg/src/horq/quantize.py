"""Order-K residual binary quantization.

A vector ``x`` of length ``n`` is approximated by ``sum_i beta_i * H_i``
where ``H_i = sign(R_{i-1})``, ``beta_i = mean(|R_{i-1}|)``, ``R_0 = x`` and
``R_i = R_{i-1} - beta_i * H_i``. ``sign(0)`` is +1, so once a residual is
exactly zero every later term is ``(0, all +1)``.

Scales are stored as float32; residual arithmetic runs in float64 using the
stored (rounded) scales, so the residual chain is exactly the error of the
stored code.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from os import PathLike
from typing import Sequence

import numpy as np

from .bitplane import BinaryPlane, n_words, pack_bits, tail_mask, unpack_bits
from .errors import DomainError, FormatError, ShapeError

CODE_MAGIC = b"HORQCODE"

ROW = "row"
COLUMN = "column"


@dataclass(frozen=True)
class HORQCode:
    """Ordered ``(beta, plane)`` terms approximating one length-``n`` vector."""

    n: int
    terms: tuple[tuple[float, BinaryPlane], ...]

    def __post_init__(self):
        terms = tuple((float(b), p) for b, p in self.terms)
        if not terms:
            raise ShapeError("a code needs at least one term")
        for beta, plane in terms:
            if not np.isfinite(beta) or beta < 0:
                raise DomainError(f"scale must be finite and nonnegative, got {beta}")
            if plane.n != self.n:
                raise ShapeError(f"plane length {plane.n} differs from code length {self.n}")
        object.__setattr__(self, "terms", terms)

    @property
    def order(self) -> int:
        return len(self.terms)

    @property
    def betas(self) -> list[float]:
        return [b for b, _ in self.terms]

    @property
    def planes(self) -> list[BinaryPlane]:
        return [p for _, p in self.terms]

    # The flat GEMM operand view: one code, K terms.
    @property
    def scales(self) -> np.ndarray:
        return np.array([self.betas], dtype=np.float32)

    @property
    def words(self) -> np.ndarray:
        return np.stack([p.words for p in self.planes])[None]


def _residual_chain(V: np.ndarray, K: int):
    """Quantize every row of ``V`` (count, n) to order ``K``.

    Returns float32 scales (count, K), boolean planes (count, K, n) and the
    squared residual norms (count, K+1) with column 0 equal to ``||x||^2``.
    """
    R = np.array(V, dtype=np.float64)
    count, n = R.shape
    scales = np.empty((count, K), dtype=np.float32)
    positive = np.empty((count, K, n), dtype=bool)
    sq = np.empty((count, K + 1), dtype=np.float64)
    sq[:, 0] = np.einsum("ij,ij->i", R, R)
    for i in range(K):
        pos = R >= 0.0
        beta = np.abs(R).sum(axis=1) / n
        beta32 = beta.astype(np.float32)
        scales[:, i] = beta32
        positive[:, i] = pos
        R -= np.where(pos, 1.0, -1.0) * beta32.astype(np.float64)[:, None]
        sq[:, i + 1] = np.einsum("ij,ij->i", R, R)
    return scales, positive, sq


def _check_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        x = x.reshape(-1)
    if x.size == 0:
        raise ShapeError("cannot quantize an empty vector")
    if not np.all(np.isfinite(x)):
        raise DomainError("input contains NaN or Inf")
    return x


def _check_order(K: int) -> int:
    if int(K) != K or K < 1:
        raise DomainError(f"order K must be an integer >= 1, got {K}")
    return int(K)


def quantize_first_order(x) -> tuple[float, BinaryPlane]:
    """Best single-term approximation: ``(mean|x|, sign(x))``."""
    code = quantize_horq(x, 1)
    return code.terms[0]


def residual(x, beta: float, plane: BinaryPlane) -> np.ndarray:
    x = _check_vector(x)
    if x.size != plane.n:
        raise ShapeError(f"vector length {x.size} differs from plane length {plane.n}")
    return x - np.float64(np.float32(beta)) * plane.to_signs().astype(np.float64)


def quantize_horq(x, K: int) -> HORQCode:
    x = _check_vector(x)
    K = _check_order(K)
    scales, positive, _ = _residual_chain(x[None, :], K)
    words = pack_bits(positive[0])
    terms = tuple((float(scales[0, i]), BinaryPlane(x.size, words[i])) for i in range(K))
    return HORQCode(x.size, terms)


def residual_norms(x, K: int) -> np.ndarray:
    """Squared norms ``||R_0||^2 .. ||R_K||^2`` of the residual chain (float64)."""
    x = _check_vector(x)
    _, _, sq = _residual_chain(x[None, :], _check_order(K))
    return sq[0]


def reconstruct(code: HORQCode) -> np.ndarray:
    out = np.zeros(code.n, dtype=np.float64)
    for beta, plane in code.terms:
        out += beta * plane.to_signs().astype(np.float64)
    return out


@dataclass(frozen=True, eq=False)
class QuantizedMatrix:
    """Per-row or per-column HORQ codes of a matrix, stored flat.

    ``scales`` is (count, K) float32 and ``words`` is (count, K, ceil(n/64))
    uint64, where ``count`` is the number of rows (per-row) or columns
    (per-column) and ``n`` the length of each coded vector. ``residual_sq``
    holds ``||R_0||^2 .. ||R_K||^2`` for each code.
    """

    orientation: str
    rows: int
    cols: int
    scales: np.ndarray
    words: np.ndarray
    residual_sq: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.cols if self.orientation == ROW else self.rows

    @property
    def count(self) -> int:
        return self.scales.shape[0]

    @property
    def order(self) -> int:
        return self.scales.shape[1]

    @property
    def codes(self) -> list[HORQCode]:
        n = self.n
        return [
            HORQCode(n, tuple((float(self.scales[c, i]), BinaryPlane(n, self.words[c, i]))
                              for i in range(self.order)))
            for c in range(self.count)
        ]

    def signs(self) -> np.ndarray:
        """±1 planes as float64, shape (count, K, n)."""
        return np.where(unpack_bits(self.words, self.n), 1.0, -1.0)

    def reconstruct_codes(self, orders=None) -> np.ndarray:
        """Reconstructed vectors (count, n); ``orders`` selects which terms to sum."""
        sel = slice(None) if orders is None else list(orders)
        s = self.scales.astype(np.float64)[:, sel]
        return np.einsum("ck,ckn->cn", s, self.signs()[:, sel])

    def reconstruct(self) -> np.ndarray:
        """The approximated matrix, shape (rows, cols)."""
        v = self.reconstruct_codes()
        return v if self.orientation == ROW else v.T

    def select_orders(self, orders: Sequence[int]) -> "QuantizedMatrix":
        """A view keeping only the given term indices (0-based)."""
        idx = list(orders)
        return QuantizedMatrix(self.orientation, self.rows, self.cols,
                               np.ascontiguousarray(self.scales[:, idx]),
                               np.ascontiguousarray(self.words[:, idx]),
                               self.residual_sq)

    def relative_residual(self) -> float:
        """``sum ||R_K||^2 / sum ||X||^2`` over all codes (0 for an all-zero source)."""
        total = float(self.residual_sq[:, 0].sum())
        return float(self.residual_sq[:, -1].sum()) / total if total > 0 else 0.0


def quantize_matrix(M, K: int, orientation: str) -> QuantizedMatrix:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise ShapeError(f"expected a nonempty matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError("matrix contains NaN or Inf")
    K = _check_order(K)
    if orientation == ROW:
        V = M
    elif orientation == COLUMN:
        V = M.T
    else:
        raise DomainError(f"orientation must be {ROW!r} or {COLUMN!r}, got {orientation!r}")
    scales, positive, sq = _residual_chain(V, K)
    words = pack_bits(positive)
    return QuantizedMatrix(orientation, M.shape[0], M.shape[1], scales, words, sq)


def quantize_weights(W_r) -> QuantizedMatrix:
    """One ``alpha * sign`` code per filter row."""
    return quantize_matrix(W_r, 1, ROW)


def quantize_input(X_r, K: int) -> QuantizedMatrix:
    """One order-K code per column (receptive-field patch)."""
    return quantize_matrix(X_r, K, COLUMN)


# -- code files ---------------------------------------------------------------

def code_to_bytes(code: HORQCode) -> bytes:
    out = [CODE_MAGIC, struct.pack("<II", code.n, code.order)]
    for beta, plane in code.terms:
        out.append(struct.pack("<f", beta))
        out.append(plane.words.astype("<u8").tobytes())
    return b"".join(out)


def code_from_bytes(buf: bytes) -> HORQCode:
    if len(buf) < 16 or buf[:8] != CODE_MAGIC:
        raise FormatError("not a HORQ code file (bad magic)")
    n, K = struct.unpack_from("<II", buf, 8)
    if n == 0 or K == 0:
        raise FormatError(f"invalid code header n={n} K={K}")
    nw = n_words(n)
    term_bytes = 4 + 8 * nw
    if len(buf) != 16 + K * term_bytes:
        raise FormatError(f"code payload is {len(buf) - 16} bytes, expected {K * term_bytes}")
    terms = []
    offset = 16
    for _ in range(K):
        (beta,) = struct.unpack_from("<f", buf, offset)
        words = np.frombuffer(buf, dtype="<u8", count=nw, offset=offset + 4)
        if words[-1] & ~tail_mask(n):
            raise FormatError("nonzero tail bits in plane")
        if not np.isfinite(beta) or beta < 0:
            raise FormatError(f"invalid scale {beta}")
        terms.append((beta, BinaryPlane(n, words)))
        offset += term_bytes
    return HORQCode(n, tuple(terms))


def save_code(path: str | PathLike, code: HORQCode) -> None:
    with open(path, "wb") as fh:
        fh.write(code_to_bytes(code))


def load_code(path: str | PathLike) -> HORQCode:
    with open(path, "rb") as fh:
        return code_from_bytes(fh.read())
