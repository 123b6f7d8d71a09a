"""Analytical speedup and storage models, plus a GEMM micro-benchmark."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

# Published speedups for orders 1-4; the layer configuration behind them is not stated.
PUBLISHED_SPEEDUPS = {1: 58.0, 2: 30.0, 3: 20.0, 4: 15.0}
PUBLISHED_NOTE = (
    "published reference values (58/30/20/15) come from an unstated configuration; "
    "the closed form at c_in=64, c_out=256, 3x3 gives 63.94/31.98/21.32/15.99"
)


@dataclass(frozen=True)
class SpeedupQuery:
    c_in: int
    c_out: int
    w: int
    h: int
    K: int = 2
    word_width: int = 64

    def __post_init__(self):
        for name in ("c_in", "c_out", "w", "h", "K", "word_width"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v}")


def speedup_ratio(q: SpeedupQuery) -> float:
    """``word_width * N / (K * N + word_width * (K + 1))`` with ``N = c_out * c_in * w * h``."""
    n = q.c_out * q.c_in * q.w * q.h
    return q.word_width * n / (q.K * n + q.word_width * (q.K + 1))


def operation_counts(q: SpeedupQuery, w_in: int, h_in: int) -> tuple[float, float]:
    """Cost of the float layer vs. the order-K binary layer, in float-op equivalents.

    Float: ``N_p = c_out*c_in*w*h*w_in*h_in`` multiply-accumulates. Binary:
    ``K*N_p`` bit operations at ``word_width`` per cycle plus ``(K+1)*w_in*h_in``
    float operations.
    """
    n_p = q.c_out * q.c_in * q.w * q.h * w_in * h_in
    n_n = w_in * h_in
    return float(n_p), q.K * n_p / q.word_width + (q.K + 1) * n_n


SWEEPABLE = ("K", "c_in", "c_out", "w", "h", "wh", "word_width")


def sweep(param: str, values: Iterable[int], base: SpeedupQuery) -> list[tuple[int, float]]:
    """Evaluate the speedup with one parameter varied; returns ``(value, eta)`` rows.

    ``param="wh"`` varies a square filter (``w = h = value``).
    """
    values = list(values)
    if not values:
        raise ConfigError("sweep range is empty")
    if param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {param!r}; choose one of {SWEEPABLE}")
    rows = []
    for v in values:
        q = replace(base, w=v, h=v) if param == "wh" else replace(base, **{param: v})
        rows.append((v, speedup_ratio(q)))
    return rows


def standard_sweeps(kmax: int = 6, max_filter: int = 11, max_channels: int = 512) -> dict:
    """The three standard sweeps: filter size, output channels and order.

    Filter size runs at ``c_in = c_out = 10`` with K=2; output channels at
    3x3 filters with ``c_in = 3``; order at ``c_in=64, c_out=256, 3x3``.
    """
    return {
        "filter_size": sweep("wh", range(1, max_filter + 1), SpeedupQuery(10, 10, 1, 1, K=2)),
        "output_channels": sweep("c_out", [2 ** i for i in range(int(math.log2(max_channels)) + 1)],
                                 SpeedupQuery(3, 1, 3, 3, K=2)),
        "order": sweep("K", range(1, kmax + 1), SpeedupQuery(64, 256, 3, 3)),
    }


@dataclass(frozen=True)
class LayerStorage:
    rows: int
    cols: int
    binarized: bool

    @property
    def params(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class StorageReport:
    float_bytes: int
    binary_bytes: int

    @property
    def ratio(self) -> float:
        return self.float_bytes / self.binary_bytes


def parse_layer(spec: str) -> tuple[int, int]:
    """``"256x1152"`` -> (256, 1152); a bare count ``"N"`` is one row of N weights."""
    spec = spec.strip().lower()
    try:
        if "x" in spec:
            r, c = spec.split("x", 1)
            shape = int(r), int(c)
        else:
            shape = 1, int(spec)
    except ValueError:
        raise ConfigError(f"cannot parse layer size {spec!r}") from None
    if min(shape) < 1:
        raise ConfigError(f"layer size must be positive, got {spec!r}")
    return shape


def storage_model(layers: Sequence[tuple[int, int]], binarized: Sequence[bool]) -> StorageReport:
    """Bytes needed for float32 weights vs. sign bits plus one float32 scale per row.

    ``layers`` lists ``(rows, cols)`` per layer; non-binarized layers stay float32.
    """
    if len(layers) != len(binarized):
        raise ShapeError(f"{len(layers)} layers but {len(binarized)} binarize flags")
    float_bytes = 0
    binary_bytes = 0
    for (rows, cols), flag in zip(layers, binarized):
        if rows < 1 or cols < 1:
            raise DomainError(f"layer size must be positive, got {rows}x{cols}")
        params = rows * cols
        float_bytes += 4 * params
        binary_bytes += (-(-params // 8) + 4 * rows) if flag else 4 * params
    return StorageReport(float_bytes, binary_bytes)


# -- micro-benchmark ----------------------------------------------------------

@dataclass(frozen=True)
class BenchResult:
    m: int
    n: int
    k: int
    order: int
    reps: int
    float_seconds: float
    binary_seconds: float
    pack_seconds: float
    model_speedup: float

    @property
    def measured_speedup(self) -> float:
        return self.float_seconds / self.binary_seconds

    def as_row(self) -> dict:
        return {
            "m": self.m, "n": self.n, "k": self.k, "order": self.order, "reps": self.reps,
            "float_s": f"{self.float_seconds:.6f}", "binary_s": f"{self.binary_seconds:.6f}",
            "pack_s": f"{self.pack_seconds:.6f}",
            "measured_speedup": f"{self.measured_speedup:.4f}",
            "model_speedup": f"{self.model_speedup:.4f}",
        }


def _median_time(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_gemm(m: int, n: int, k: int, K: int = 1, reps: int = 3, seed: int = 0) -> BenchResult:
    """Time float32 ``(m, k) @ (k, n)`` against the packed order-K binary product.

    Both paths run on one thread. The binary time covers the GEMM on
    pre-quantized operands; quantize-and-pack time is reported separately.
    """
    from threadpoolctl import threadpool_limits

    from .bitplane import binary_gemm
    from .quantize import quantize_input, quantize_weights

    if min(m, n, k, K, reps) < 1:
        raise DomainError("benchmark dimensions, order and reps must be positive")
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((m, k), dtype=np.float32)
    X = rng.standard_normal((k, n), dtype=np.float32)

    t0 = time.perf_counter()
    Wq = quantize_weights(W)
    Xq = quantize_input(X, K)
    pack_seconds = time.perf_counter() - t0

    # compile the kernel outside the timed region
    binary_gemm(quantize_weights(W[:1, :8]), quantize_input(X[:8, :1], K))
    with threadpool_limits(limits=1):
        float_s = _median_time(lambda: W @ X, reps)
        binary_s = _median_time(lambda: binary_gemm(Wq, Xq), reps)
    model = speedup_ratio(SpeedupQuery(c_in=k, c_out=m, w=1, h=1, K=K))
    return BenchResult(m, n, k, K, reps, float_s, binary_s, pack_seconds, model)
