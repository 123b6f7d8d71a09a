"""Binary convolution and fully-connected layers on HORQ-quantized operands."""

from __future__ import annotations

import numpy as np

from .bitplane import binary_gemm
from .errors import ShapeError
from .quantize import QuantizedMatrix, quantize_input, quantize_weights
from .tensor import ConvGeometry, Tensor, _as_array, im2col, reshape_output, reshape_weight


def _geometry(X: np.ndarray, W: np.ndarray, g: ConvGeometry | None,
              stride: int, pad: int) -> ConvGeometry:
    if g is None:
        return ConvGeometry.for_operands(X.shape, W.shape, stride=stride, pad=pad)
    if X.shape != g.input_shape:
        raise ShapeError(f"input shape {X.shape} does not match geometry {g.input_shape}")
    if W.shape != g.weight_shape:
        raise ShapeError(f"weight shape {W.shape} does not match geometry {g.weight_shape}")
    return g


def quantize_conv_operands(X, W, g: ConvGeometry, K: int) -> tuple[QuantizedMatrix, QuantizedMatrix]:
    """Reshape and quantize: per-row weights (order 1), per-patch inputs (order K)."""
    Wq = quantize_weights(reshape_weight(W))
    Xq = quantize_input(im2col(X, g), K)
    return Wq, Xq


def conv_horq(X, W, g: ConvGeometry | None = None, K: int = 2, *,
              stride: int = 1, pad: int = 0) -> Tensor:
    """Order-K binary convolution.

    Computes ``reshape_output(binary_gemm(quantize_weights(W_r), quantize_input(X_r, K)))``
    with ``W_r = reshape_weight(W)`` and ``X_r = im2col(X, g)``. When ``g`` is
    omitted it is derived from the operand shapes with ``stride`` and ``pad``.
    """
    X, W = _as_array(X), _as_array(W)
    g = _geometry(X, W, g, stride, pad)
    Wq, Xq = quantize_conv_operands(X, W, g, K)
    return reshape_output(binary_gemm(Wq, Xq), g)


def conv_float(X, W, g: ConvGeometry | None = None, *, stride: int = 1, pad: int = 0) -> Tensor:
    """Direct-loop float convolution (cross-correlation), accumulated in float64.

    Independent of :func:`im2col`; used as the ground truth for the binary path.
    """
    X = np.asarray(_as_array(X), dtype=np.float64)
    W = np.asarray(_as_array(W), dtype=np.float64)
    g = _geometry(X, W, g, stride, pad)
    Y = np.zeros(g.output_shape, dtype=np.float64)
    for o in range(g.c_out):
        for oy in range(g.w_out):
            for ox in range(g.h_out):
                acc = 0.0
                for c in range(g.c_in):
                    for i in range(g.w):
                        y = oy * g.s + i - g.p
                        if y < 0 or y >= g.w_in:
                            continue
                        for j in range(g.h):
                            x = ox * g.s + j - g.p
                            if 0 <= x < g.h_in:
                                acc += X[c, y, x] * W[o, c, i, j]
                Y[o, oy, ox] = acc
    return Tensor(Y)


def fc_horq(x, W, K: int = 2) -> np.ndarray:
    """Quantized fully-connected layer ``W x`` for a single input vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != x.size:
        raise ShapeError(f"weight shape {W.shape} does not fit input length {x.size}")
    return linear_horq(W, x[:, None], K)[:, 0]


def linear_horq(W, X_cols, K: int = 2) -> np.ndarray:
    """Quantized ``W @ X_cols`` where every column of ``X_cols`` is coded separately."""
    W = np.asarray(W, dtype=np.float64)
    X_cols = np.asarray(X_cols, dtype=np.float64)
    if W.ndim != 2 or X_cols.ndim != 2 or W.shape[1] != X_cols.shape[0]:
        raise ShapeError(f"cannot multiply {W.shape} by {X_cols.shape}")
    return binary_gemm(quantize_weights(W), quantize_input(X_cols, K))
