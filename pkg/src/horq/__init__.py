"""High-order residual binary quantization with XNOR-popcount linear algebra."""

from .bitplane import BinaryPlane, binary_gemm, pack, popcount_gemm, unpack, xnor_dot
from .conv import conv_float, conv_horq, fc_horq, linear_horq
from .errors import ConfigError, DomainError, FormatError, HorqError, ShapeError
from .perf import SpeedupQuery, bench_gemm, speedup_ratio, storage_model, sweep
from .quantize import (
    HORQCode,
    QuantizedMatrix,
    load_code,
    quantize_first_order,
    quantize_horq,
    quantize_input,
    quantize_weights,
    reconstruct,
    residual,
    save_code,
)
from .tensor import (
    ConvGeometry,
    Tensor,
    im2col,
    load_tensor,
    reshape_output,
    reshape_weight,
    save_tensor,
)

__version__ = "0.1.0"
