"""
Measured GEMM time
==================

Times a float32 matrix product on one thread against the packed binary product
on the same shapes. The first call compiles the kernel, so it is kept out of
the timing.
"""

from horq.perf import bench_gemm

for size in (256, 1024, 2048):
    for order in (1, 2):
        r = bench_gemm(size, size, size, K=order, reps=3)
        print(f"{size:>5}^3  order {order}  float {r.float_seconds:.4f}s  binary {r.binary_seconds:.4f}s"
              f"  measured {r.measured_speedup:5.2f}x  model {r.model_speedup:5.2f}x")

# the model counts 64 bit operations per cycle against one float multiply-add;
# a BLAS float GEMM uses SIMD and fused multiply-adds, so measured ratios sit far below the model
