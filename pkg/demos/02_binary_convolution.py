"""
Convolution with XNOR and popcount
==================================

The input is unrolled into patch columns, every column is quantized to order K,
and every filter row gets a single sign plane. The layer output then comes from
bitwise products and a handful of float scale multiplications.
"""

import numpy as np

from horq import ConvGeometry, conv_float, conv_horq, im2col, quantize_first_order, xnor_dot

rng = np.random.default_rng(1)
g = ConvGeometry(c_in=3, c_out=4, w=3, h=3, w_in=8, h_in=8, s=1, p=1)
X = rng.standard_normal(g.input_shape).astype(np.float32)
W = rng.standard_normal(g.weight_shape).astype(np.float32)
print("geometry", g)
print("patch matrix", im2col(X, g).shape, "-> output", g.output_shape)

# the bit trick: one patch against one filter
col = im2col(X, g)[:, 0]
wrow = W.reshape(g.c_out, -1)[0]
_, col_plane = quantize_first_order(col)
_, w_plane = quantize_first_order(wrow)
print("xnor dot", xnor_dot(w_plane, col_plane),
      "  float dot of signs", int(w_plane.to_signs() @ col_plane.to_signs()))

# how close the binary layer gets as the input order grows
Y = conv_float(X, W, g).data
for K in (1, 2, 3, 4):
    Yq = conv_horq(X, W, g, K).data
    print(f"K={K}  relative error {np.linalg.norm(Yq - Y) / np.linalg.norm(Y):.4f}")

# the weights keep a single plane, so the error floors at the weight approximation
