"""
Residual binary quantization of a vector
========================================

A single sign plane with one scale is a coarse copy of a vector. Quantizing
what is left over, again and again, gives a sum of scaled sign planes that
converges on the original.
"""

import numpy as np

from horq import quantize_horq, reconstruct, residual, quantize_first_order
from horq.quantize import residual_norms

rng = np.random.default_rng(0)
x = rng.standard_normal(12)

# first order: scale is the mean magnitude, the plane is the sign pattern
beta, plane = quantize_first_order(x)
print("x          ", np.round(x, 3))
print("beta_1     ", round(beta, 4), "  signs", plane.to_signs().astype(int))
print("residual   ", np.round(residual(x, beta, plane), 3))

# order four: each new term is fitted to the previous residual
code = quantize_horq(x, 4)
print("\nbetas      ", np.round(code.betas, 4))

# the betas shrink, and so does the squared residual, by exactly n * beta^2 per step
sq = residual_norms(x, 4)
for k in range(1, code.order + 1):
    drop = sq[k - 1] - sq[k]
    print(f"K={k}  ||R||^2 = {sq[k]:8.4f}   drop {drop:.4f}  n*beta^2 {x.size * code.betas[k - 1] ** 2:.4f}")

print("\norder-4 reconstruction", np.round(reconstruct(code), 3))

# vectors with a single magnitude are exact after one term
y = 0.7 * np.sign(rng.standard_normal(8))
print("\n+-0.7 vector, relative residual at K=1:", residual_norms(y, 1)[1] / residual_norms(y, 1)[0])
