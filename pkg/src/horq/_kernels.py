"""Compiled XNOR-popcount kernels.

All kernels count *differing* bits (popcount of XOR). Because tail bits of
every plane are zero, ``popcount(XOR)`` never counts padding, and
``n - 2 * popcount(a ^ b)`` equals ``2 * popcount(XNOR(a, b) & mask) - n``.
"""

import numpy as np
from numba import njit, types
from numba.extending import intrinsic


@intrinsic
def _popcount64(typingctx, x):
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return sig, codegen


@njit(cache=True, nogil=True)
def xor_popcount_gemm(a_words, b_words):
    """Differing-bit counts between every row of ``a_words`` and ``b_words``."""
    m, n_words = a_words.shape
    p = b_words.shape[0]
    out = np.empty((m, p), dtype=np.int64)
    for i in range(m):
        for j in range(p):
            cnt = 0
            for k in range(n_words):
                cnt += _popcount64(a_words[i, k] ^ b_words[j, k])
            out[i, j] = cnt
    return out


@njit(cache=True, nogil=True)
def scaled_binary_gemm(w_words, w_scales, x_words, x_scales, n):
    """Order-K scaled binary product.

    ``w_words``: (m, Kw, n_words), ``w_scales``: (m, Kw),
    ``x_words``: (p, K, n_words), ``x_scales``: (p, K).
    Entry (o, c) = sum_a w_scales[o, a] * sum_i x_scales[c, i] * dot(o, a, c, i),
    with each dot an exact integer.
    """
    m, kw, n_words = w_words.shape
    p, kx, _ = x_words.shape
    out = np.empty((m, p), dtype=np.float64)
    for o in range(m):
        for c in range(p):
            total = 0.0
            for a in range(kw):
                acc = 0.0
                for i in range(kx):
                    cnt = 0
                    for k in range(n_words):
                        cnt += _popcount64(w_words[o, a, k] ^ x_words[c, i, k])
                    acc += np.float64(x_scales[c, i]) * np.float64(n - 2 * cnt)
                total += np.float64(w_scales[o, a]) * acc
            out[o, c] = total
    return out
