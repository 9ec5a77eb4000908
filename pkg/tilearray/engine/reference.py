"""
reference.py

Functional oracle for one tile multiply: BF16 operands, FP32 products and FP32
accumulation in ascending k, the order fixed by the north-to-south partial-sum
chain.
"""

import numpy as np

from tilearray.isa.bf16 import to_bf16


def _products(a, b):
    # BF16 x BF16 is exact in FP32
    for k in range(a.shape[1]):
        yield k, a[:, k, None] * b[None, k, :]


def reference_gemm_tile(c, a, b, split_pairs=False):
    """
    C' = C + A . B
    :param c: FP32 tile (t_m x t_n)
    :param a: activation tile (t_m x t_k), rounded to BF16 on ingest
    :param b: weight tile (t_k x t_n), rounded to BF16 on ingest
    :param split_pairs: double-multiplier accumulation: even k accumulate onto C, odd k onto +0.0,
                        and the two chains are added once at the end
    :return: FP32 tile (t_m x t_n)
    """
    c = np.asarray(c, dtype=np.float32)
    a = to_bf16(np.asarray(a, dtype=np.float32))
    b = to_bf16(np.asarray(b, dtype=np.float32))
    t_m, t_k = a.shape
    if b.shape[0] != t_k or c.shape != (t_m, b.shape[1]):
        raise ValueError("tile shapes do not chain: C%s += A%s . B%s" % (c.shape, a.shape, b.shape))
    if split_pairs and t_k % 2:
        raise ValueError("split accumulation needs an even t_k, got %d" % t_k)

    even = c.copy()
    odd = np.zeros_like(c)
    for k, product in _products(a, b):
        if split_pairs and k % 2:
            odd = odd + product
        else:
            even = even + product
    if split_pairs:
        return (even + odd).astype(np.float32)
    return even.astype(np.float32)
