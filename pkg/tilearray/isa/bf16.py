"""
bf16.py

BF16 <-> FP32 conversions done on raw bit patterns with numpy. BF16 values are
carried around as float32 arrays whose low 16 mantissa bits are zero, so any
product of two of them is exact in FP32.
"""

import numpy as np

BF16_QNAN = 0x7FC0


def float32_to_bf16_bits(values):
    """
    Round FP32 values to BF16 (round-to-nearest-even) and return the uint16 bit patterns
    :param values: array-like of floats
    :return: numpy uint16 array of the same shape
    """
    f32 = np.ascontiguousarray(values, dtype=np.float32)
    u32 = f32.view(np.uint32).astype(np.uint64)
    lsb = (u32 >> 16) & 1
    rounded = ((u32 + 0x7FFF + lsb) >> 16).astype(np.uint16)
    nan = np.isnan(f32)
    if nan.any():
        sign = ((u32 >> 16) & 0x8000).astype(np.uint16)
        rounded = np.where(nan, sign | BF16_QNAN, rounded).astype(np.uint16)
    return rounded


def bf16_bits_to_float32(bits):
    u16 = np.ascontiguousarray(bits, dtype=np.uint16)
    return (u16.astype(np.uint32) << 16).view(np.float32)


def to_bf16(values):
    """
    Quantize to BF16 precision, returned as float32 (what the tile registers hold after ingest)
    """
    return bf16_bits_to_float32(float32_to_bf16_bits(values))


def random_bf16(rng, shape, scale=1.0):
    """
    Normally distributed BF16 operands for tests and synthetic workloads
    """
    return to_bf16(rng.standard_normal(shape).astype(np.float32) * np.float32(scale))
