"""
tiles.py

Tile geometry of the matrix engine and the conversion between numpy operand
tiles and the raw 16 x 64 B tile register payloads.

Register payload layouts:
    A (activations): row m holds A[m][0..t_k) as BF16.
    B (weights):     row i holds the pair layout B[2i][n], B[2i+1][n] for each n,
                     so a 32 x 16 BF16 block fits in 16 rows of 64 B.
    C (accumulator): row m holds C[m][0..t_n) as FP32.
"""

import enum
from dataclasses import dataclass

import numpy as np

from tilearray.isa.bf16 import float32_to_bf16_bits, bf16_bits_to_float32

NUM_TILE_REGISTERS = 8
TILE_ROWS = 16
TILE_ROW_BYTES = 64


class ElementType(enum.Enum):
    BF16 = 'bf16'
    FP32 = 'fp32'

    @property
    def size(self):
        return 2 if self is ElementType.BF16 else 4


class Role(enum.Enum):
    ACC = 'acc'
    A = 'a'
    B = 'b'

    @property
    def element_type(self):
        return ElementType.FP32 if self is Role.ACC else ElementType.BF16


@dataclass(frozen=True)
class TileShape:
    rows: int
    cols_bytes: int
    element_type: ElementType

    def __post_init__(self):
        if not 1 <= self.rows <= TILE_ROWS:
            raise ValueError("tile rows must be in [1,%d], got %d" % (TILE_ROWS, self.rows))
        if not 1 <= self.cols_bytes <= TILE_ROW_BYTES:
            raise ValueError("tile row bytes must be in [1,%d], got %d" % (TILE_ROW_BYTES, self.cols_bytes))
        if self.cols_bytes % self.element_type.size:
            raise ValueError("row bytes %d not divisible by %s element size" % (self.cols_bytes, self.element_type.value))

    @property
    def elements_per_row(self):
        return self.cols_bytes // self.element_type.size


@dataclass(frozen=True)
class TileGeometry:
    """
    Machine tile dimensions: C[t_m x t_n] += A[t_m x t_k] . B[t_k x t_n]
    """
    t_m: int = 16
    t_k: int = 32
    t_n: int = 16

    def __post_init__(self):
        if self.t_k % 2:
            raise ValueError("t_k must be even for the pair layout of B, got %d" % self.t_k)
        # Constructing the shapes checks register capacity
        self.a_shape
        self.b_shape
        self.c_shape

    @property
    def a_shape(self):
        return TileShape(self.t_m, 2 * self.t_k, ElementType.BF16)

    @property
    def b_shape(self):
        return TileShape(self.t_k // 2, 4 * self.t_n, ElementType.BF16)

    @property
    def c_shape(self):
        return TileShape(self.t_m, 4 * self.t_n, ElementType.FP32)

    def shape_for(self, role):
        return {Role.A: self.a_shape, Role.B: self.b_shape, Role.ACC: self.c_shape}[role]

    def as_tuple(self):
        return (self.t_m, self.t_k, self.t_n)


def empty_payload():
    return np.zeros((TILE_ROWS, TILE_ROW_BYTES), dtype=np.uint8)


def _place(payload_rows):
    payload = empty_payload()
    rows, nbytes = payload_rows.shape
    payload[:rows, :nbytes] = payload_rows
    return payload


def encode_a(a):
    bits = float32_to_bf16_bits(a).astype('<u2')
    return _place(bits.view(np.uint8).reshape(bits.shape[0], -1))


def decode_a(payload, geometry):
    raw = np.ascontiguousarray(payload[:geometry.t_m, :2 * geometry.t_k])
    return bf16_bits_to_float32(raw.view('<u2'))


def encode_b(b):
    t_k, t_n = b.shape
    paired = np.asarray(b, dtype=np.float32).reshape(t_k // 2, 2, t_n).transpose(0, 2, 1).reshape(t_k // 2, 2 * t_n)
    bits = float32_to_bf16_bits(paired).astype('<u2')
    return _place(bits.view(np.uint8).reshape(bits.shape[0], -1))


def decode_b(payload, geometry):
    raw = np.ascontiguousarray(payload[:geometry.t_k // 2, :4 * geometry.t_n])
    paired = bf16_bits_to_float32(raw.view('<u2')).reshape(geometry.t_k // 2, geometry.t_n, 2)
    return np.ascontiguousarray(paired.transpose(0, 2, 1).reshape(geometry.t_k, geometry.t_n))


def encode_c(c):
    values = np.ascontiguousarray(c, dtype='<f4')
    return _place(values.view(np.uint8).reshape(values.shape[0], -1))


def decode_c(payload, geometry):
    raw = np.ascontiguousarray(payload[:geometry.t_m, :4 * geometry.t_n])
    return raw.view('<f4').astype(np.float32)
