"""
emit.py

Turns a tiling plan into a tile instruction trace over a flat memory image, and
provides the whole-layer functional oracle.

Memory image (all regions 64-byte aligned, edge tiles zero-padded):
    A  padded M x K, BF16, row-major
    B  padded K x N, BF16 in the row-pair layout (row i holds B[2i][n], B[2i+1][n])
    C  padded M x N, FP32, row-major

Per output block the trace loads the live C tiles, then for each multiply loads
the weight and activation tiles its registers do not already hold, and finally
stores the C tiles.
"""

import logging
from dataclasses import dataclass

import numpy as np

from tilearray.engine.reference import reference_gemm_tile
from tilearray.isa.bf16 import float32_to_bf16_bits
from tilearray.isa.instructions import Instruction
from tilearray.isa.registers import replay_weight_reuse
from tilearray.isa.trace import Trace
from tilearray.lowering.gemm import to_gemm
from tilearray.lowering.tiling import plan_tiles, fold_counts

REGION_ALIGN = 64
DEFAULT_ORIGIN = 0x1000


def _align(value):
    return (value + REGION_ALIGN - 1) // REGION_ALIGN * REGION_ALIGN


@dataclass(frozen=True)
class MemoryLayout:
    m: int
    n: int
    k: int
    geometry: object
    padded: tuple
    a_base: int
    a_stride: int
    b_base: int
    b_stride: int
    c_base: int
    c_stride: int
    size: int

    @classmethod
    def for_dims(cls, dims, geometry, origin=DEFAULT_ORIGIN):
        m_folds, k_folds, n_folds = fold_counts(dims, geometry)
        mp, kp, np_ = m_folds * geometry.t_m, k_folds * geometry.t_k, n_folds * geometry.t_n
        a_base = _align(origin)
        a_stride = 2 * kp
        b_base = _align(a_base + mp * a_stride)
        b_stride = 4 * np_
        c_base = _align(b_base + (kp // 2) * b_stride)
        c_stride = 4 * np_
        size = _align(c_base + mp * c_stride)
        return cls(dims.m, dims.n, dims.k, geometry, (mp, kp, np_), a_base, a_stride, b_base, b_stride,
                   c_base, c_stride, size)

    @classmethod
    def for_plan(cls, plan, origin=DEFAULT_ORIGIN):
        return cls.for_dims(plan.dims, plan.geometry, origin)

    def a_tile(self, m, k):
        g = self.geometry
        return self.a_base + m * g.t_m * self.a_stride + k * g.t_k * 2

    def b_tile(self, k, n):
        g = self.geometry
        return self.b_base + (k * g.t_k // 2) * self.b_stride + n * g.t_n * 4

    def c_tile(self, m, n):
        g = self.geometry
        return self.c_base + m * g.t_m * self.c_stride + n * g.t_n * 4


def emit_trace(plan, layout=None):
    """
    Emit the instruction trace of a plan
    :param plan: TilingPlan
    :param layout: MemoryLayout, defaults to MemoryLayout.for_plan(plan)
    :return: Trace
    """
    layout = layout or MemoryLayout.for_plan(plan)
    held = {}
    instructions = []
    emit = instructions.append

    for block in plan.blocks:
        for m, n, reg in block.tiles:
            emit(Instruction.tl(reg, layout.c_tile(m, n), layout.c_stride))
            held[reg] = ('c', m, n)
        for step in block.steps:
            if held.get(step.src_b) != ('b', step.k, step.n):
                emit(Instruction.tl(step.src_b, layout.b_tile(step.k, step.n), layout.b_stride))
                held[step.src_b] = ('b', step.k, step.n)
            if held.get(step.src_a) != ('a', step.m, step.k):
                emit(Instruction.tl(step.src_a, layout.a_tile(step.m, step.k), layout.a_stride))
                held[step.src_a] = ('a', step.m, step.k)
            emit(Instruction.mm(step.dst, step.src_a, step.src_b))
        for m, n, reg in block.tiles:
            emit(Instruction.ts(layout.c_tile(m, n), layout.c_stride, reg))

    # Line 1 is the machine header
    numbered = tuple(Instruction(i.kind, i.reg, i.base, i.stride, i.dst, i.src_a, i.src_b, line=line)
                     for line, i in enumerate(instructions, start=2))
    trace = Trace(geometry=plan.geometry, instructions=numbered)
    logging.debug("emitted %d instructions %s", len(trace), trace.counts())
    return trace


def lower_layer(layer, geometry, order='blocked', block=(2, 2)):
    """
    Layer -> (TilingPlan, Trace)
    """
    plan = plan_tiles(to_gemm(layer), geometry, order=order, block=block)
    return plan, emit_trace(plan)


def count_weight_reuse(trace):
    """
    Number of multiplies whose weight register is still resident and clean
    """
    return sum(replay_weight_reuse(trace.instructions))


def _pad(matrix, rows, cols):
    matrix = np.asarray(matrix, dtype=np.float32)
    out = np.zeros((rows, cols), dtype=np.float32)
    out[:matrix.shape[0], :matrix.shape[1]] = matrix
    return out


def _check_operands(layout, a, b, c):
    if a.shape != (layout.m, layout.k) or b.shape != (layout.k, layout.n):
        raise ValueError("operands A%s, B%s do not match the %dx%dx%d layout" % (a.shape, b.shape, layout.m, layout.k, layout.n))
    if c is not None and c.shape != (layout.m, layout.n):
        raise ValueError("C%s does not match the %dx%d layout" % (c.shape, layout.m, layout.n))


def build_memory_image(layout, a, b, c=None):
    """
    Flat little-endian memory image holding the padded operands
    :param a: M x K, rounded to BF16
    :param b: K x N, rounded to BF16
    :param c: M x N FP32 initial accumulators, zero when omitted
    :return: numpy uint8 array of layout.size bytes
    """
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    c = None if c is None else np.asarray(c, dtype=np.float32)
    _check_operands(layout, a, b, c)
    mp, kp, np_ = layout.padded
    image = np.zeros(layout.size, dtype=np.uint8)

    a_bytes = float32_to_bf16_bits(_pad(a, mp, kp)).astype('<u2').view(np.uint8).ravel()
    image[layout.a_base:layout.a_base + a_bytes.size] = a_bytes

    pairs = _pad(b, kp, np_).reshape(kp // 2, 2, np_).transpose(0, 2, 1).reshape(kp // 2, 2 * np_)
    b_bytes = float32_to_bf16_bits(pairs).astype('<u2').view(np.uint8).ravel()
    image[layout.b_base:layout.b_base + b_bytes.size] = b_bytes

    if c is not None:
        c_bytes = np.ascontiguousarray(_pad(c, mp, np_), dtype='<f4').view(np.uint8).ravel()
        image[layout.c_base:layout.c_base + c_bytes.size] = c_bytes
    return image


def read_result(layout, image):
    """
    :return: the unpadded M x N FP32 C matrix held in the image
    """
    data = image if isinstance(image, np.ndarray) else image.data
    mp, _, np_ = layout.padded
    raw = np.ascontiguousarray(data[layout.c_base:layout.c_base + mp * layout.c_stride])
    return raw.view('<f4').reshape(mp, np_)[:layout.m, :layout.n].astype(np.float32)


def reference_gemm(a, b, c, tiles, split_pairs=False):
    """
    Whole-GEMM oracle: reference_gemm_tile applied fold by fold with k ascending
    :param tiles: TileGeometry
    :return: M x N FP32
    """
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    m, k = a.shape
    n = b.shape[1]
    c = np.zeros((m, n), dtype=np.float32) if c is None else np.asarray(c, dtype=np.float32)
    t_m, t_k, t_n = tiles.t_m, tiles.t_k, tiles.t_n
    mp, kp, np_ = [-(-size // t) * t for size, t in ((m, t_m), (k, t_k), (n, t_n))]
    a, b, c = _pad(a, mp, kp), _pad(b, kp, np_), _pad(c, mp, np_)
    for i in range(0, mp, t_m):
        for j in range(0, np_, t_n):
            tile = c[i:i + t_m, j:j + t_n]
            for kk in range(0, kp, t_k):
                tile = reference_gemm_tile(tile, a[i:i + t_m, kk:kk + t_k], b[kk:kk + t_k, j:j + t_n], split_pairs)
            c[i:i + t_m, j:j + t_n] = tile
    return c[:m, :n]
