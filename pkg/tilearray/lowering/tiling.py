"""
tiling.py

Splits a GEMM into folds of one tile triple each and orders them.

"blocked" order: n-outer, m-middle over full 2 x 2 blocks of output tiles, k
inner. Inside a block each weight tile is used by consecutive multiplies on
different activation tiles, so a weight-load bypass can fire on every other
multiply. Tiles left over at the m and n edges go into strips of up to four
output tiles. A strip alternates its operand registers each time an operand
tile changes, so a load never waits for the multiply right before it.
"naive" order walks one output tile at a time with k inner; it is the reuse
baseline.

Fixed register roles: treg0..3 accumulators, treg4..5 weights, treg6..7 activations.
"""

import logging
import math
from dataclasses import dataclass

from tilearray.errors import TilingError, RegisterPressureError
from tilearray.isa.tiles import TileGeometry

ACC_REGISTERS = (0, 1, 2, 3)
WEIGHT_REGISTERS = (4, 5)
ACTIVATION_REGISTERS = (6, 7)

ORDERS = ('blocked', 'naive')


@dataclass(frozen=True)
class FoldStep:
    """
    One multiply: C tile (m, n) += A tile (m, k) . B tile (k, n)
    """
    m: int
    n: int
    k: int
    dst: int
    src_a: int
    src_b: int


@dataclass(frozen=True)
class OutputBlock:
    # (m, n, accumulator register) of every C tile the block keeps live
    tiles: tuple
    steps: tuple


@dataclass(frozen=True)
class TilingPlan:
    dims: object
    geometry: TileGeometry
    folds: tuple
    order: str
    block: tuple
    blocks: tuple
    # Edge folds are zero-padded to full tiles
    padding: str = 'zero'

    @property
    def steps(self):
        return tuple(step for block in self.blocks for step in block.steps)

    @property
    def mm_count(self):
        return sum(len(block.steps) for block in self.blocks)

    @property
    def padded_dims(self):
        g = self.geometry
        m_folds, k_folds, n_folds = self.folds
        return m_folds * g.t_m, k_folds * g.t_k, n_folds * g.t_n


def fold_counts(dims, geometry):
    return (int(math.ceil(dims.m / float(geometry.t_m))),
            int(math.ceil(dims.k / float(geometry.t_k))),
            int(math.ceil(dims.n / float(geometry.t_n))))


def _geometry(tiles):
    if isinstance(tiles, TileGeometry):
        return tiles
    try:
        return TileGeometry(*tiles)
    except ValueError as e:
        raise TilingError("tile %s does not fit a tile register: %s" % (tuple(tiles), e))


def _strip(tiles, k_folds):
    """
    k-outer walk over a run of output tiles, one accumulator each
    :param tiles: [(m, n)], at most len(ACC_REGISTERS)
    """
    acc = dict((tile, ACC_REGISTERS[i]) for i, tile in enumerate(tiles))
    steps = []
    last_a = last_b = None
    count_a = count_b = -1
    for k in range(k_folds):
        for m, n in tiles:
            if (m, k) != last_a:
                last_a, count_a = (m, k), count_a + 1
            if (k, n) != last_b:
                last_b, count_b = (k, n), count_b + 1
            steps.append(FoldStep(m, n, k, acc[(m, n)], ACTIVATION_REGISTERS[count_a % 2],
                                  WEIGHT_REGISTERS[count_b % 2]))
    return OutputBlock(tiles=tuple((m, n, reg) for (m, n), reg in acc.items()), steps=tuple(steps))


def _blocked(folds, block):
    m_folds, k_folds, n_folds = folds
    block_m, block_n = block
    m_main = m_folds - m_folds % block_m
    n_main = n_folds - n_folds % block_n
    blocks = []
    for n0 in range(0, n_main, block_n):
        for m0 in range(0, m_main, block_m):
            acc = {}
            for j in range(block_n):
                for i in range(block_m):
                    acc[(m0 + i, n0 + j)] = ACC_REGISTERS[j * block_m + i]
            steps = []
            for k in range(k_folds):
                for j in range(block_n):
                    for i in range(block_m):
                        m, n = m0 + i, n0 + j
                        steps.append(FoldStep(m, n, k, acc[(m, n)], ACTIVATION_REGISTERS[i], WEIGHT_REGISTERS[j]))
            tiles = tuple(sorted(((m, n, reg) for (m, n), reg in acc.items()), key=lambda t: t[2]))
            blocks.append(OutputBlock(tiles=tiles, steps=tuple(steps)))

    width = block_m * block_n
    columns = [(m, n) for n in range(n_main, n_folds) for m in range(m_main)]
    rows = [(m, n) for m in range(m_main, m_folds) for n in range(n_folds)]
    for edge in (columns, rows):
        for i in range(0, len(edge), width):
            blocks.append(_strip(edge[i:i + width], k_folds))
    return blocks


def _naive(folds):
    m_folds, k_folds, n_folds = folds
    blocks = []
    for n in range(n_folds):
        for m in range(m_folds):
            steps = tuple(FoldStep(m, n, k, ACC_REGISTERS[0], ACTIVATION_REGISTERS[0], WEIGHT_REGISTERS[0])
                          for k in range(k_folds))
            blocks.append(OutputBlock(tiles=((m, n, ACC_REGISTERS[0]),), steps=steps))
    return blocks


def plan_tiles(dims, tiles, order='blocked', block=(2, 2)):
    """
    Enumerate and order the folds of a GEMM
    :param dims: GemmDims
    :param tiles: TileGeometry or (t_m, t_k, t_n)
    :param order: 'blocked' or 'naive'
    :param block: (activation tiles, weight tiles) per output block, blocked order only
    :return: TilingPlan
    """
    geometry = _geometry(tiles)
    if order not in ORDERS:
        raise TilingError("unknown fold order '%s' (expected one of %s)" % (order, ", ".join(ORDERS)))
    block_m, block_n = block
    if block_m < 1 or block_n < 1:
        raise TilingError("block dimensions must be positive, got %s" % (block,))
    if block_m > len(ACTIVATION_REGISTERS) or block_n > len(WEIGHT_REGISTERS) or block_m * block_n > len(ACC_REGISTERS):
        raise RegisterPressureError("a %dx%d block needs %d accumulator, %d weight and %d activation registers; "
                                    "only %d, %d and %d are available"
                                    % (block_m, block_n, block_m * block_n, block_n, block_m,
                                       len(ACC_REGISTERS), len(WEIGHT_REGISTERS), len(ACTIVATION_REGISTERS)))
    folds = fold_counts(dims, geometry)
    blocks = _blocked(folds, (block_m, block_n)) if order == 'blocked' else _naive(folds)
    plan = TilingPlan(dims=dims, geometry=geometry, folds=folds, order=order,
                      block=(block_m, block_n) if order == 'blocked' else (1, 1), blocks=tuple(blocks))
    logging.debug("plan %s order=%s folds(m,k,n)=%s blocks=%d mm=%d", dims, order, folds, len(blocks), plan.mm_count)
    return plan
