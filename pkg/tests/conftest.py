import numpy as np
import pytest

from tilearray.cpu.memory import MemoryImage
from tilearray.isa.bf16 import random_bf16
from tilearray.isa.tiles import TileGeometry
from tilearray.lowering.emit import MemoryLayout, build_memory_image, emit_trace
from tilearray.lowering.gemm import GemmDims
from tilearray.lowering.tiling import plan_tiles


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture
def tiles():
    return TileGeometry()


def lowered_gemm(m, n, k, tiles=None, order='blocked', seed=0):
    """
    (plan, trace, MemoryImage, (a, b, c)) for a random BF16 GEMM
    """
    tiles = tiles or TileGeometry()
    plan = plan_tiles(GemmDims(m, n, k), tiles, order=order)
    trace = emit_trace(plan)
    layout = MemoryLayout.for_plan(plan)
    rng = np.random.default_rng(seed)
    a = random_bf16(rng, (m, k))
    b = random_bf16(rng, (k, n))
    c = random_bf16(rng, (m, n))
    return plan, trace, MemoryImage(build_memory_image(layout, a, b, c)), (a, b, c)


@pytest.fixture
def block_gemm():
    """
    The 32x32x32 GEMM with a 2x2 output block: 4 C loads, 2 weight and 2 activation loads, 4 multiplies, 4 stores
    """
    return lowered_gemm(32, 32, 32)
