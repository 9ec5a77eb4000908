"""
config.py

ArrayConfig: the PE array handed to the cycle engine.
"""

from dataclasses import dataclass

from tilearray.errors import PolicyError
from tilearray.isa.tiles import TileGeometry
from tilearray.model.policy import ArrayGeometry, PolicyDescriptor, Control, PEVariant, Prefetch

# Cycles between the predecessor entering DR and the earliest PIPE weight load
PIPE_WL_START_OFFSET = 0

DATAPATHS = ('systolic', 'tile', 'auto')
# 'auto' picks the per-cycle datapath up to this many multiplies
SYSTOLIC_AUTO_LIMIT = 256


@dataclass(frozen=True)
class ArrayConfig:
    geometry: ArrayGeometry
    policy: PolicyDescriptor

    def __post_init__(self):
        g = self.geometry
        multipliers = g.physical_rows * g.t_n * self.policy.pe.multipliers_per_pe
        if multipliers != g.t_k * g.t_n:
            raise PolicyError("%s PEs on a %dx%d array give %d multipliers, expected t_k*t_n = %d"
                              % (self.policy.pe.value, g.physical_rows, g.t_n, multipliers, g.t_k * g.t_n))

    @classmethod
    def create(cls, t_k=32, t_n=16, t_m=16, control=Control.BASE, pe=PEVariant.BASELINE, prefetch=Prefetch.ROW_CHASING):
        policy = PolicyDescriptor(control, pe, prefetch)
        return cls(ArrayGeometry.for_variant(t_k, t_n, t_m, pe), policy)

    @classmethod
    def for_tiles(cls, tiles, policy):
        """
        :param tiles: TileGeometry of a trace
        :param policy: PolicyDescriptor
        """
        return cls(ArrayGeometry.for_variant(tiles.t_k, tiles.t_n, tiles.t_m, policy.pe), policy)

    @property
    def tiles(self):
        g = self.geometry
        return TileGeometry(g.t_m, g.t_k, g.t_n)

    @property
    def rows(self):
        return self.geometry.physical_rows

    @property
    def lanes(self):
        return self.policy.pe.multipliers_per_pe

    @property
    def label(self):
        return self.policy.label
