"""
stats.py

Counters collected by the cycle engine and the per-PE occupancy view of them.
"""

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

STALL_REASONS = ('array_busy', 'weight_link_busy', 'operand_not_ready')


@dataclass
class EngineStats:
    rows: int
    cols: int
    total_cycles: int = 0
    issue: list = field(default_factory=list)
    retire: list = field(default_factory=list)
    # cycles each PE spent computing (any of its multipliers busy)
    active: np.ndarray = None
    mac_count: int = 0
    wl_skips: int = 0
    prefetches: int = 0
    stalls: Counter = field(default_factory=Counter)
    # per-cycle event log lines when recording was asked for
    events: list = None

    def __post_init__(self):
        if self.active is None:
            self.active = np.zeros((self.rows, self.cols), dtype=np.int64)

    @property
    def mm_count(self):
        return len(self.retire)

    @property
    def intervals(self):
        """
        Cycles between consecutive retirements
        """
        return [b - a for a, b in zip(self.retire, self.retire[1:])]

    @property
    def mean_ii(self):
        intervals = self.intervals
        if not intervals:
            return 0.0
        return sum(intervals) / float(len(intervals))

    def note_stall(self, reason, cycles=1):
        if reason not in STALL_REASONS:
            raise ValueError("unknown stall reason: " + str(reason))
        self.stalls[reason] += cycles

    def as_dict(self):
        return {'total_cycles': self.total_cycles, 'mm_count': self.mm_count, 'mac_count': self.mac_count,
                'wl_skips': self.wl_skips, 'prefetches': self.prefetches, 'mean_ii': self.mean_ii,
                'stalls': {reason: self.stalls.get(reason, 0) for reason in STALL_REASONS}}


def pe_occupancy(stats):
    """
    Fraction of the run each PE was computing
    :return: rows x cols float array, all zero when nothing ran
    """
    if stats.total_cycles == 0:
        return np.zeros(stats.active.shape, dtype=np.float64)
    return stats.active / float(stats.total_cycles)


def mean_utilization(stats):
    """
    Exact mean of pe_occupancy
    """
    if stats.total_cycles == 0:
        return Fraction(0)
    return Fraction(int(stats.active.sum()), stats.rows * stats.cols * stats.total_cycles)
