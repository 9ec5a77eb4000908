"""
config.py

CoreConfig: the in-order front end that feeds the matrix engine.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class CoreConfig:
    width: int = 4
    tileload_latency: int = 16
    tilestore_latency: int = 16
    max_outstanding_loads: int = 8
    # fetch/decode cycles before the first dispatch; the total of an empty trace
    frontend_depth: int = 16
    # a run still going at this cycle is reported as deadlocked
    cycle_bound: int = 1 << 40

    def __post_init__(self):
        for name in ('width', 'tileload_latency', 'tilestore_latency', 'max_outstanding_loads', 'cycle_bound'):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError("%s must be a positive integer, got %r" % (name, value))
        if not isinstance(self.frontend_depth, int) or self.frontend_depth < 0:
            raise ValueError("frontend_depth must be a non-negative integer, got %r" % (self.frontend_depth,))
