"""
policy.py

Machine description shared by the analytic model and the cycle engine: array
geometry, control policy, PE datapath variant and WLS prefetch model.
"""

import enum
from dataclasses import dataclass, replace

from tilearray.errors import PolicyError

# The bottom row of merge adders in a double-multiplier array is one pipeline stage
MERGE_ADDER_CYCLES = 1


class Control(enum.Enum):
    BASE = 'base'
    PIPE = 'pipe'
    WLBP = 'wlbp'
    WLS = 'wls'


class PEVariant(enum.Enum):
    BASELINE = 'baseline'
    DB = 'db'
    DM = 'dm'
    DMDB = 'dmdb'

    @property
    def has_shadow(self):
        return self in (PEVariant.DB, PEVariant.DMDB)

    @property
    def double_multiplier(self):
        return self in (PEVariant.DM, PEVariant.DMDB)

    @property
    def multipliers_per_pe(self):
        return 2 if self.double_multiplier else 1


class Prefetch(enum.Enum):
    CONSERVATIVE = 'conservative'
    ROW_CHASING = 'row-chasing'


@dataclass(frozen=True)
class ArrayGeometry:
    """
    t_k weight rows mapped, t_n columns, t_m streamed input rows. With double
    multipliers each physical row holds two weight rows.
    """
    t_k: int = 32
    t_n: int = 16
    t_m: int = 16
    double_multiplier: bool = False

    def __post_init__(self):
        for name in ('t_k', 't_n', 't_m'):
            if getattr(self, name) < 1:
                raise ValueError("%s must be positive, got %d" % (name, getattr(self, name)))
        if self.double_multiplier and self.t_k % 2:
            raise ValueError("double-multiplier PEs need an even t_k, got %d" % self.t_k)

    @classmethod
    def for_variant(cls, t_k, t_n, t_m, pe):
        return cls(t_k, t_n, t_m, double_multiplier=pe.double_multiplier)

    @property
    def physical_rows(self):
        return self.t_k // 2 if self.double_multiplier else self.t_k

    @property
    def merge_cycles(self):
        return MERGE_ADDER_CYCLES if self.double_multiplier else 0

    def baseline(self):
        return replace(self, double_multiplier=False)


@dataclass(frozen=True)
class PolicyDescriptor:
    control: Control = Control.BASE
    pe: PEVariant = PEVariant.BASELINE
    prefetch: Prefetch = Prefetch.ROW_CHASING

    def __post_init__(self):
        if self.control is Control.WLS and not self.pe.has_shadow:
            raise PolicyError("WLS requires extra buffers and links: use the db or dmdb PE variant, not %s" % self.pe.value)

    @property
    def label(self):
        if self.pe is PEVariant.BASELINE:
            return self.control.name
        return "%s-%s" % (self.pe.name, self.control.name)

    @classmethod
    def from_label(cls, label, prefetch=Prefetch.ROW_CHASING):
        """
        'WLBP' -> (WLBP, Baseline); 'DMDB-WLS' -> (WLS, DMDB)
        """
        parts = label.strip().upper().split('-')
        try:
            if len(parts) == 1:
                return cls(Control[parts[0]], PEVariant.BASELINE, prefetch)
            if len(parts) == 2:
                return cls(Control[parts[1]], PEVariant[parts[0]], prefetch)
        except KeyError:
            pass
        raise PolicyError("unknown design label: " + label)


def valid_policies(prefetch=Prefetch.ROW_CHASING):
    result = []
    for pe in PEVariant:
        for control in Control:
            if control is Control.WLS and not pe.has_shadow:
                continue
            result.append(PolicyDescriptor(control, pe, prefetch))
    return result


# Baseline plus the seven design points compared in the runtime study
DESIGN_POINTS = ('BASE', 'PIPE', 'WLBP', 'DB-WLS', 'DM-PIPE', 'DM-WLBP', 'DMDB-WLBP', 'DMDB-WLS')
