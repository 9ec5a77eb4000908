"""
analytic.py

Closed-form latency, utilization and throughput of the weight-stationary
array. This is the oracle the cycle engine is checked against.

Stage decomposition of one matrix multiply (R = physical rows):
    WL  R cycles, the last fused with the first FF cycle
    FF  T_M cycles (first array row fed)
    FS  R-1 cycles (remaining rows fed)
    DR  T_N cycles (+1 merge-adder cycle with double multipliers)
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from tilearray.errors import PolicyError
from tilearray.isa.registers import replay_weight_reuse
from tilearray.model.policy import Control, Prefetch, ArrayGeometry


def latency_base(geom):
    return 2 * geom.physical_rows + geom.t_n + geom.t_m - 2 + geom.merge_cycles


def stage_cycles(geom):
    r = geom.physical_rows
    return {'WL': r, 'FF': geom.t_m, 'FS': r - 1, 'DR': geom.t_n + geom.merge_cycles}


def inactive_cycles(geom):
    return latency_base(geom) - geom.t_m


def utilization_ratio(geom):
    """
    Fraction of a single multiply's latency each PE spends computing
    """
    return Fraction(geom.t_m, latency_base(geom))


def pipe_overlap(geom):
    """
    Cycles of a predecessor's drain hidden under the next weight load. The last
    column's weight-register hazard caps the overlap at the number of rows.
    """
    return min(geom.t_n, geom.physical_rows) + geom.merge_cycles


def _check(geom, policy):
    if geom.double_multiplier != policy.pe.double_multiplier:
        raise PolicyError("geometry and PE variant disagree on double multipliers (%s)" % policy.pe.value)


def steady_state_ii(geom, policy, weight_reused=False):
    """
    Cycles between consecutive matrix-multiply retirements in an endless back-to-back stream
    :param geom: ArrayGeometry (physical, i.e. with the policy's multiplier arrangement)
    :param policy: PolicyDescriptor
    :param weight_reused: consecutive multiplies share a clean weight register
    :return: int cycles
    """
    _check(geom, policy)
    latency = latency_base(geom)
    pipe = latency - pipe_overlap(geom)
    if policy.control is Control.BASE:
        return latency
    if policy.control is Control.PIPE:
        return pipe
    if policy.control is Control.WLBP:
        return geom.t_m if weight_reused else pipe
    if policy.prefetch is Prefetch.ROW_CHASING:
        return geom.t_m
    return max(geom.t_m, geom.physical_rows)


@dataclass(frozen=True)
class TraceStats:
    mm_count: int = 0
    tl_count: int = 0
    ts_count: int = 0
    reuse_pairs: int = 0
    overhead_cycles: int = 0


def trace_stats(trace, core=None):
    """
    Instruction mix of a trace plus a dispatch overhead estimate for the bound below
    :param core: CoreConfig, defaults apply when omitted
    """
    from tilearray.cpu.config import CoreConfig
    core = core or CoreConfig()
    counts = trace.counts()
    reuse = sum(replay_weight_reuse(trace.instructions))
    others = counts['TL'] + counts['TS']
    overhead = core.frontend_depth + int(math.ceil(others / float(core.width)))
    return TraceStats(counts['MM'], counts['TL'], counts['TS'], reuse, overhead)


def normalized_runtime_bound(stats, geom, policy):
    """
    Runtime of an MM-bound trace relative to the baseline design (baseline PEs, BASE control).
    The denominator always uses the baseline array, so a single multiply on double-multiplier
    PEs comes out at 63/94 on the default array, not 1.
    :param stats: TraceStats
    :param geom: logical ArrayGeometry (the policy's PE variant decides the physical rows)
    :return: Fraction
    """
    physical = ArrayGeometry.for_variant(geom.t_k, geom.t_n, geom.t_m, policy.pe)
    reference = physical.baseline()
    mm = stats.mm_count
    if mm == 0:
        return Fraction(1)
    latency = latency_base(physical)
    if policy.control is Control.WLBP:
        reused = min(stats.reuse_pairs, mm - 1)
        ii_total = reused * steady_state_ii(physical, policy, True) + (mm - 1 - reused) * steady_state_ii(physical, policy, False)
    else:
        ii_total = (mm - 1) * steady_state_ii(physical, policy)
    numerator = latency + ii_total + stats.overhead_cycles
    denominator = latency_base(reference) * mm + stats.overhead_cycles
    return Fraction(numerator, denominator)


def asymptotic_runtime(geom, policy, weight_reused=False):
    physical = ArrayGeometry.for_variant(geom.t_k, geom.t_n, geom.t_m, policy.pe)
    return Fraction(steady_state_ii(physical, policy, weight_reused), latency_base(physical.baseline()))


def utilization_curves(array_sizes, t_m_values):
    """
    PE utilization of a single multiply for each (t_k, t_n) array size over a range of T_M
    :return: list of dict rows
    """
    rows = []
    for t_k, t_n in array_sizes:
        for t_m in t_m_values:
            geom = ArrayGeometry(t_k, t_n, t_m)
            rows.append({'array': "%dx%d" % (t_k, t_n), 't_k': t_k, 't_n': t_n, 't_m': t_m,
                         'latency': latency_base(geom), 'utilization': float(utilization_ratio(geom))})
    return rows


def model_rows(geometries, policies):
    """
    Rows for the model CSV. WLBP is reported at its weight-reuse steady state, and
    utilization is the steady-state fraction T_M / II.
    """
    rows = []
    for t_k, t_n, t_m in geometries:
        for policy in policies:
            geom = ArrayGeometry.for_variant(t_k, t_n, t_m, policy.pe)
            ii = steady_state_ii(geom, policy, weight_reused=policy.control is Control.WLBP)
            rows.append({'t_k': t_k, 't_n': t_n, 't_m': t_m, 'policy': policy.control.value, 'pe': policy.pe.value,
                         'prefetch': policy.prefetch.value, 'latency': latency_base(geom), 'ii': ii,
                         'utilization': round(float(Fraction(geom.t_m, ii)), 6)})
    return rows

