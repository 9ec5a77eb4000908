"""
report.py

SimReport: the immutable result of one trace simulation.
"""

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction

from tilearray.errors import TraceMismatchError

JSON_FIELDS = ('workload', 'policy', 'pe', 'prefetch', 'total_cycles', 'mm_count', 'mean_ii', 'mean_utilization',
               'normalized')


@dataclass(frozen=True)
class SimReport:
    workload: str
    design: str
    policy: str
    pe: str
    prefetch: str
    total_cycles: int
    mm_count: int
    counts: dict
    # summed dispatch-to-completion cycles per instruction class
    class_latency: dict
    mean_ii: float
    mean_utilization: float
    trace_digest: str
    normalized: float = None
    # sha256 of the final memory image; equal for every design running the same trace
    memory_digest: str = ''
    engine: object = field(default=None, compare=False, repr=False)
    memory: object = field(default=None, compare=False, repr=False)

    def as_dict(self):
        return {name: getattr(self, name) for name in JSON_FIELDS}

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2)

    def to_row(self, **flags):
        """
        One CSV row: the report fields plus the flags that produced it
        """
        row = dict(flags)
        row.update(self.as_dict())
        row['design'] = self.design
        row['tl_count'] = self.counts.get('TL', 0)
        row['ts_count'] = self.counts.get('TS', 0)
        row['trace_sha256'] = self.trace_digest
        return row


def normalized_runtime(report, baseline_report):
    """
    Runtime of a report relative to a baseline run of the same trace
    :return: Fraction
    :raises TraceMismatchError: when the two runs simulated different traces
    """
    if report.trace_digest != baseline_report.trace_digest:
        raise TraceMismatchError("reports were produced from different traces (%s vs %s)"
                                 % (report.trace_digest[:12], baseline_report.trace_digest[:12]))
    return Fraction(report.total_cycles, baseline_report.total_cycles)


def with_baseline(report, baseline_report):
    return replace(report, normalized=float(normalized_runtime(report, baseline_report)))
