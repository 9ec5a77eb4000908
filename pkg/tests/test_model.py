import itertools
from fractions import Fraction

import pytest

from tilearray.errors import PolicyError
from tilearray.model.analytic import (TraceStats, asymptotic_runtime, inactive_cycles, latency_base, model_rows,
                                      normalized_runtime_bound, pipe_overlap, stage_cycles, steady_state_ii,
                                      trace_stats, utilization_curves, utilization_ratio)
from tilearray.model.policy import (DESIGN_POINTS, ArrayGeometry, Control, PEVariant, PolicyDescriptor, Prefetch,
                                    valid_policies)


def _design(label, prefetch=Prefetch.ROW_CHASING):
    return PolicyDescriptor.from_label(label, prefetch)


def _geom(label, t_k=32, t_n=16, t_m=16):
    return ArrayGeometry.for_variant(t_k, t_n, t_m, _design(label).pe)


class TestLatency:

    @pytest.mark.parametrize('t_k, t_n, t_m', [(32, 16, 16), (16, 16, 16), (64, 64, 8), (8, 32, 256)])
    def test_latency_base(self, t_k, t_n, t_m):
        assert latency_base(ArrayGeometry(t_k, t_n, t_m)) == 2 * t_k + t_n + t_m - 2

    def test_latency_grid(self):
        grid = list(itertools.product(range(2, 66, 4), (1, 3, 16, 33, 64), (1, 2, 8, 16, 64, 256)))
        assert len(grid) >= 200
        for t_k, t_n, t_m in grid:
            geom = ArrayGeometry(t_k, t_n, t_m)
            assert latency_base(geom) == 2 * t_k + t_n + t_m - 2
            assert sum(stage_cycles(geom).values()) - 1 == latency_base(geom)

    def test_default_array(self):
        geom = ArrayGeometry()
        assert latency_base(geom) == 94
        assert inactive_cycles(geom) == 78
        assert utilization_ratio(geom) == Fraction(16, 94)

    def test_double_multiplier_halves_the_rows(self):
        geom = ArrayGeometry(32, 16, 16, double_multiplier=True)
        assert geom.physical_rows == 16
        assert latency_base(geom) == 63

    def test_stages_add_up(self):
        for dm in (False, True):
            geom = ArrayGeometry(32, 16, 16, double_multiplier=dm)
            stages = stage_cycles(geom)
            # the last WL cycle overlaps the first FF cycle
            assert sum(stages.values()) - 1 == latency_base(geom)

    def test_pipe_overlap(self):
        assert pipe_overlap(ArrayGeometry()) == 16
        assert pipe_overlap(ArrayGeometry(32, 16, 16, double_multiplier=True)) == 17
        assert pipe_overlap(ArrayGeometry(64, 64, 8)) == 64

    def test_odd_rows_with_double_multipliers(self):
        with pytest.raises(ValueError):
            ArrayGeometry(31, 16, 16, double_multiplier=True)


class TestSteadyState:

    @pytest.mark.parametrize('label, reused, expected', [
        ('BASE', False, 94),
        ('PIPE', False, 78),
        ('WLBP', True, 16),
        ('WLBP', False, 78),
        ('DB-WLS', False, 16),
        ('DM-BASE', False, 63),
        ('DM-PIPE', False, 46),
        ('DM-WLBP', True, 16),
        ('DMDB-WLS', False, 16),
    ])
    def test_ii(self, label, reused, expected):
        assert steady_state_ii(_geom(label), _design(label), weight_reused=reused) == expected

    def test_conservative_prefetch(self):
        db = _design('DB-WLS', Prefetch.CONSERVATIVE)
        dmdb = _design('DMDB-WLS', Prefetch.CONSERVATIVE)
        assert steady_state_ii(_geom('DB-WLS'), db) == 32
        assert steady_state_ii(_geom('DMDB-WLS'), dmdb) == 16

    def test_geometry_must_match_the_variant(self):
        with pytest.raises(PolicyError):
            steady_state_ii(ArrayGeometry(), _design('DM-PIPE'))

    def test_asymptote_relative_to_the_baseline(self):
        assert asymptotic_runtime(ArrayGeometry(), _design('DMDB-WLS')) == Fraction(16, 94)
        assert asymptotic_runtime(ArrayGeometry(), _design('DM-PIPE')) == Fraction(46, 94)
        assert asymptotic_runtime(ArrayGeometry(), _design('BASE')) == 1


class TestPolicy:

    def test_wls_needs_shadow_buffers(self):
        with pytest.raises(PolicyError):
            PolicyDescriptor(Control.WLS, PEVariant.BASELINE)
        with pytest.raises(PolicyError):
            PolicyDescriptor(Control.WLS, PEVariant.DM)

    def test_labels(self):
        assert _design('DMDB-WLS') == PolicyDescriptor(Control.WLS, PEVariant.DMDB)
        assert _design('wlbp').label == 'WLBP'
        for label in DESIGN_POINTS:
            assert _design(label).label == label

    @pytest.mark.parametrize('label', ['FAST', 'DM-FAST', 'XX-PIPE', 'DM-DB-PIPE', ''])
    def test_unknown_labels(self, label):
        with pytest.raises(PolicyError):
            PolicyDescriptor.from_label(label)

    def test_valid_policies(self):
        policies = valid_policies()
        assert len(policies) == 14
        assert all(p.pe.has_shadow for p in policies if p.control is Control.WLS)


class TestBound:

    def test_single_multiply_base_is_one(self):
        assert normalized_runtime_bound(TraceStats(mm_count=1), ArrayGeometry(), _design('BASE')) == 1

    def test_single_multiply_is_relative_to_the_baseline_array(self):
        for policy in valid_policies():
            bound = normalized_runtime_bound(TraceStats(mm_count=1), ArrayGeometry(), policy)
            assert bound == (Fraction(63, 94) if policy.pe.double_multiplier else 1)
        with_overhead = TraceStats(mm_count=1, overhead_cycles=19)
        assert normalized_runtime_bound(with_overhead, ArrayGeometry(), _design('DMDB-WLS')) == Fraction(82, 113)

    def test_empty_trace(self):
        assert normalized_runtime_bound(TraceStats(), ArrayGeometry(), _design('DMDB-WLS')) == 1

    def test_bound_approaches_the_asymptote(self):
        stats = TraceStats(mm_count=100000)
        bound = normalized_runtime_bound(stats, ArrayGeometry(), _design('DMDB-WLS'))
        assert abs(float(bound) - 16 / 94.0) < 1e-3

    def test_wlbp_credits_reuse(self):
        with_reuse = TraceStats(mm_count=4, reuse_pairs=2)
        without = TraceStats(mm_count=4)
        wlbp = _design('WLBP')
        assert normalized_runtime_bound(with_reuse, ArrayGeometry(), wlbp) == Fraction(94 + 2 * 16 + 78, 4 * 94)
        assert normalized_runtime_bound(without, ArrayGeometry(), wlbp) == Fraction(94 + 3 * 78, 4 * 94)

    def test_trace_stats(self, block_gemm):
        _, trace, _, _ = block_gemm
        stats = trace_stats(trace)
        assert (stats.mm_count, stats.tl_count, stats.ts_count, stats.reuse_pairs) == (4, 8, 4, 2)
        assert stats.overhead_cycles == 16 + 3


class TestCurves:

    def test_utilization_grows_with_t_m(self):
        rows = utilization_curves([(16, 16), (32, 16), (64, 64)], [1, 2, 4, 16, 64, 256])
        assert len(rows) == 18
        for array in ('16x16', '32x16', '64x64'):
            values = [r['utilization'] for r in rows if r['array'] == array]
            assert values == sorted(values)
            assert values[-1] < 1.0

    def test_larger_arrays_idle_more(self):
        rows = utilization_curves([(16, 16), (64, 64)], [16])
        assert rows[0]['utilization'] > rows[1]['utilization']

    def test_model_rows(self):
        rows = model_rows([(32, 16, 16), (64, 32, 16)], valid_policies())
        assert len(rows) == 28
        dmdb_wls = [r for r in rows if r['pe'] == 'dmdb' and r['policy'] == 'wls' and r['t_k'] == 32][0]
        assert (dmdb_wls['latency'], dmdb_wls['ii'], dmdb_wls['utilization']) == (63, 16, 1.0)
