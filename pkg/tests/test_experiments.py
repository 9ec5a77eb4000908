import pytest

from tilearray.cli.experiments import REDUCED_CONV_LAYER, ExperimentSpec, batch_sweep_rows
from tilearray.cpu.simulator import run_trace
from tilearray.engine.config import ArrayConfig
from tilearray.isa.tiles import TileGeometry
from tilearray.lowering.emit import lower_layer
from tilearray.lowering.layers import ConvLayer, default_catalog
from tilearray.model.policy import PolicyDescriptor

# total cycles strictly shrink along this list
ORDERED = ('BASE', 'PIPE', 'WLBP', 'DB-WLS')
DESIGNS = ORDERED + ('DM-WLBP', 'DMDB-WLS')


def _reduced(name):
    return ExperimentSpec(layers=(name,)).resolve_layers()[0]


def _totals(layer, labels=DESIGNS):
    _, trace = lower_layer(layer, TileGeometry())
    totals = {}
    for label in labels:
        array = ArrayConfig.for_tiles(trace.geometry, PolicyDescriptor.from_label(label))
        totals[label] = run_trace(trace, array=array, datapath='tile', workload=layer.name).total_cycles
    return totals


def _check_ordering(name, totals):
    ordered = [totals[label] for label in ORDERED]
    assert all(slower > faster for slower, faster in zip(ordered, ordered[1:])), (name, totals)
    assert totals['DM-WLBP'] < totals['WLBP'], name
    assert abs(totals['DB-WLS'] - totals['DMDB-WLS']) <= 0.05 * totals['DMDB-WLS'], (name, totals)


class TestReducedLayers:

    def test_default_set(self):
        layers = ExperimentSpec().resolve_layers()
        assert [layer.name for layer in layers] == [REDUCED_CONV_LAYER, 'DLRM-1', 'DLRM-2', 'DLRM-3',
                                                    'BERT-1', 'BERT-2', 'BERT-3']
        conv = layers[0]
        assert isinstance(conv, ConvLayer)
        assert (conv.n, conv.x, conv.y) == (1, 14, 14)
        assert all(layer.n == 32 for layer in layers[1:])

    def test_full_runs_cover_the_catalog(self):
        spec = ExperimentSpec(reduced=False)
        assert [layer.name for layer in spec.resolve_layers()] == default_catalog().names()

    def test_named_layers_win(self):
        assert _reduced('ResNet50-1').name == 'ResNet50-1'

    def test_double_buffering_keeps_up_with_double_multipliers(self):
        totals = _totals(_reduced(REDUCED_CONV_LAYER), ('DB-WLS', 'DMDB-WLS'))
        assert abs(totals['DB-WLS'] - totals['DMDB-WLS']) <= 0.05 * totals['DMDB-WLS']

    @pytest.mark.parametrize('name', [REDUCED_CONV_LAYER, 'DLRM-2'])
    def test_policy_ordering(self, name):
        _check_ordering(name, _totals(_reduced(name)))

    @pytest.mark.slow
    def test_policy_ordering_on_every_default_layer(self):
        for layer in ExperimentSpec().resolve_layers():
            _check_ordering(layer.name, _totals(layer))


class TestBatchSweep:

    def _sweep(self, batches):
        spec = ExperimentSpec(batches=batches, datapath='tile')
        return batch_sweep_rows(spec, 'DLRM-2', PolicyDescriptor.from_label('DMDB-WLS'))

    def test_small_batches_share_one_trace(self):
        table = self._sweep((1, 2, 4, 8, 16, 32, 64))
        assert list(table['batch']) == [1, 2, 4, 8, 16, 32, 64]
        small = table[table['batch'] <= 16]
        assert small['mm_count'].nunique() == 1
        assert small['total_cycles'].nunique() == 1
        assert small['normalized'].nunique() == 1
        normalized = list(table['normalized'])
        assert normalized == sorted(normalized, reverse=True)
        assert (table['normalized'] >= table['asymptote']).all()

    @pytest.mark.slow
    def test_large_batch_reaches_the_asymptote(self):
        table = self._sweep((1, 64, 4096))
        last = table.iloc[-1]
        assert last['batch'] == 4096
        assert abs(last['normalized'] - last['asymptote']) <= 0.05 * last['asymptote']
        normalized = list(table['normalized'])
        assert normalized == sorted(normalized, reverse=True)
