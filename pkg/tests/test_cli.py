import json
import os

import pandas as pd
import pytest

from tilearray.cli.main import build_parser, main

LAYERS = """\
fc name=tiny n=32 nin=64 non=32
conv name=patch n=1 k=16 c=4 x=6 y=6 r=3 s=3
"""


@pytest.fixture
def layer_file(tmp_path):
    path = tmp_path / 'layers.txt'
    path.write_text(LAYERS)
    return str(path)


def _read(path):
    with open(path, 'rb') as f:
        return f.read()


class TestParser:

    def test_sim_needs_a_source(self):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(['sim'])
        assert info.value.code == 2

    def test_unknown_policy(self):
        with pytest.raises(SystemExit) as info:
            main(['sim', '--layer', 'tiny', '--policy', 'turbo'])
        assert info.value.code == 2

    def test_wls_needs_shadow_buffers(self, tmp_path, layer_file):
        with pytest.raises(SystemExit) as info:
            main(['sim', '--layer', 'tiny', '--layer-file', layer_file, '--pe', 'dm', '--policy', 'wls',
                  '--out', str(tmp_path)])
        assert info.value.code == 2

    def test_array_and_tiles_must_agree(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(['model', '--array', '16x16', '--tiles', '16x32x16', '--out', str(tmp_path)])
        assert info.value.code == 2

    def test_bad_tiles(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['model', '--tiles', '16x33x16'])


class TestCommands:

    def test_lower_then_sim(self, tmp_path, layer_file, capsys):
        out = str(tmp_path / 'out')
        assert main(['lower', 'tiny', '--layer-file', layer_file, '--out', out]) == 0
        assert 'tiny' in capsys.readouterr().out
        lowered = pd.read_csv(os.path.join(out, 'lower.csv'))
        assert list(lowered['mm_count']) == [8]
        assert os.path.exists(os.path.join(out, 'tilearray.log'))

        trace = os.path.join(out, 'tiny.trace')
        assert main(['sim', '--trace', trace, '--pe', 'dm', '--policy', 'pipe', '--baseline', '--out', out]) == 0
        with open(os.path.join(out, 'tiny-DM-PIPE.json')) as f:
            report = json.load(f)
        assert report['mm_count'] == 8
        assert 0 < report['normalized'] < 1
        results = pd.read_csv(os.path.join(out, 'results.csv'))
        assert list(results['design']) == ['DM-PIPE']

    def test_sim_layer_with_check(self, tmp_path, layer_file):
        out = str(tmp_path)
        assert main(['sim', '--layer', 'patch', '--layer-file', layer_file, '--pe', 'dmdb', '--policy', 'wls',
                     '--check', '--heatmap', '--trace-cycles', '--out', out]) == 0
        for name in ('patch-DMDB-WLS.json', 'patch-DMDB-WLS.cycles.txt', 'patch-DMDB-WLS-occupancy.svg'):
            assert os.path.exists(os.path.join(out, name))
        assert main(['sim', '--layer', 'patch', '--layer-file', layer_file, '--out', out]) == 0
        assert len(pd.read_csv(os.path.join(out, 'results.csv'))) == 2

    def test_check_needs_a_layer(self, tmp_path, layer_file):
        out = str(tmp_path)
        assert main(['lower', 'tiny', '--layer-file', layer_file, '--out', out]) == 0
        with pytest.raises(SystemExit):
            main(['sim', '--trace', os.path.join(out, 'tiny.trace'), '--check', '--out', out])

    def test_missing_trace_file(self, tmp_path):
        assert main(['sim', '--trace', str(tmp_path / 'nowhere.trace'), '--out', str(tmp_path)]) == 1

    def test_unknown_report_layer(self, tmp_path):
        assert main(['report', 'nosuch', '--out', str(tmp_path)]) == 1

    def test_model(self, tmp_path):
        out = str(tmp_path)
        assert main(['model', '--geometries', '16x32x16', '16x16x16', '--layer', 'DLRM-2', '--out', out]) == 0
        table = pd.read_csv(os.path.join(out, 'model.csv'))
        assert len(table) == 28
        row = table[(table.t_k == 32) & (table.policy == 'base') & (table.pe == 'baseline')].iloc[0]
        assert (row['latency'], row['ii'], row['bound']) == (94, 94, 1.0)

    def test_fig2(self, tmp_path):
        out = str(tmp_path)
        assert main(['fig2', '--arrays', '16x16', '32x16', '--tm-max', '32', '--out', out]) == 0
        table = pd.read_csv(os.path.join(out, 'fig2.csv'))
        assert len(table) == 64
        assert os.path.exists(os.path.join(out, 'fig2.svg'))

    def test_sweep_batch(self, tmp_path, layer_file):
        out = str(tmp_path)
        assert main(['sweep-batch', '--layer', 'tiny', '--layer-file', layer_file, '--batches', '1', '4', '16',
                     '--out', out]) == 0
        table = pd.read_csv(os.path.join(out, 'batch_sweep.csv'))
        assert list(table['batch']) == [1, 4, 16]
        assert (table['design'] == 'DMDB-WLS').all()
        assert (table['normalized'] < 1).all()

    def test_report_from_a_config_file(self, tmp_path, layer_file):
        out = str(tmp_path / 'out')
        config = tmp_path / 'experiment.yaml'
        config.write_text("layers: [tiny, patch]\nlayer_file: %s\ndesigns: [DM-PIPE, DMDB-WLS]\nseed: 3\n" % layer_file)
        assert main(['report', '--config', str(config), '--out', out]) == 0
        summary = pd.read_csv(os.path.join(out, 'report_summary.csv'))
        assert list(summary['design']) == ['BASE', 'DM-PIPE', 'DMDB-WLS']
        assert summary['mean_normalized'][0] == 1.0
        assert (summary['mean_normalized'][1:] < 1).all()
        assert len(pd.read_csv(os.path.join(out, 'report.csv'))) == 6

    def test_unknown_design(self, tmp_path):
        with pytest.raises(SystemExit):
            main(['report', '--designs', 'BASE', 'DM-WLS', '--out', str(tmp_path)])

    def test_outputs_are_reproducible(self, tmp_path, layer_file):
        outputs = []
        for run in ('first', 'second'):
            out = str(tmp_path / run)
            assert main(['report', 'tiny', '--layer-file', layer_file, '--designs', 'WLBP', 'DB-WLS',
                         '--out', out]) == 0
            outputs.append([_read(os.path.join(out, name)) for name in ('report.csv', 'report_summary.csv',
                                                                       'report.svg')])
        assert outputs[0] == outputs[1]

    def test_cycle_logs_are_reproducible(self, tmp_path, layer_file):
        logs = []
        for run in ('first', 'second'):
            out = str(tmp_path / run)
            assert main(['sim', '--layer', 'patch', '--layer-file', layer_file, '--pe', 'dmdb', '--policy', 'wls',
                         '--datapath', 'systolic', '--trace-cycles', '--out', out]) == 0
            logs.append(_read(os.path.join(out, 'patch-DMDB-WLS.cycles.txt')))
        assert logs[0] == logs[1]
        assert b' busy ' in logs[0]

    def test_cycle_log_on_the_tile_datapath_warns(self, tmp_path, layer_file, caplog):
        out = str(tmp_path)
        assert main(['sim', '--layer', 'patch', '--layer-file', layer_file, '--datapath', 'tile', '--trace-cycles',
                     '--out', out]) == 0
        assert any(r.levelname == 'WARNING' and 'per-PE busy lines' in r.getMessage() for r in caplog.records)
        assert os.path.exists(os.path.join(out, 'patch-BASE.cycles.txt'))
