"""
experiments.py

Experiment descriptions and the sweeps behind the CLI subcommands. Every
simulation of a sweep is a SimCell module so cells can run in worker processes.
"""

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from tilearray.core.module import AsyncModule, run_modules
from tilearray.cpu.config import CoreConfig
from tilearray.cpu.report import with_baseline
from tilearray.cpu.simulator import run_trace
from tilearray.engine.config import ArrayConfig
from tilearray.errors import LayerError, PolicyError, TileArrayError
from tilearray.isa.bf16 import random_bf16
from tilearray.isa.tiles import TileGeometry
from tilearray.lowering.emit import MemoryLayout, build_memory_image, lower_layer, read_result, reference_gemm
from tilearray.lowering.layers import (EVALUATION_LAYERS, ConvLayer, FcLayer, default_catalog, parse_layer_file,
                                       register_layers, with_batch)
from tilearray.model.analytic import asymptotic_runtime, trace_stats, normalized_runtime_bound, utilization_curves
from tilearray.model.policy import ArrayGeometry, DESIGN_POINTS, PolicyDescriptor, Prefetch
from tilearray.tools.file import read_from_file

BASELINE_DESIGN = 'BASE'
# Batch of FC layers and spatial size of conv layers in reduced-size runs
REDUCED_FC_BATCH = 32
REDUCED_CONV_SIZE = 14
# The only evaluation conv layer a reduced run covers unless layers are named
REDUCED_CONV_LAYER = 'ResNet50-2'
DEFAULT_BATCHES = (1, 2, 4, 8, 16, 32, 64, 128, 256)
DEFAULT_FIG2_ARRAYS = ((8, 8), (16, 16), (32, 16), (32, 32), (64, 64), (128, 128))


@dataclass(frozen=True)
class ExperimentSpec:
    layers: tuple = ()
    layer_file: str = None
    designs: tuple = DESIGN_POINTS
    batches: tuple = DEFAULT_BATCHES
    tiles: TileGeometry = field(default_factory=TileGeometry)
    prefetch: Prefetch = Prefetch.ROW_CHASING
    reduced: bool = True
    out: str = 'results'
    seed: int = 0
    jobs: int = 1
    datapath: str = 'auto'
    core: CoreConfig = field(default_factory=CoreConfig)

    def __post_init__(self):
        for label in self.designs:
            PolicyDescriptor.from_label(label, self.prefetch)
        if not self.batches or any(b < 1 for b in self.batches):
            raise TileArrayError("batch sizes must be positive, got %s" % (self.batches,))

    @classmethod
    def from_dict(cls, content, **overrides):
        """
        Build an experiment from a parsed experiment file; keyword overrides (CLI flags) win over file values
        """
        values = dict(content or {})
        values.update({k: v for k, v in overrides.items() if v is not None})
        unknown = sorted(set(values) - set(cls.__dataclass_fields__))
        if unknown:
            raise TileArrayError("unknown experiment field(s): " + ", ".join(unknown))
        tiles = values.get('tiles')
        if isinstance(tiles, (list, tuple)):
            values['tiles'] = TileGeometry(*tiles)
        elif isinstance(tiles, dict):
            values['tiles'] = TileGeometry(**tiles)
        if isinstance(values.get('core'), dict):
            values['core'] = CoreConfig(**values['core'])
        if isinstance(values.get('prefetch'), str):
            values['prefetch'] = Prefetch(values['prefetch'])
        for name in ('layers', 'designs', 'batches'):
            if name in values:
                values[name] = tuple(values[name])
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides):
        return cls.from_dict(read_from_file(path), **overrides)

    def catalog(self):
        """
        Layer container: the evaluation workloads plus the experiment's descriptor file
        """
        catalog = default_catalog()
        if self.layer_file:
            with open(self.layer_file) as f:
                register_layers(catalog, parse_layer_file(f.read()), replace_existing=True)
        return catalog

    def default_layers(self, catalog):
        """
        Layers of an experiment that names none: the whole catalog, less the evaluation conv layers other than
        REDUCED_CONV_LAYER in reduced runs
        """
        skipped = set()
        if self.reduced:
            skipped = {layer.name for layer in EVALUATION_LAYERS
                       if isinstance(layer, ConvLayer) and layer.name != REDUCED_CONV_LAYER}
        return tuple(name for name in catalog.names() if name not in skipped)

    def resolve_layers(self, catalog=None):
        catalog = catalog or self.catalog()
        names = self.layers or self.default_layers(catalog)
        missing = [name for name in names if name not in catalog]
        if missing:
            raise LayerError("unknown layer(s): %s (known: %s)" % (", ".join(missing), ", ".join(catalog.names())))
        layers = [catalog[name] for name in names]
        return [reduced_layer(layer) for layer in layers] if self.reduced else layers


def reduced_layer(layer):
    """
    Desk-scale version of an evaluation layer: FC layers at batch 32, conv layers at batch 1 on a 14x14 input
    """
    if isinstance(layer, FcLayer):
        return with_batch(layer, min(layer.n, REDUCED_FC_BATCH))
    if isinstance(layer, ConvLayer):
        return replace(layer, n=1, x=min(layer.x, REDUCED_CONV_SIZE), y=min(layer.y, REDUCED_CONV_SIZE))
    raise LayerError("not a layer: %r" % (layer,))


def workload_memory(plan, seed, with_operands=False):
    """
    Memory image with seeded random BF16 operands for a lowered layer
    :return: (uint8 image, (a, b, c)) -- operands only when asked for
    """
    layout = MemoryLayout.for_plan(plan)
    rng = np.random.default_rng(seed)
    a = random_bf16(rng, (layout.m, layout.k))
    b = random_bf16(rng, (layout.k, layout.n))
    c = random_bf16(rng, (layout.m, layout.n))
    image = build_memory_image(layout, a, b, c)
    return image, ((a, b, c) if with_operands else None)


def check_result(plan, report, operands, split_pairs):
    """
    Compare the C region of a finished run with the whole-layer oracle
    :raises TileArrayError: on the first mismatching element
    """
    layout = MemoryLayout.for_plan(plan)
    got = read_result(layout, report.memory)
    want = reference_gemm(*operands, tiles=plan.geometry, split_pairs=split_pairs)
    bad = np.argwhere(got.view(np.uint32) != want.view(np.uint32))
    if bad.size:
        i, j = bad[0]
        raise TileArrayError("%s: C[%d][%d] = %r, oracle %r (%d mismatches)"
                             % (report.design, i, j, float(got[i, j]), float(want[i, j]), len(bad)))
    logging.info("%s %s: result matches the oracle", report.workload, report.design)


class SimCell(AsyncModule):
    """
    One (workload, design) simulation
    """

    def __init__(self, key, trace, memory, array, core=None, datapath='auto', record_events=False):
        super(SimCell, self).__init__()
        self.id = "%s/%s" % key[:2]
        self.key = key
        self.trace = trace
        self.memory = memory
        self.array = array
        self.core = core or CoreConfig()
        self.datapath = datapath
        self.record_events = record_events

    def run(self, kwargs=None):
        logging.debug("cell %s: %d instructions", self.id, len(self.trace))
        report = run_trace(self.trace, core=self.core, array=self.array, memory=self.memory, datapath=self.datapath,
                           record_events=self.record_events, workload=self.key[0])
        # the image stays in the worker; its digest travels with the report
        return replace(report, memory=None)


def _sorted(rows, keys):
    if not rows:
        return pd.DataFrame(rows)
    return pd.DataFrame(rows).sort_values(list(keys), kind='mergesort').reset_index(drop=True)


def design_point_rows(spec, core=None):
    """
    Simulate every layer of an experiment under every design and normalize against BASE
    :return: (per-cell DataFrame, per-design summary DataFrame)
    """
    core = core or spec.core
    designs = tuple(spec.designs)
    if BASELINE_DESIGN not in designs:
        designs = (BASELINE_DESIGN,) + designs
    cells = []
    for index, layer in enumerate(spec.resolve_layers()):
        plan, trace = lower_layer(layer, spec.tiles)
        image, _ = workload_memory(plan, spec.seed + index)
        for label in designs:
            policy = PolicyDescriptor.from_label(label, spec.prefetch)
            cells.append(SimCell((layer.name, label), trace, image, ArrayConfig.for_tiles(spec.tiles, policy),
                                 core=core, datapath=spec.datapath))
    reports = dict(zip((c.key for c in cells), run_modules(cells, jobs=spec.jobs)))

    # results are bit-identical only between designs sharing a multiplier arrangement
    reference = {}
    for label in designs:
        reference.setdefault(PolicyDescriptor.from_label(label).pe.double_multiplier, label)

    rows = []
    for (name, label), report in reports.items():
        baseline = reports[(name, BASELINE_DESIGN)]
        twin = reference[PolicyDescriptor.from_label(label).pe.double_multiplier]
        if report.memory_digest != reports[(name, twin)].memory_digest:
            raise TileArrayError("%s: %s left a different memory image than %s" % (name, label, twin))
        report = with_baseline(report, baseline)
        row = report.to_row(design_order=designs.index(label))
        row['reduction'] = round(1.0 - report.normalized, 6)
        rows.append(row)
    table = _sorted(rows, ('workload', 'design_order'))
    summary = (table.groupby(['design_order', 'design'], sort=True)
               .agg(mean_normalized=('normalized', 'mean'), mean_reduction=('reduction', 'mean'))
               .reset_index().round(6))
    return table, summary


def batch_sweep_rows(spec, layer_name, policy, core=None):
    """
    Normalized runtime of one design over the experiment's batch sizes, next to the analytic bound and asymptote
    """
    core = core or spec.core
    catalog = spec.catalog()
    if layer_name not in catalog:
        raise LayerError("unknown layer: %s (known: %s)" % (layer_name, ", ".join(catalog.names())))
    layer = catalog[layer_name]
    geom = ArrayGeometry(spec.tiles.t_k, spec.tiles.t_n, spec.tiles.t_m)
    asymptote = float(asymptotic_runtime(geom, policy))
    cells = []
    traces = {}
    for batch in sorted(set(spec.batches)):
        plan, trace = lower_layer(with_batch(layer, batch), spec.tiles)
        traces[batch] = trace
        image, _ = workload_memory(plan, spec.seed)
        for design in (PolicyDescriptor.from_label(BASELINE_DESIGN, spec.prefetch), policy):
            cells.append(SimCell((layer_name, design.label, batch), trace, image,
                                 ArrayConfig.for_tiles(spec.tiles, design), core=core, datapath=spec.datapath))
    reports = dict(zip((c.key for c in cells), run_modules(cells, jobs=spec.jobs)))

    rows = []
    for batch, trace in traces.items():
        report = with_baseline(reports[(layer_name, policy.label, batch)],
                               reports[(layer_name, BASELINE_DESIGN, batch)])
        row = report.to_row(batch=batch)
        row['bound'] = round(float(normalized_runtime_bound(trace_stats(trace, core), geom, policy)), 6)
        row['asymptote'] = round(asymptote, 6)
        rows.append(row)
    return _sorted(rows, ('batch',))


def fig2_rows(array_sizes=DEFAULT_FIG2_ARRAYS, t_m_max=256):
    if t_m_max < 1:
        raise PolicyError("T_M range must reach at least 1, got %d" % t_m_max)
    return pd.DataFrame(utilization_curves(array_sizes, range(1, t_m_max + 1)))


def write_table(table, path):
    """
    Write a result table as CSV, creating the directory
    """
    directory = os.path.dirname(path)
    if directory and not os.path.isdir(directory):
        os.makedirs(directory)
    pd.DataFrame(table).to_csv(path, index=False)
    logging.info("wrote %s (%d rows)", path, len(table))
    return path


def append_row(row, path):
    """
    Append one row to a results CSV, widening the columns when the row brings new ones
    """
    frame = pd.DataFrame([row])
    if os.path.exists(path):
        frame = pd.concat([pd.read_csv(path), frame], ignore_index=True, sort=False)
    return write_table(frame, path)
