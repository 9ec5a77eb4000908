"""
main.py

Command-line driver: lower layers to traces, simulate traces, evaluate the
analytic model and run the batch, utilization and design-point studies.

    tilearray lower DLRM-1 --out traces
    tilearray sim --layer BERT-1 --pe dmdb --policy wls --baseline
    tilearray report --jobs 4 --out results

Exit codes: 0 ok, 1 simulation error, 2 usage error.
"""

import argparse
import logging
import os
import sys

import pandas as pd

from tilearray.cli import charts
from tilearray.cli.experiments import (DEFAULT_FIG2_ARRAYS, ExperimentSpec, append_row,
                                       batch_sweep_rows, check_result, design_point_rows, fig2_rows, reduced_layer,
                                       workload_memory, write_table)
from tilearray.cpu.report import with_baseline
from tilearray.cpu.simulator import run_trace
from tilearray.engine.config import DATAPATHS, ArrayConfig
from tilearray.engine.stats import pe_occupancy
from tilearray.engine.systolic import resolve_datapath
from tilearray.errors import PolicyError, TileArrayError
from tilearray.isa.tiles import TileGeometry
from tilearray.isa.trace import format_trace, parse_trace
from tilearray.lowering.emit import count_weight_reuse, lower_layer
from tilearray.lowering.gemm import to_gemm
from tilearray.lowering.layers import describe, parse_layer_file
from tilearray.lowering.tiling import ORDERS
from tilearray.model.analytic import model_rows, normalized_runtime_bound, trace_stats
from tilearray.model.policy import ArrayGeometry, Control, PEVariant, PolicyDescriptor, Prefetch, valid_policies
from tilearray.tools.file import write_text

LOG_FILE = 'tilearray.log'


def _dims(text, count, what):
    parts = text.lower().split('x')
    try:
        values = [int(p) for p in parts]
    except ValueError:
        values = []
    if len(values) != count or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("expected %s, got '%s'" % (what, text))
    return tuple(values)


def tiles_arg(text):
    t_m, t_k, t_n = _dims(text, 3, 'TMxTKxTN')
    try:
        return TileGeometry(t_m, t_k, t_n)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def array_arg(text):
    return _dims(text, 2, 'RxC')


def common_parser():
    """
    Flags shared by every subcommand
    """
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--array", help="array of RxC baseline PEs (R weight rows, C columns)", dest='array',
                        type=array_arg, metavar='RxC')
    parser.add_argument("--tiles", help="machine tile dims, default 16x32x16", dest='tiles', type=tiles_arg,
                        metavar='TMxTKxTN')
    parser.add_argument("--pe", help="PE datapath variant", dest='pe', choices=[v.value for v in PEVariant])
    parser.add_argument("--policy", help="array control policy", dest='policy', choices=[c.value for c in Control])
    parser.add_argument("--prefetch", help="weight prefetch model of WLS", dest='prefetch',
                        choices=[p.value for p in Prefetch])
    parser.add_argument("--seed", help="seed of the random operands", dest='seed', type=int)
    parser.add_argument("--out", help="output directory", dest='out')
    parser.add_argument("--jobs", help="worker processes for sweeps", dest='jobs', type=int)
    parser.add_argument("--datapath", help="engine datapath", dest='datapath', choices=DATAPATHS)
    parser.add_argument("--config", help="experiment file (.yaml/.yml or .json); flags override it", dest='config')
    parser.add_argument("--trace-cycles", help="write the per-cycle engine event log", dest='trace_cycles',
                        action='store_true', default=False)
    parser.add_argument("--verbose", help="Turn on DEBUG logging", action='store_true', required=False)
    return parser


def build_parser():
    common = common_parser()
    parser = argparse.ArgumentParser(prog='tilearray', description='Weight-stationary matrix engine simulator')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    lower = sub.add_parser('lower', parents=[common], help="lower layers to tile instruction traces")
    lower.add_argument("layers", help="layer names (default: every known layer)", nargs='*')
    lower.add_argument("--layer-file", help="layer descriptor file", dest='layer_file')
    lower.add_argument("--order", help="fold order", dest='order', choices=ORDERS, default='blocked')
    lower.add_argument("--reduced", help="lower desk-scale versions of the layers", action='store_true')
    lower.set_defaults(func=cmd_lower)

    sim = sub.add_parser('sim', parents=[common], help="simulate one trace")
    source = sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--trace", help="trace file", dest='trace')
    source.add_argument("--layer", help="lower and simulate this layer", dest='layer')
    sim.add_argument("--layer-file", help="layer descriptor file", dest='layer_file')
    sim.add_argument("--reduced", help="simulate the desk-scale version of the layer", action='store_true')
    sim.add_argument("--baseline", help="also run BASE and report the normalized runtime", action='store_true')
    sim.add_argument("--check", help="compare the result with the functional oracle (--layer only)",
                     action='store_true')
    sim.add_argument("--heatmap", help="write the per-PE occupancy heatmap", action='store_true')
    sim.set_defaults(func=cmd_sim)

    model = sub.add_parser('model', parents=[common], help="analytic latency, II and utilization table")
    model.add_argument("--geometries", help="geometries to tabulate", dest='geometries', type=tiles_arg, nargs='+',
                       metavar='TMxTKxTN')
    model.add_argument("--layer", help="add the normalized runtime bound of this layer", dest='layer')
    model.set_defaults(func=cmd_model)

    sweep = sub.add_parser('sweep-batch', parents=[common], help="normalized runtime over batch sizes")
    sweep.add_argument("--layer", help="layer to sweep", dest='layer', default='DLRM-1')
    sweep.add_argument("--batches", help="batch sizes", dest='batches', type=int, nargs='+')
    sweep.add_argument("--layer-file", help="layer descriptor file", dest='layer_file')
    sweep.set_defaults(func=cmd_sweep_batch)

    fig2 = sub.add_parser('fig2', parents=[common], help="single-multiply PE utilization over T_M")
    fig2.add_argument("--arrays", help="array sizes", dest='arrays', type=array_arg, nargs='+', metavar='RxC')
    fig2.add_argument("--tm-max", help="largest T_M", dest='tm_max', type=int, default=256)
    fig2.set_defaults(func=cmd_fig2)

    report = sub.add_parser('report', parents=[common], help="design-point comparison over layers")
    report.add_argument("layers", help="layer names (default: every known layer)", nargs='*')
    report.add_argument("--layer-file", help="layer descriptor file", dest='layer_file')
    report.add_argument("--designs", help="design points", dest='designs', nargs='+', metavar='DESIGN')
    report.add_argument("--full", help="simulate full-size layers instead of desk-scale ones", action='store_true')
    report.set_defaults(func=cmd_report)
    return parser


def setup_logging(verbose, out=None):
    log_level = logging.INFO

    if verbose:
        log_level = logging.DEBUG

    logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)
    handlers = []
    if out:
        if not os.path.isdir(out):
            os.makedirs(out)
        # create file handler which logs even debug messages
        fh = logging.FileHandler(os.path.join(out, LOG_FILE))
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(logging.Formatter('%(asctime)s - %(levelname)8s: %(message)s'))
        handlers.append(fh)
    # create console handler using level set in log_level
    ch = logging.StreamHandler()
    ch.setLevel(log_level)
    ch.setFormatter(logging.Formatter('%(levelname)8s: %(message)s'))
    handlers.append(ch)
    for handler in handlers:
        logger.addHandler(handler)
    return handlers


def teardown_logging(handlers):
    logger = logging.getLogger()
    for handler in handlers:
        logger.removeHandler(handler)
        handler.close()


def experiment_spec(args, parser, **fields):
    """
    ExperimentSpec from the --config file with the command-line flags laid over it
    """
    tiles = args.tiles
    if args.array:
        rows, cols = args.array
        if tiles is not None and (tiles.t_k, tiles.t_n) != (rows, cols):
            parser.error("--array %dx%d disagrees with --tiles %s" % (rows, cols, "x".join(map(str, tiles.as_tuple()))))
        if tiles is None:
            try:
                tiles = TileGeometry(TileGeometry().t_m, rows, cols)
            except ValueError as e:
                parser.error("--array: " + str(e))
    overrides = dict(tiles=tiles, seed=args.seed, out=args.out, jobs=args.jobs, datapath=args.datapath,
                     prefetch=Prefetch(args.prefetch) if args.prefetch else None,
                     layer_file=getattr(args, 'layer_file', None))
    overrides.update(fields)
    if args.config:
        return ExperimentSpec.load(args.config, **overrides)
    return ExperimentSpec.from_dict({}, **overrides)


def design_policy(args, parser, spec, default=(Control.BASE, PEVariant.BASELINE)):
    control = Control(args.policy) if args.policy else default[0]
    pe = PEVariant(args.pe) if args.pe else default[1]
    try:
        return PolicyDescriptor(control, pe, spec.prefetch)
    except PolicyError as e:
        parser.error(str(e))


def _layer_names(args, spec, catalog):
    if args.layers:
        return args.layers
    if spec.layer_file:
        with open(spec.layer_file) as f:
            return [layer.name for layer in parse_layer_file(f.read())]
    return catalog.names()


def cmd_lower(args, parser):
    spec = experiment_spec(args, parser)
    catalog = spec.catalog()
    names = _layer_names(args, spec, catalog)
    spec = ExperimentSpec.from_dict({}, **dict(spec.__dict__, layers=tuple(names), reduced=args.reduced))
    rows = []
    for layer in spec.resolve_layers(catalog):
        plan, trace = lower_layer(layer, spec.tiles, order=args.order)
        path = write_text(os.path.join(spec.out, layer.name + '.trace'), format_trace(trace))
        counts = trace.counts()
        dims = to_gemm(layer)
        rows.append({'layer': layer.name, 'm': dims.m, 'n': dims.n, 'k': dims.k, 'm_folds': plan.folds[0],
                     'k_folds': plan.folds[1], 'n_folds': plan.folds[2], 'mm_count': counts['MM'],
                     'tl_count': counts['TL'], 'ts_count': counts['TS'], 'weight_reuse': count_weight_reuse(trace),
                     'order': args.order, 'tiles': "x".join(map(str, spec.tiles.as_tuple())),
                     'trace_sha256': trace.digest()})
        logging.info("%s -> %s", describe(layer), path)
        print("%-12s MM %8d  TL %8d  TS %6d" % (layer.name, counts['MM'], counts['TL'], counts['TS']))
    write_table(rows, os.path.join(spec.out, 'lower.csv'))
    return 0


def _sim_flags(args, spec):
    return {'source': args.trace or args.layer, 'tiles': "x".join(map(str, spec.tiles.as_tuple())),
            'seed': spec.seed, 'datapath': spec.datapath, 'width': spec.core.width,
            'tileload_latency': spec.core.tileload_latency, 'reduced': bool(args.reduced)}


def cmd_sim(args, parser):
    spec = experiment_spec(args, parser, reduced=args.reduced)
    policy = design_policy(args, parser, spec)
    plan = operands = memory = None
    if args.trace:
        if args.check:
            parser.error("--check needs --layer")
        with open(args.trace) as f:
            trace = parse_trace(f.read())
        workload = os.path.splitext(os.path.basename(args.trace))[0]
        if args.tiles is None and args.array is None:
            spec = ExperimentSpec.from_dict({}, **dict(spec.__dict__, tiles=trace.geometry))
    else:
        catalog = spec.catalog()
        if args.layer not in catalog:
            parser.error("unknown layer '%s'" % args.layer)
        layer = catalog[args.layer]
        layer = reduced_layer(layer) if args.reduced else layer
        workload = layer.name
        plan, trace = lower_layer(layer, spec.tiles)
        memory, operands = workload_memory(plan, spec.seed, with_operands=args.check)

    array = ArrayConfig.for_tiles(spec.tiles, policy)
    if args.trace_cycles and resolve_datapath(spec.datapath, trace.mm_count) == 'tile':
        logging.warning("%s: the tile datapath records stage events only, no per-PE busy lines "
                        "(%d multiplies; use --datapath systolic for them)", workload, trace.mm_count)
    report = run_trace(trace, core=spec.core, array=array, memory=memory, datapath=spec.datapath,
                       record_events=args.trace_cycles, workload=workload)
    if args.check:
        check_result(plan, report, operands, split_pairs=policy.pe.double_multiplier)
    if args.baseline:
        base = ArrayConfig.for_tiles(spec.tiles, PolicyDescriptor(prefetch=spec.prefetch))
        baseline = run_trace(trace, core=spec.core, array=base, memory=memory, datapath=spec.datapath,
                             workload=workload)
        report = with_baseline(report, baseline)

    stem = os.path.join(spec.out, "%s-%s" % (workload, report.design))
    write_text(stem + '.json', report.to_json() + "\n")
    append_row(report.to_row(**_sim_flags(args, spec)), os.path.join(spec.out, 'results.csv'))
    if args.trace_cycles:
        write_text(stem + '.cycles.txt', "\n".join(report.engine.events) + "\n")
    if args.heatmap:
        charts.occupancy_heatmap(pe_occupancy(report.engine), stem + '-occupancy.svg',
                                 title="%s %s PE occupancy" % (workload, report.design))
    print(report.to_json())
    return 0


def cmd_model(args, parser):
    spec = experiment_spec(args, parser)
    geometries = [(g.t_k, g.t_n, g.t_m) for g in (args.geometries or [spec.tiles])]
    if args.policy or args.pe:
        policies = [design_policy(args, parser, spec)]
    else:
        policies = valid_policies(spec.prefetch)
    table = pd.DataFrame(model_rows(geometries, policies))
    if args.layer:
        catalog = spec.catalog()
        if args.layer not in catalog:
            parser.error("unknown layer '%s'" % args.layer)
        stats_by_tiles = {}
        bounds = []
        for row in table.itertuples():
            key = (int(row.t_m), int(row.t_k), int(row.t_n))
            if key not in stats_by_tiles:
                _, trace = lower_layer(catalog[args.layer], TileGeometry(*key))
                stats_by_tiles[key] = trace_stats(trace, spec.core)
            policy = PolicyDescriptor(Control(row.policy), PEVariant(row.pe), Prefetch(row.prefetch))
            bound = normalized_runtime_bound(stats_by_tiles[key], ArrayGeometry(key[1], key[2], key[0]), policy)
            bounds.append(round(float(bound), 6))
        table['layer'] = args.layer
        table['bound'] = bounds
    write_table(table, os.path.join(spec.out, 'model.csv'))
    print(table.to_string(index=False))
    return 0


def cmd_sweep_batch(args, parser):
    spec = experiment_spec(args, parser, batches=tuple(args.batches) if args.batches else None)
    policy = design_policy(args, parser, spec, default=(Control.WLS, PEVariant.DMDB))
    table = batch_sweep_rows(spec, args.layer, policy)
    write_table(table, os.path.join(spec.out, 'batch_sweep.csv'))
    curves = pd.concat([pd.DataFrame({'batch': table['batch'], 'value': table[column], 'series': column})
                        for column in ('normalized', 'bound', 'asymptote')], ignore_index=True)
    charts.line_chart(curves, 'batch', 'value', 'series', os.path.join(spec.out, 'batch_sweep.svg'),
                      title="%s %s" % (args.layer, policy.label), ylabel='normalized runtime', logx=True)
    print(table[['batch', 'mm_count', 'total_cycles', 'normalized', 'bound', 'asymptote']].to_string(index=False))
    return 0


def cmd_fig2(args, parser):
    spec = experiment_spec(args, parser)
    if args.tm_max < 1:
        parser.error("--tm-max must be at least 1")
    table = fig2_rows(args.arrays or DEFAULT_FIG2_ARRAYS, args.tm_max)
    write_table(table, os.path.join(spec.out, 'fig2.csv'))
    charts.line_chart(table, 't_m', 'utilization', 'array', os.path.join(spec.out, 'fig2.svg'),
                      title='PE utilization of one multiply', xlabel='T_M', logx=True)
    return 0


def cmd_report(args, parser):
    designs = tuple(d.upper() for d in args.designs) if args.designs else None
    try:
        spec = experiment_spec(args, parser, layers=tuple(args.layers) or None, designs=designs,
                               reduced=False if args.full else None)
    except PolicyError as e:
        parser.error(str(e))
    table, summary = design_point_rows(spec)
    write_table(table, os.path.join(spec.out, 'report.csv'))
    write_table(summary, os.path.join(spec.out, 'report_summary.csv'))
    charts.bar_chart(list(summary['design']), list(summary['mean_normalized']), os.path.join(spec.out, 'report.svg'),
                     title='runtime normalized to BASE', ylabel='normalized runtime')
    for row in summary.itertuples():
        logging.info("%-10s normalized %.3f  reduction %5.1f%%", row.design, row.mean_normalized,
                     100.0 * row.mean_reduction)
    print(summary.to_string(index=False))
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = setup_logging(args.verbose, args.out)
    logging.debug("INIT %s", " ".join(sys.argv[1:] if argv is None else argv))
    try:
        return args.func(args, parser)
    except TileArrayError as e:
        logging.error(str(e))
        if getattr(e, 'traceback', None):
            logging.debug(e.traceback)
        return 1
    except (OSError, ValueError) as e:
        logging.error(str(e))
        return 1
    finally:
        teardown_logging(handlers)
