"""Command-line entry point.

Subcommands::

    gen-net    write the layer instances of a run configuration as edge lists
    net-props  structural properties of merged layers (sweep config or edge-list files)
    run        play a run configuration, writing run records (and optionally series)
    sweep      run a sweep grid, writing per-cell statistics
    correlate  correlation of convergence ratio with APL and CC (Spearman or Pearson)
    replay     re-execute a recorded run with series recording on
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import experiment as ex
from .config import ConfigError, RunSpec, dump_config, parse_config
from .metrics import UndefinedMetricError, graph_properties
from .network import ParameterError, format_edge_list, merge_graphs, read_edge_list

log = logging.getLogger("multiplex_consensus")

FULL_SCALE_RUNS = 3000


class CliError(Exception):
    pass


def _load(path, seed=None, kind=None):
    try:
        text = Path(path).read_text()
        spec = parse_config(text)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}") from None
    except ConfigError as exc:
        raise CliError(f"{path}:\n" + "\n".join(f"  {p}" for p in exc.problems)) from None
    if seed is None and "seed" not in (yaml.safe_load(text) or {}):
        generated = spec.seed if isinstance(spec, RunSpec) else spec.master_seed
        print(f"seed: {generated}  (generated; pass --seed {generated} to repeat)", file=sys.stderr)
    if kind is not None and not isinstance(spec, kind):
        want = "run" if kind is RunSpec else "sweep"
        raise CliError(f"{path}: expected a '{want}' configuration")
    if seed is not None:
        spec = replace(spec, **({"seed": seed} if isinstance(spec, RunSpec) else {"master_seed": seed}))
    return spec


def _emit(text: str, out: str | None):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _echo_config(spec, out):
    """Write the normalized configuration next to the output so results are self-describing."""
    text = dump_config(spec)
    if out and out != "-":
        Path(str(out) + ".config.yaml").write_text(text)
    else:
        sys.stderr.write("# normalized configuration\n" + text)


def _sweep_spec(args):
    spec = _load(args.config, args.seed, ex.SweepSpec)
    if args.full_scale:
        spec = replace(spec, runs_per_cell=FULL_SCALE_RUNS, instances=100)
    return spec


def cmd_gen_net(args) -> int:
    spec = _load(args.config, args.seed, RunSpec)
    cell = spec.cell
    seed = ex.derive_seed(spec.seed, cell.cell_id, args.run)
    layers = ex.build_layers(cell, spec.agents, np.random.default_rng(seed))
    out = Path(args.out)
    if args.merge:
        out.write_text(format_edge_list(merge_graphs(list(layers))))
    elif len(layers) == 1:
        out.write_text(format_edge_list(layers[0]))
    else:
        for i, g in enumerate(layers):
            out.with_name(f"{out.stem}_L{i}{out.suffix}").write_text(format_edge_list(g))
    _echo_config(spec, args.out)
    return 0


def cmd_net_props(args) -> int:
    if args.graphs:
        rows = []
        for i, path in enumerate(args.graphs):
            p = graph_properties(read_edge_list(path))
            rows.append([path, 0, p.edge_count, ex._num(p.clustering_coefficient),
                         ex._num(p.avg_path_length), ex._num(p.reachable_pair_fraction)])
        _emit(ex._csv(ex.PROPERTY_COLUMNS, rows), args.out)
        return 0
    if not args.config:
        raise CliError("net-props needs --config or edge-list files")
    spec = _sweep_spec(args)
    props, errors = ex.network_property_sweep(spec)
    _emit(ex.property_csv(props), args.out)
    _echo_config(spec, args.out)
    for cid, msg in errors.items():
        log.error("configuration %s failed: %s", cid, msg)
    return 1 if errors else 0


def cmd_run(args) -> int:
    spec = _load(args.config, args.seed, RunSpec)
    record = spec.record_series or args.series is not None
    cell = spec.cell
    for layer in cell.layer_specs():
        layer.validate(spec.agents)
    results = [
        ex.simulate(cell, ex.derive_seed(spec.seed, cell.cell_id, i), spec.agents, spec.max_cycles,
                    record_series=record, initial_opinions=spec.initial_opinions)
        for i in range(spec.runs)
    ]
    _emit(ex.run_records_csv(results), args.out)
    if args.series is not None:
        target = Path(args.series)
        for i, r in enumerate(results):
            path = target if spec.runs == 1 else target.with_name(f"{target.stem}_{i}{target.suffix}")
            path.write_text(ex.series_csv(r))
    _echo_config(spec, args.out)
    return 0


def cmd_sweep(args) -> int:
    spec = _sweep_spec(args)
    result = ex.run_sweep(spec, workers=args.workers)
    _emit(ex.sweep_csv(result), args.out)
    if args.records:
        cells, runs = [], []
        for cell, rs in result.runs.items():
            cells += [cell.cell_id] * len(rs)
            runs += rs
        Path(args.records).write_text(ex.run_records_csv(runs, cells))
    _echo_config(spec, args.out)
    for cell, msg in result.errors.items():
        log.error("cell %s failed: %s", cell.cell_id, msg)
    return 0 if result.ok else 1


def cmd_correlate(args) -> int:
    rows = []
    if args.sweep_csv:
        if not args.props_csv:
            raise CliError("--sweep-csv needs --props-csv")
        sweep = ex.read_sweep_csv(Path(args.sweep_csv).read_text())
        props = ex.read_property_csv(Path(args.props_csv).read_text())
        families = {}
        for cell, stats in sweep.stats.items():
            families.setdefault(cell.topology, ex.SweepResult(sweep.spec)).stats[cell] = stats
        for family, part in families.items():
            rows += ex.correlation_rows(family, ex.correlate_structure_convergence(part, props, args.method))
    else:
        if not args.config:
            raise CliError("correlate needs --config or --sweep-csv/--props-csv")
        for path in args.config:
            spec = _load(path, args.seed, ex.SweepSpec)
            if args.full_scale:
                spec = replace(spec, runs_per_cell=FULL_SCALE_RUNS, instances=100)
            sweep = ex.run_sweep(spec, workers=args.workers)
            props, _ = ex.network_property_sweep(spec)
            rows += ex.correlation_rows(spec.topology, ex.correlate_structure_convergence(sweep, props, args.method))
    _emit(ex.correlation_csv(rows), args.out)
    return 0


def _pick_record(path, row, cell_id):
    with open(path, newline="") as fh:
        records = list(csv.DictReader(fh))
    if cell_id is not None:
        records = [r for r in records if r.get("cell_id") == cell_id]
    if not records:
        raise CliError("no matching run record")
    if row >= len(records):
        raise CliError(f"record row {row} out of range ({len(records)} records)")
    return records[row]


def replay(record: dict, spec, cell_id: str | None = None):
    """Re-run a recorded run with series recording; raise if the outcome differs."""
    seed = int(record["seed"])
    if isinstance(spec, RunSpec):
        cell, agents, max_cycles, init = spec.cell, spec.agents, spec.max_cycles, spec.initial_opinions
        frozen = False
    else:
        wanted = cell_id or record.get("cell_id")
        matches = [c for c in spec.cells() if c.cell_id == wanted]
        if not matches:
            raise CliError(f"cell {wanted!r} is not part of this sweep configuration")
        cell, agents, max_cycles, init = matches[0], spec.agents, spec.max_cycles, spec.initial_opinions
        frozen = spec.frozen_networks
    if record["protocol"] != cell.protocol:
        raise CliError(f"record protocol {record['protocol']!r} does not match config ({cell.protocol!r})")
    layers = None
    if frozen:
        rng = np.random.default_rng(ex.frozen_seed(spec.master_seed, cell.structural().cell_id))
        layers = ex.build_layers(cell, agents, rng)
    result = ex.simulate(cell, seed, agents, max_cycles, record_series=True,
                         initial_opinions=init, layers=layers)
    recorded = (record["converged"], record["cycles"], record["encounters"])
    got = (ex._num(result.converged), str(result.cycles_used), str(result.encounters))
    if recorded != got:
        raise CliError(f"replay diverged from record: recorded {recorded}, replayed {got}")
    return result


def cmd_replay(args) -> int:
    spec = _load(args.config, None)
    record = _pick_record(args.record, args.row, args.cell)
    result = replay(record, spec, args.cell)
    series = ex.series_csv(result)
    if args.expect_series:
        if Path(args.expect_series).read_text() != series:
            raise CliError("replayed series differs from the recorded series")
    if args.series:
        Path(args.series).write_text(series)
    _emit(ex.run_records_csv([result]), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiplex-consensus", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True, nargs=None):
        if nargs:
            p.add_argument("--config", action="append", required=False)
        else:
            p.add_argument("--config", required=config_required)
        p.add_argument("--out", default="-")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("gen-net", help="write layer instances as edge lists")
    common(p)
    p.add_argument("--run", type=int, default=0, help="run index whose instances to write")
    p.add_argument("--merge", action="store_true", help="write the merged graph instead")
    p.set_defaults(func=cmd_gen_net)

    p = sub.add_parser("net-props", help="properties of merged layers")
    common(p, config_required=False)
    p.add_argument("graphs", nargs="*", help="edge-list files to analyse directly")
    p.add_argument("--full-scale", action="store_true")
    p.set_defaults(func=cmd_net_props)

    p = sub.add_parser("run", help="play a run configuration")
    common(p)
    p.add_argument("--series", default=None, help="write per-cycle series to this path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a sweep grid")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full-scale", action="store_true", help=f"{FULL_SCALE_RUNS} runs per cell")
    p.add_argument("--records", default=None, help="also write every run record here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("correlate", help="structure/convergence correlation")
    common(p, nargs=True)
    p.add_argument("--sweep-csv", default=None)
    p.add_argument("--props-csv", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--method", choices=("spearman", "pearson"), default="spearman",
                   help="rank (default) or product-moment correlation")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("replay", help="re-execute a recorded run with series")
    common(p)
    p.add_argument("--record", required=True, help="run-record CSV")
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--cell", default=None, help="cell id when replaying from a sweep")
    p.add_argument("--series", default=None)
    p.add_argument("--expect-series", default=None, help="fail unless the series matches this file")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (CliError, ParameterError, UndefinedMetricError, ex.InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
