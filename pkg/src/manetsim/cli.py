"""Command line entry point: ``manetsim run | matrix | scenario | connections``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .engine import TAG_MOBILITY, TAG_TRAFFIC, RandomStream
from .harness import (ConfigError, MatrixSpec, Protocol, RunConfig, config_from_mapping,
                      format_summary_table, parse_config_text, result_row, run_matrix, simulate,
                      build_inputs, write_plot_data)
from .metrics import RESULTS_HEADER, write_results
from .mobility import MobilityConfigError, MobilityModel, Scenario, generate_scenario
from .traffic import generate_connections, read_connections, write_connections

# flag name -> config key
RUN_FLAGS = {
    "protocol": "protocol", "mobility": "mobility", "nodes": "nodes",
    "speed_max": "speed_max", "speed_min": "speed_min", "pause": "pause",
    "conn_frac": "conn_frac", "seed": "seed", "duration": "duration", "area": "area",
    "range": "range", "hop_latency": "hop_latency", "leg_duration": "leg_duration",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file; flags override it")
    p.add_argument("--protocol", help="DSDV, DSR or AODV")
    p.add_argument("--mobility", help="RandomWalk (RW) or RandomWaypoint (RWP)")
    p.add_argument("--nodes")
    p.add_argument("--speed-max", dest="speed_max")
    p.add_argument("--speed-min", dest="speed_min")
    p.add_argument("--pause")
    p.add_argument("--conn-frac", dest="conn_frac")
    p.add_argument("--seed")
    p.add_argument("--duration")
    p.add_argument("--area", help="WIDTHxHEIGHT in metres, e.g. 670x670")
    p.add_argument("--range", help="radio range in metres")
    p.add_argument("--hop-latency", dest="hop_latency")
    p.add_argument("--leg-duration", dest="leg_duration", help="Random Walk leg time (s)")


def _settings(args) -> dict[str, str]:
    values: dict[str, str] = {}
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for attr, key in RUN_FLAGS.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    return values


def cmd_run(args) -> int:
    cfg = config_from_mapping(_settings(args))
    if args.scenario or args.connections:
        scenario, conns = build_inputs(cfg)
        if args.scenario:
            scenario = Scenario.read(args.scenario, cfg.area, cfg.duration)
            if scenario.n_nodes != cfg.n_nodes:
                raise ConfigError("nodes", f"scenario has {scenario.n_nodes} nodes, config {cfg.n_nodes}")
        if args.connections:
            conns = read_connections(args.connections)
        result = simulate(cfg.protocol, scenario, conns, cfg.duration, cfg.link, cfg.seed)
    else:
        from .harness import run_single
        result = run_single(cfg)
    if args.trace:
        result.tracer.write(args.trace)
    row = result_row(cfg, result.metrics)
    if args.out:
        write_results(args.out, [row])
    print(RESULTS_HEADER)
    print(row.format())
    m = result.metrics
    nro = "NA" if m.nro is None else f"{m.nro:.4f}"
    pdr = "NA" if m.pdr is None else f"{m.pdr:.4f}"
    print(f"# PDR {pdr}  NRO {nro}  throughput {m.throughput:.4f} pkt/s  "
          f"({result.wall_time:.2f} s wall)", file=sys.stderr)
    return 0


def _csv(text: str, fn):
    return tuple(fn(x) for x in text.split(",") if x.strip())


def _mobility_axis(text: str):
    out = []
    for item in text.split(","):
        name, _, pause = item.partition(":")
        model = MobilityModel.parse(name)
        out.append((model, float(pause or 0)))
    return tuple(out)


def cmd_matrix(args) -> int:
    base = config_from_mapping(_settings(args))
    spec = MatrixSpec(
        protocols=_csv(args.protocols, Protocol.parse),
        mobilities=_mobility_axis(args.mobility_axis),
        nodes=_csv(args.nodes_axis, int),
        speeds=_csv(args.speed_axis, float),
        fractions=_csv(args.frac_axis, float),
        replicates=args.seeds,
        seed_base=args.seed_base,
        duration=base.duration,
        speed_min=base.mobility.speed_min,
        leg_duration=base.mobility.leg_duration,
        area=base.area,
        link=base.link,
    )
    n_runs = len(spec.scenario_cells()) * spec.replicates * len(spec.protocols)
    print(f"# {n_runs} runs, jobs={args.jobs}", file=sys.stderr)
    t0 = time.perf_counter()
    res = run_matrix(spec, jobs=args.jobs, out=args.out, summary_out=args.summary,
                     trace_dir=args.trace)
    print(format_summary_table(res.summary))
    if args.plot_data:
        files = write_plot_data(res.summary, args.plot_data)
        print(f"# wrote {len(files)} plot-data files to {args.plot_data}", file=sys.stderr)
    print(f"# {len(res.rows)} runs done in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    for o in res.failures:
        print(f"FAILED {o.config.protocol.value} {o.config.mobility.model.value} "
              f"n={o.config.n_nodes} speed={o.config.mobility.speed_max:g} "
              f"frac={o.config.conn_fraction:g} seed={o.config.seed}: {o.error}", file=sys.stderr)
    return 1 if res.failures else 0


def cmd_scenario(args) -> int:
    cfg = config_from_mapping(_settings(args))
    scenario = generate_scenario(cfg.mobility, cfg.area, cfg.n_nodes, cfg.duration,
                                 RandomStream(cfg.seed).derive(TAG_MOBILITY))
    text = scenario.to_text()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_connections(args) -> int:
    cfg = config_from_mapping(_settings(args))
    conns = generate_connections(cfg.n_nodes, cfg.conn_fraction,
                                 RandomStream(cfg.seed).derive(TAG_TRAFFIC))
    if args.out:
        write_connections(args.out, conns)
    else:
        for c in conns:
            print(c.format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manetsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one simulation run")
    _add_run_flags(p)
    p.add_argument("--scenario", help="read mobility from a scenario file instead of generating it")
    p.add_argument("--connections", help="read traffic from a connection file")
    p.add_argument("--out", help="write the result row as CSV")
    p.add_argument("--trace", help="write the packet trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("matrix", help="batch runs over the experiment matrix")
    _add_run_flags(p)
    p.add_argument("--protocols", default="DSDV,DSR,AODV")
    p.add_argument("--mobility-axis", default="RW:0,RWP:25",
                   help="comma list of MODEL:PAUSE, e.g. RW:0,RWP:25")
    p.add_argument("--nodes-axis", default="10,50")
    p.add_argument("--speed-axis", default="10,50")
    p.add_argument("--frac-axis", default="0.2,0.6")
    p.add_argument("--seeds", type=int, default=20, help="replicates per cell")
    p.add_argument("--seed-base", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="results.csv")
    p.add_argument("--summary", help="write per-cell mean/stddev CSV")
    p.add_argument("--plot-data", dest="plot_data", help="directory for per-metric .dat files")
    p.add_argument("--trace", help="directory for per-run traces")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("scenario", help="write a setdest-style scenario file")
    _add_run_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("connections", help="write a cbrgen-style connection file")
    _add_run_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_connections)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MobilityConfigError, ValueError, OSError) as exc:
        print(f"manetsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
