"""Run configuration, single-run wiring and the experiment matrix."""

from __future__ import annotations

import enum
import itertools
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .aodv import AodvAgent
from .dsdv import DsdvAgent
from .dsr import DsrAgent
from .engine import TAG_MOBILITY, TAG_PROTOCOL, TAG_TRAFFIC, RandomStream, Simulator
from .link import LinkModel, Network
from .metrics import ResultRow, RunMetrics, Summary, Tracer, aggregate, summary_csv, write_results
from .mobility import (AreaBounds, MobilityConfigError, MobilityModel, MobilityParams, Scenario,
                       generate_scenario)
from .traffic import CbrConnection, CbrSource, generate_connections

log = logging.getLogger(__name__)

SEED_STRIDE = 1009


class ConfigError(ValueError):
    """A configuration value failed validation; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class Protocol(enum.Enum):
    DSDV = "DSDV"
    DSR = "DSR"
    AODV = "AODV"

    @classmethod
    def parse(cls, text: str) -> "Protocol":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ConfigError("protocol", f"unknown protocol {text!r} (DSDV, DSR or AODV)") from None


AGENTS = {Protocol.DSDV: DsdvAgent, Protocol.DSR: DsrAgent, Protocol.AODV: AodvAgent}


@dataclass(frozen=True)
class RunConfig:
    protocol: Protocol = Protocol.AODV
    mobility: MobilityParams = field(default_factory=MobilityParams)
    n_nodes: int = 50
    area: AreaBounds = field(default_factory=AreaBounds)
    duration: float = 200.0
    conn_fraction: float = 0.2
    seed: int = 1
    link: LinkModel = field(default_factory=LinkModel)

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration", f"must be > 0, got {self.duration}")
        if self.n_nodes < 2:
            raise ConfigError("nodes", f"need at least 2 nodes, got {self.n_nodes}")
        if not 0 < self.conn_fraction <= 1:
            raise ConfigError("conn_frac", f"must be in (0, 1], got {self.conn_fraction}")


# flat key = value names, shared by config files and CLI flags
CONFIG_KEYS = ("protocol", "mobility", "nodes", "speed_max", "speed_min", "pause", "conn_frac",
               "seed", "duration", "area", "range", "hop_latency", "leg_duration")


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(key, "unknown configuration key")
        out[key] = value
    return out


def _convert(key: str, value: str, fn):
    try:
        return fn(value)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(key, f"bad value {value!r}: {exc}") from None


def _parse_area(value: str) -> AreaBounds:
    w, _, h = value.lower().partition("x")
    return AreaBounds(float(w), float(h or w))


def config_from_mapping(values: dict[str, str]) -> RunConfig:
    """Build a validated :class:`RunConfig` from flat string settings."""
    v = dict(values)
    protocol = Protocol.parse(v.get("protocol", "AODV"))
    model = _convert("mobility", v.get("mobility", "RandomWaypoint"), MobilityModel.parse)
    default_pause = "0" if model is MobilityModel.RANDOM_WALK else "25"
    try:
        mob = MobilityParams(
            model=model,
            speed_min=_convert("speed_min", v.get("speed_min", "0"), float),
            speed_max=_convert("speed_max", v.get("speed_max", "10"), float),
            pause_time=_convert("pause", v.get("pause", default_pause), float),
            leg_duration=_convert("leg_duration", v.get("leg_duration", "10"), float),
        )
        area = _convert("area", v.get("area", "670x670"), _parse_area)
    except MobilityConfigError as exc:
        raise ConfigError("mobility", str(exc)) from None
    try:
        link = LinkModel(range=_convert("range", v.get("range", "250"), float),
                         hop_latency=_convert("hop_latency", v.get("hop_latency", "0.002"), float))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("link", str(exc)) from None
    return RunConfig(
        protocol=protocol,
        mobility=mob,
        n_nodes=_convert("nodes", v.get("nodes", "50"), int),
        area=area,
        duration=_convert("duration", v.get("duration", "200"), float),
        conn_fraction=_convert("conn_frac", v.get("conn_frac", "0.2"), float),
        seed=_convert("seed", v.get("seed", "1"), int),
        link=link,
    )


@dataclass
class RunResult:
    metrics: RunMetrics
    tracer: Tracer
    agents: list
    net: Network
    sources: list
    scenario: Scenario
    connections: list[CbrConnection]
    wall_time: float = 0.0


def simulate(
    protocol: Protocol,
    scenario: Scenario,
    connections: list[CbrConnection],
    duration: float,
    link: LinkModel | None = None,
    seed: int = 1,
    observer: Callable[[float, list], None] | None = None,
    observe_every: float = 1.0,
) -> RunResult:
    """Run one protocol over a fixed scenario and traffic pattern.

    ``observer(now, agents)`` is called every ``observe_every`` simulated
    seconds, after all other events at that instant.
    """
    t0 = time.perf_counter()
    sim = Simulator()
    tracer = Tracer()
    net = Network(sim, scenario, link or LinkModel(), tracer)
    rng = RandomStream(seed).derive(TAG_PROTOCOL)
    cls = AGENTS[protocol]
    net.agents = [cls(i, net, rng) for i in range(scenario.n_nodes)]
    for agent in net.agents:
        agent.start()
    sources = [CbrSource(c, sim, net, duration) for c in connections]
    for src in sources:
        src.start()
    if observer is not None:
        def tick(k):
            observer(sim.now, net.agents)
            nxt = (k + 1) * observe_every
            if nxt <= duration:
                sim.schedule(nxt, tick, k + 1)
        sim.schedule(observe_every, tick, 1)
    sim.run_until(duration)
    metrics = RunMetrics.from_trace(tracer.records, duration)
    return RunResult(metrics, tracer, net.agents, net, sources, scenario, connections,
                     time.perf_counter() - t0)


def build_inputs(cfg: RunConfig) -> tuple[Scenario, list[CbrConnection]]:
    root = RandomStream(cfg.seed)
    scenario = generate_scenario(cfg.mobility, cfg.area, cfg.n_nodes, cfg.duration,
                                 root.derive(TAG_MOBILITY))
    conns = generate_connections(cfg.n_nodes, cfg.conn_fraction, root.derive(TAG_TRAFFIC))
    return scenario, conns


def run_single(cfg: RunConfig, trace_path=None, observer=None) -> RunResult:
    scenario, conns = build_inputs(cfg)
    result = simulate(cfg.protocol, scenario, conns, cfg.duration, cfg.link, cfg.seed,
                      observer=observer)
    if trace_path is not None:
        result.tracer.write(trace_path)
    return result


def result_row(cfg: RunConfig, m: RunMetrics) -> ResultRow:
    return ResultRow(cfg.protocol.value, cfg.mobility.model.value, cfg.n_nodes,
                     float(cfg.mobility.speed_max), float(cfg.mobility.pause_time),
                     float(cfg.conn_fraction), cfg.seed, m.sent, m.received, m.routing_tx,
                     m.pdr, m.nro, m.throughput)


# -- matrix -------------------------------------------------------------------

DEFAULT_MOBILITY_AXIS = ((MobilityModel.RANDOM_WALK, 0.0), (MobilityModel.RANDOM_WAYPOINT, 25.0))


@dataclass(frozen=True)
class MatrixSpec:
    protocols: tuple[Protocol, ...] = tuple(Protocol)
    mobilities: tuple[tuple[MobilityModel, float], ...] = DEFAULT_MOBILITY_AXIS
    nodes: tuple[int, ...] = (10, 50)
    speeds: tuple[float, ...] = (10.0, 50.0)
    fractions: tuple[float, ...] = (0.2, 0.6)
    replicates: int = 20
    seed_base: int = 1
    duration: float = 200.0
    speed_min: float = 0.0
    leg_duration: float = 10.0
    area: AreaBounds = field(default_factory=AreaBounds)
    link: LinkModel = field(default_factory=LinkModel)

    def __post_init__(self):
        for name in ("protocols", "mobilities", "nodes", "speeds", "fractions"):
            if not getattr(self, name):
                raise ConfigError(name, "matrix axis is empty")
        if self.replicates < 1:
            raise ConfigError("seeds", "need at least one seed per cell")

    def scenario_cells(self):
        """Mobility x nodes x speed x fraction, in a fixed order."""
        return list(itertools.product(self.mobilities, self.nodes, self.speeds, self.fractions))

    def configs(self) -> list[RunConfig]:
        """Every run; all protocols in a cell share the cell's seeds.

        seed = seed_base + cell_index * 1009 + replicate
        """
        out = []
        for idx, ((model, pause), n, speed, frac) in enumerate(self.scenario_cells()):
            mob = MobilityParams(model, self.speed_min, speed, pause, self.leg_duration)
            for rep in range(self.replicates):
                seed = self.seed_base + idx * SEED_STRIDE + rep
                for proto in self.protocols:
                    out.append(RunConfig(proto, mob, n, self.area, self.duration, frac, seed,
                                         self.link))
        return out


@dataclass
class RunOutcome:
    config: RunConfig
    row: ResultRow | None
    digest: str | None = None
    error: str | None = None
    wall_time: float = 0.0


def _execute(cfg: RunConfig, trace_dir: str | None, want_digest: bool) -> RunOutcome:
    try:
        trace_path = None
        if trace_dir is not None:
            trace_path = Path(trace_dir) / trace_name(cfg)
        res = run_single(cfg, trace_path)
        digest = res.tracer.digest() if want_digest else None
        return RunOutcome(cfg, result_row(cfg, res.metrics), digest, None, res.wall_time)
    except Exception as exc:  # report the cell, keep the batch going
        log.exception("run failed: %s", cfg)
        return RunOutcome(cfg, None, None, f"{type(exc).__name__}: {exc}")


def trace_name(cfg: RunConfig) -> str:
    m = cfg.mobility
    return (f"{cfg.protocol.value}_{m.model.value}_p{m.pause_time:g}_n{cfg.n_nodes}"
            f"_s{m.speed_max:g}_c{cfg.conn_fraction:g}_seed{cfg.seed}.tr")


def run_configs(configs: list[RunConfig], jobs: int = 1, trace_dir=None,
                want_digest: bool = False) -> list[RunOutcome]:
    """Execute independent runs; results come back in input order."""
    if trace_dir is not None:
        os.makedirs(trace_dir, exist_ok=True)
        trace_dir = str(trace_dir)
    if jobs <= 1:
        return [_execute(c, trace_dir, want_digest) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_execute, c, trace_dir, want_digest) for c in configs]
        return [f.result() for f in futures]


def group_key(row: ResultRow) -> tuple:
    return (row.protocol, row.mobility, row.nodes, row.speed_max, row.pause, row.conn_frac)


def summarise(rows: list[ResultRow], duration: float) -> dict[tuple, dict[str, Summary | None]]:
    groups: dict[tuple, list[RunMetrics]] = {}
    for row in rows:
        groups.setdefault(group_key(row), []).append(row.metrics(duration))
    return {k: aggregate(v) for k, v in groups.items()}


@dataclass
class MatrixResult:
    outcomes: list[RunOutcome]
    summary: dict[tuple, dict[str, Summary | None]]

    @property
    def rows(self) -> list[ResultRow]:
        return [o.row for o in self.outcomes if o.row is not None]

    @property
    def failures(self) -> list[RunOutcome]:
        return [o for o in self.outcomes if o.error is not None]


def run_matrix(spec: MatrixSpec, jobs: int = 1, out=None, summary_out=None, trace_dir=None,
               want_digest: bool = False) -> MatrixResult:
    outcomes = run_configs(spec.configs(), jobs, trace_dir, want_digest)
    rows = [o.row for o in outcomes if o.row is not None]
    summary = summarise(rows, spec.duration) if rows else {}
    if out is not None:
        write_results(out, rows)
    if summary_out is not None:
        Path(summary_out).write_text(summary_csv(summary))
    return MatrixResult(outcomes, summary)


def format_summary_table(summary: dict[tuple, dict[str, Summary | None]]) -> str:
    def pm(s):
        if s is None:
            return "NA"
        sd = "NA" if s.stddev is None else f"{s.stddev:.3f}"
        return f"{s.mean:.3f}±{sd}"

    head = f"{'protocol':8} {'mobility':15} {'pause':>5} {'nodes':>5} {'speed':>5} {'frac':>4}  " \
           f"{'PDR':>14} {'NRO':>14} {'throughput':>14}"
    lines = [head, "-" * len(head)]
    for (proto, mob, n, speed, pause, frac), agg in sorted(summary.items()):
        lines.append(f"{proto:8} {mob:15} {pause:5g} {n:5d} {speed:5g} {frac:4g}  "
                     f"{pm(agg['pdr']):>14} {pm(agg['nro']):>14} {pm(agg['throughput']):>14}")
    return "\n".join(lines)


PLOT_METRICS = ("pdr", "nro", "throughput")


def write_plot_data(summary, out_dir) -> list[Path]:
    """One whitespace-separated file per metric, mobility panel and fixed axis value.

    Column 1 is node count (``*_vs_nodes_*``) or max speed (``*_vs_speed_*``);
    the remaining columns hold the per-protocol means.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    protos = sorted({k[0] for k in summary}, key=lambda p: [x.value for x in Protocol].index(p))
    panels = sorted({(k[1], k[4], k[5]) for k in summary})
    nodes = sorted({k[2] for k in summary})
    speeds = sorted({k[3] for k in summary})
    written = []

    def value(proto, mob, n, speed, pause, frac, metric):
        agg = summary.get((proto, mob, n, speed, pause, frac))
        s = agg[metric] if agg else None
        return "NA" if s is None else repr(s.mean)

    for metric in PLOT_METRICS:
        for mob, pause, frac in panels:
            stem = f"{metric}_{mob}_p{pause:g}_c{frac:g}"
            for speed in speeds:
                path = out_dir / f"{stem}_vs_nodes_speed{speed:g}.dat"
                lines = ["# nodes " + " ".join(protos)]
                for n in nodes:
                    vals = [value(p, mob, n, speed, pause, frac, metric) for p in protos]
                    lines.append(f"{n} " + " ".join(vals))
                path.write_text("\n".join(lines) + "\n")
                written.append(path)
            for n in nodes:
                path = out_dir / f"{stem}_vs_speed_nodes{n}.dat"
                lines = ["# speed_max " + " ".join(protos)]
                for speed in speeds:
                    vals = [value(p, mob, n, speed, pause, frac, metric) for p in protos]
                    lines.append(f"{speed:g} " + " ".join(vals))
                path.write_text("\n".join(lines) + "\n")
                written.append(path)
    return written


def with_protocol(cfg: RunConfig, protocol: Protocol) -> RunConfig:
    return replace(cfg, protocol=protocol)
