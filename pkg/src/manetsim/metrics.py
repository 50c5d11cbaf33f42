"""Run tracing and the delivery ratio / routing overhead / throughput metrics."""

from __future__ import annotations

import csv
import hashlib
import io
import statistics
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple

from .link import CONTROL_TYPES, PacketType


class NoTrafficError(ValueError):
    pass


class NoDeliveriesError(ValueError):
    pass


class EmptyAggregateError(ValueError):
    pass


class TraceRecord(NamedTuple):
    t: float
    op: str  # s, r, f, d
    node: int
    layer: str  # AGT or RTR
    ptype: PacketType
    uid: int
    size: int

    def format(self) -> str:
        return f"{self.t:.6f} {self.op} {self.node} {self.layer} {self.ptype.value} {self.uid} {self.size}"

    @classmethod
    def parse(cls, line: str) -> "TraceRecord":
        t, op, node, layer, ptype, uid, size = line.split()
        return cls(float(t), op, int(node), layer, PacketType(ptype), int(uid), int(size))


class Tracer:
    def __init__(self):
        self.records: list[TraceRecord] = []

    def log(self, t, op, node, layer, ptype, uid, size) -> None:
        self.records.append(TraceRecord(t, op, node, layer, ptype, uid, size))

    def text(self) -> str:
        return "".join(r.format() + "\n" for r in self.records)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(r.format())
                fh.write("\n")

    def digest(self) -> str:
        h = hashlib.sha256()
        for r in self.records:
            h.update(r.format().encode())
            h.update(b"\n")
        return h.hexdigest()


def read_trace(path) -> list[TraceRecord]:
    with open(path) as fh:
        return [TraceRecord.parse(line) for line in fh if line.strip()]


def _count(trace: Iterable[TraceRecord]):
    sent = received = routing = 0
    data = PacketType.CBR_DATA
    for r in trace:
        if r.layer == "AGT":
            if r.ptype is data:
                if r.op == "s":
                    sent += 1
                elif r.op == "r":
                    received += 1
        elif r.op in ("s", "f") and r.ptype in CONTROL_TYPES:
            routing += 1
    return sent, received, routing


def compute_pdr(trace) -> float:
    sent, received, _ = _count(trace)
    if sent == 0:
        raise NoTrafficError("no CBR packets were originated")
    return received / sent


def compute_nro(trace) -> float:
    """Control transmissions (every hop counts) per delivered data packet."""
    _, received, routing = _count(trace)
    if received == 0:
        raise NoDeliveriesError(f"{routing} control transmissions but no data delivered")
    return routing / received


def compute_throughput(trace, duration: float) -> float:
    if not duration > 0:
        raise ValueError("duration must be > 0")
    _, received, _ = _count(trace)
    return received / duration


@dataclass(frozen=True)
class RunMetrics:
    sent: int
    received: int
    routing_tx: int
    duration: float

    @classmethod
    def from_trace(cls, trace, duration: float) -> "RunMetrics":
        sent, received, routing = _count(trace)
        return cls(sent, received, routing, duration)

    @property
    def pdr(self) -> float | None:
        return self.received / self.sent if self.sent else None

    @property
    def pdr_exact(self) -> Fraction | None:
        return Fraction(self.received, self.sent) if self.sent else None

    @property
    def nro(self) -> float | None:
        return self.routing_tx / self.received if self.received else None

    @property
    def throughput(self) -> float:
        return self.received / self.duration


class Summary(NamedTuple):
    n: int
    mean: float
    stddev: float | None  # None when n == 1
    min: float
    max: float


def _summarise(values: list[float]) -> Summary | None:
    if not values:
        return None
    sd = statistics.stdev(values) if len(values) > 1 else None
    return Summary(len(values), statistics.fmean(values), sd, min(values), max(values))


def aggregate(runs: list[RunMetrics]) -> dict[str, Summary | None]:
    """Mean, sample stddev (n-1), min and max of each metric.

    Runs where a metric is undefined are left out of that metric's summary.
    """
    if not runs:
        raise EmptyAggregateError("cannot aggregate zero runs")
    return {
        "pdr": _summarise([r.pdr for r in runs if r.pdr is not None]),
        "nro": _summarise([r.nro for r in runs if r.nro is not None]),
        "throughput": _summarise([r.throughput for r in runs]),
    }


RESULTS_HEADER = (
    "protocol,mobility,nodes,speed_max,pause,conn_frac,seed,"
    "sent,received,routing_tx,pdr,nro,throughput"
)


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _num(s: str) -> float | None:
    return None if s == "NA" else float(s)


@dataclass(frozen=True)
class ResultRow:
    protocol: str
    mobility: str
    nodes: int
    speed_max: float
    pause: float
    conn_frac: float
    seed: int
    sent: int
    received: int
    routing_tx: int
    pdr: float | None
    nro: float | None
    throughput: float

    def format(self) -> str:
        return ",".join(_fmt(getattr(self, f.name)) for f in fields(self))

    @classmethod
    def parse(cls, line: str) -> "ResultRow":
        v = next(csv.reader([line]))
        if len(v) != 13:
            raise ValueError(f"expected 13 columns, got {len(v)}: {line!r}")
        return cls(v[0], v[1], int(v[2]), float(v[3]), float(v[4]), float(v[5]), int(v[6]),
                   int(v[7]), int(v[8]), int(v[9]), _num(v[10]), _num(v[11]), float(v[12]))

    def metrics(self, duration: float) -> RunMetrics:
        return RunMetrics(self.sent, self.received, self.routing_tx, duration)


def write_results(path, rows: Iterable[ResultRow]) -> None:
    with open(path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for row in rows:
            fh.write(row.format() + "\n")


def read_results(path) -> list[ResultRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != RESULTS_HEADER:
        raise ValueError(f"{path}: missing results header")
    return [ResultRow.parse(line) for line in lines[1:] if line.strip()]


SUMMARY_HEADER = (
    "protocol,mobility,nodes,speed_max,pause,conn_frac,runs,"
    "pdr_mean,pdr_std,nro_mean,nro_std,throughput_mean,throughput_std"
)


def summary_csv(groups: dict[tuple, dict[str, Summary | None]]) -> str:
    out = io.StringIO()
    out.write(SUMMARY_HEADER + "\n")
    for key, agg in groups.items():
        protocol, mobility, nodes, speed, pause, frac = key
        runs = agg["throughput"].n
        cols = [protocol, mobility, str(nodes), _fmt(speed), _fmt(pause), _fmt(frac), str(runs)]
        for name in ("pdr", "nro", "throughput"):
            s = agg[name]
            cols.append(_fmt(s.mean) if s else "NA")
            cols.append(_fmt(s.stddev) if s else "NA")
        out.write(",".join(cols) + "\n")
    return out.getvalue()
