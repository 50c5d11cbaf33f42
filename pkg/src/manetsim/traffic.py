"""cbrgen-style connection patterns and constant-bit-rate sources."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .engine import EventKind, RandomStream, Simulator
from .link import Network, Packet, PacketType

PACKET_SIZE = 512
RATE_PPS = 1.0
START_WINDOW = 10.0


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class CbrConnection:
    src: int
    dst: int
    start: float
    rate: float = RATE_PPS
    size: int = PACKET_SIZE

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"connection from {self.src} to itself")
        if self.start < 0:
            raise ValueError(f"negative start time {self.start}")
        if not self.rate > 0:
            raise ValueError(f"rate must be > 0, got {self.rate}")

    def format(self) -> str:
        return f"cbr {self.src} {self.dst} {self.start:.6f} {self.rate:.6f} {self.size}"


def connection_count(n_nodes: int, conn_fraction: float) -> int:
    # round half up; Python's round() would send 2.5 to 2
    return int(math.floor(conn_fraction * n_nodes + 0.5))


def generate_connections(
    n_nodes: int,
    conn_fraction: float,
    rng: RandomStream,
    rate: float = RATE_PPS,
    size: int = PACKET_SIZE,
    start_window: float = START_WINDOW,
) -> list[CbrConnection]:
    """Draw ``round(conn_fraction * n_nodes)`` distinct ordered pairs.

    Each pair costs two draws (src, dst), redrawn on ``src == dst`` or a
    repeated pair, followed by one draw for the start time.
    """
    if not 0 < conn_fraction <= 1:
        raise ValueError(f"conn_fraction must be in (0, 1], got {conn_fraction}")
    count = connection_count(n_nodes, conn_fraction)
    if count > n_nodes * (n_nodes - 1):
        raise InfeasibleError(f"{count} distinct pairs needed but only "
                              f"{n_nodes * (n_nodes - 1)} exist for {n_nodes} nodes")
    pairs = set()
    conns = []
    while len(conns) < count:
        src = rng.randrange(n_nodes)
        dst = rng.randrange(n_nodes)
        if src == dst or (src, dst) in pairs:
            continue
        pairs.add((src, dst))
        conns.append(CbrConnection(src, dst, rng.uniform(0.0, start_window), rate, size))
    return conns


def connections_text(conns: list[CbrConnection]) -> str:
    return "".join(c.format() + "\n" for c in conns)


def write_connections(path, conns: list[CbrConnection]) -> None:
    Path(path).write_text(connections_text(conns))


def parse_connections(text: str) -> list[CbrConnection]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] != "cbr" or len(parts) != 6:
            raise ValueError(f"connection line {lineno}: cannot parse {raw!r}")
        out.append(CbrConnection(int(parts[1]), int(parts[2]), float(parts[3]),
                                 float(parts[4]), int(parts[5])))
    return out


def read_connections(path) -> list[CbrConnection]:
    return parse_connections(Path(path).read_text())


class CbrSource:
    """Originates one packet every ``1/rate`` seconds in ``[start, duration)``."""

    def __init__(self, conn: CbrConnection, sim: Simulator, net: Network, duration: float):
        self.conn = conn
        self.sim = sim
        self.net = net
        self.duration = duration
        self.originated = 0
        self._k = 0

    def start(self) -> None:
        if self.conn.start < self.duration:
            self.sim.schedule(self.conn.start, self.cbr_tick, kind=EventKind.TRAFFIC_TICK,
                              target=self.conn.src)

    def cbr_tick(self) -> Packet | None:
        t = self.sim.now
        if t >= self.duration:
            return None
        c = self.conn
        pkt = Packet(self.net.new_uid(), PacketType.CBR_DATA, c.src, c.dst, c.size)
        self.net.tracer.log(t, "s", c.src, "AGT", pkt.ptype, pkt.uid, pkt.size)
        self.originated += 1
        self._k += 1
        # start + k/rate avoids drift from repeated float addition
        nxt = c.start + self._k / c.rate
        if nxt < self.duration:
            self.sim.schedule(nxt, self.cbr_tick, kind=EventKind.TRAFFIC_TICK, target=c.src)
        self.net.agents[c.src].send_data(pkt)
        return pkt
