"""Unit-disk link layer shared by all routing agents.

The MAC is ideal: no collisions, queues or bandwidth limit. A frame sent at
``t`` reaches every node within range at ``t`` after exactly ``hop_latency``;
movement while the frame is in flight is ignored.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Any

import numpy as np

from .engine import EventKind, Simulator
from .mobility import PositionTracker, Scenario

BROADCAST = -1


class PacketType(enum.Enum):
    CBR_DATA = "CBR-DATA"
    DSDV_UPDATE = "DSDV-UPDATE"
    DSR_RREQ = "DSR-RREQ"
    DSR_RREP = "DSR-RREP"
    DSR_RERR = "DSR-RERR"
    AODV_RREQ = "AODV-RREQ"
    AODV_RREP = "AODV-RREP"
    AODV_RERR = "AODV-RERR"
    AODV_HELLO = "AODV-HELLO"

    @property
    def is_control(self) -> bool:
        return self is not PacketType.CBR_DATA


CONTROL_TYPES = frozenset(p for p in PacketType if p.is_control)

_FIXED_SIZES = {
    PacketType.AODV_RREQ: 24,
    PacketType.AODV_RREP: 20,
    PacketType.AODV_RERR: 12,
    PacketType.AODV_HELLO: 12,
}


def control_size(ptype: PacketType, n: int = 0) -> int:
    """Byte size of a control packet.

    ``n`` is the number of advertised routes for DSDV updates and the
    route-record length for DSR packets; AODV sizes are fixed.
    """
    if ptype is PacketType.DSDV_UPDATE:
        return 12 + 12 * n
    if ptype in (PacketType.DSR_RREQ, PacketType.DSR_RREP, PacketType.DSR_RERR):
        return 16 + 4 * n
    return _FIXED_SIZES[ptype]


class Packet:
    """A frame. Broadcast copies share one object, so receivers must not mutate it."""

    __slots__ = ("uid", "ptype", "src", "dst", "size", "ttl", "payload")

    def __init__(self, uid: int, ptype: PacketType, src: int, dst: int, size: int,
                 ttl: int = 64, payload: Any = None):
        if size <= 0:
            raise ValueError(f"packet size must be positive, got {size}")
        self.uid = uid
        self.ptype = ptype
        self.src = src
        self.dst = dst
        self.size = size
        self.ttl = ttl
        self.payload = payload

    def __repr__(self):
        return f"Packet({self.uid}, {self.ptype.value}, {self.src}->{self.dst}, ttl={self.ttl})"


@dataclass(frozen=True)
class LinkModel:
    range: float = 250.0
    hop_latency: float = 0.002
    bandwidth_unlimited: bool = True

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError(f"range must be > 0, got {self.range}")
        if not self.hop_latency > 0:
            raise ValueError(f"hop_latency must be > 0, got {self.hop_latency}")


class Network:
    """Connects routing agents through the unit-disk channel and the tracer."""

    def __init__(self, sim: Simulator, scenario: Scenario, link: LinkModel, tracer):
        self.sim = sim
        self.scenario = scenario
        self.link = link
        self.tracer = tracer
        self.tracker = PositionTracker(scenario)
        self.agents: list = []
        self._uids = itertools.count(1)
        self._r2 = link.range * link.range

    @property
    def n_nodes(self) -> int:
        return self.scenario.n_nodes

    def new_uid(self) -> int:
        return next(self._uids)

    def neighbors(self, node: int, t: float | None = None) -> list[int]:
        xs, ys = self.tracker.positions(self.sim.now if t is None else t)
        d2 = (xs - xs[node]) ** 2 + (ys - ys[node]) ** 2
        d2[node] = np.inf
        return np.flatnonzero(d2 <= self._r2).tolist()

    def connected(self, a: int, b: int, t: float | None = None) -> bool:
        if a == b:
            return False
        xs, ys = self.tracker.positions(self.sim.now if t is None else t)
        dx = xs[a] - xs[b]
        dy = ys[a] - ys[b]
        return dx * dx + dy * dy <= self._r2

    def broadcast(self, node: int, pkt: Packet, op: str = "s") -> int:
        """Send to every current neighbour; returns the number of deliveries."""
        sim = self.sim
        self.tracer.log(sim.now, op, node, "RTR", pkt.ptype, pkt.uid, pkt.size)
        at = sim.now + self.link.hop_latency
        nbrs = self.neighbors(node)
        if nbrs:
            # one event for the whole fan-out; per-receiver events would carry
            # consecutive ids at the same instant, so the order is identical
            sim.schedule(at, self._deliver_all, nbrs, pkt, node, kind=EventKind.PACKET_DELIVERY)
        return len(nbrs)

    def unicast(self, node: int, next_hop: int, pkt: Packet, op: str = "s") -> bool:
        """Send to one neighbour. ``False`` is the send-failure signal."""
        sim = self.sim
        self.tracer.log(sim.now, op, node, "RTR", pkt.ptype, pkt.uid, pkt.size)
        if not self.connected(node, next_hop):
            return False
        sim.schedule(sim.now + self.link.hop_latency, self._deliver, next_hop, pkt, node,
                     kind=EventKind.PACKET_DELIVERY, target=next_hop)
        return True

    def _deliver(self, receiver: int, pkt: Packet, sender: int) -> None:
        self.agents[receiver].receive(pkt, sender)

    def _deliver_all(self, receivers: list[int], pkt: Packet, sender: int) -> None:
        agents = self.agents
        for r in receivers:
            agents[r].receive(pkt, sender)
