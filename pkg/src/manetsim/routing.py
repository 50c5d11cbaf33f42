"""Pieces shared by the three routing agents."""

from __future__ import annotations

from collections import deque

from .engine import RandomStream
from .link import Network, Packet


class RoutingAgent:
    """Base class: one instance per node, driven by the network and traffic."""

    name = "base"

    def __init__(self, node: int, net: Network, rng: RandomStream):
        self.node = node
        self.net = net
        self.sim = net.sim
        self.rng = rng

    def start(self) -> None:
        pass

    def send_data(self, pkt: Packet) -> None:
        raise NotImplementedError

    def receive(self, pkt: Packet, sender: int) -> None:
        raise NotImplementedError

    def deliver(self, pkt: Packet) -> None:
        self.net.tracer.log(self.sim.now, "r", self.node, "AGT", pkt.ptype, pkt.uid, pkt.size)

    def drop(self, pkt: Packet) -> None:
        self.net.tracer.log(self.sim.now, "d", self.node, "RTR", pkt.ptype, pkt.uid, pkt.size)


class SendBuffer:
    """FIFO of data packets waiting for a route. Overflow drops the oldest."""

    def __init__(self, capacity: int = 64, timeout: float = 30.0):
        self.capacity = capacity
        self.timeout = timeout
        self._q: deque[tuple[Packet, float]] = deque()

    def __len__(self):
        return len(self._q)

    def push(self, pkt: Packet, now: float) -> Packet | None:
        self._q.append((pkt, now))
        if len(self._q) > self.capacity:
            return self._q.popleft()[0]
        return None

    def expire(self, now: float) -> list[Packet]:
        out = []
        while self._q and now - self._q[0][1] > self.timeout:
            out.append(self._q.popleft()[0])
        return out

    def has(self, dest: int) -> bool:
        return any(p.dst == dest for p, _ in self._q)

    def take(self, dest: int) -> list[Packet]:
        keep, out = deque(), []
        for item in self._q:
            (out if item[0].dst == dest else keep).append(item)
        self._q = keep
        return [p for p, _ in out]
