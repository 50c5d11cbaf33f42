"""DSR: on-demand source routing with a per-node route cache.

Only the basic mechanism is modelled. Intermediate nodes never answer a
request from their cache, there is no promiscuous overhearing and no
salvaging. Nodes do cache every route carried by a reply they forward.
"""

from __future__ import annotations

from typing import NamedTuple

from .link import BROADCAST, Packet, PacketType, control_size
from .routing import RoutingAgent, SendBuffer

CACHE_PER_DEST = 4
CACHE_EXPIRY = 300.0
RREQ_TTL = 64
BACKOFF_START = 0.5
BACKOFF_CAP = 10.0
MAX_TRIES = 16


class DsrRreq(NamedTuple):
    request_id: tuple[int, int]  # (origin, counter)
    target: int
    record: tuple[int, ...]


class DsrRrep(NamedTuple):
    route: tuple[int, ...]  # origin .. target


class DsrRerr(NamedTuple):
    broken: tuple[int, int]
    path: tuple[int, ...]  # reporting node .. origin


class SourceHeader:
    """Data packet header; ``index`` is the position of the current holder."""

    __slots__ = ("route", "index")

    def __init__(self, route: tuple[int, ...], index: int = 0):
        self.route = route
        self.index = index


def is_source_route(route) -> bool:
    return len(route) >= 2 and len(set(route)) == len(route)


class RouteCache:
    """Routes starting at ``owner``, at most ``capacity`` per destination."""

    def __init__(self, owner: int, capacity: int = CACHE_PER_DEST, expiry: float = CACHE_EXPIRY):
        self.owner = owner
        self.capacity = capacity
        self.expiry = expiry
        self.routes: dict[int, list[tuple[tuple[int, ...], float]]] = {}

    def add(self, route: tuple[int, ...], now: float) -> None:
        if route[0] != self.owner or not is_source_route(route):
            raise ValueError(f"invalid source route {route} for node {self.owner}")
        lst = self.routes.setdefault(route[-1], [])
        for i, (r, _) in enumerate(lst):
            if r == route:
                del lst[i]
                break
        lst.append((route, now))
        if len(lst) > self.capacity:
            oldest = min(range(len(lst)), key=lambda i: lst[i][1])
            del lst[oldest]

    def learn_path(self, path: tuple[int, ...], now: float) -> None:
        """Cache every sub-route of ``path`` that starts at the owner."""
        if self.owner not in path:
            return
        i = path.index(self.owner)
        for j in range(i + 1, len(path)):
            self.add(path[i:j + 1], now)
        for j in range(i - 1, -1, -1):
            self.add(tuple(reversed(path[j:i + 1])), now)

    def best(self, dest: int, now: float) -> tuple[int, ...] | None:
        lst = self.routes.get(dest)
        if not lst:
            return None
        fresh = [(r, t) for r, t in lst if now - t <= self.expiry]
        if not fresh:
            return None
        # fewest hops, then most recently learned
        return min(fresh, key=lambda rt: (len(rt[0]), -rt[1]))[0]

    def remove_link(self, a: int, b: int) -> int:
        removed = 0
        for dest in list(self.routes):
            keep = []
            for r, t in self.routes[dest]:
                if any({r[k], r[k + 1]} == {a, b} for k in range(len(r) - 1)):
                    removed += 1
                else:
                    keep.append((r, t))
            if keep:
                self.routes[dest] = keep
            else:
                del self.routes[dest]
        return removed

    def all_routes(self):
        for lst in self.routes.values():
            for r, _ in lst:
                yield r


class _Discovery:
    __slots__ = ("tries", "timer")

    def __init__(self):
        self.tries = 0
        self.timer = None


class DsrAgent(RoutingAgent):
    name = "DSR"

    def __init__(self, node, net, rng):
        super().__init__(node, net, rng)
        self.cache = RouteCache(node)
        self.buffer = SendBuffer()
        self.seen: set[tuple[int, int]] = set()
        self.discoveries: dict[int, _Discovery] = {}
        self._counter = 0

    # -- origination ------------------------------------------------------

    def send_data(self, pkt: Packet) -> None:
        self.dsr_send(pkt)

    def dsr_send(self, pkt: Packet) -> str:
        now = self.sim.now
        if pkt.dst == self.node:
            self.deliver(pkt)
            return "local"
        route = self.cache.best(pkt.dst, now)
        if route is not None:
            pkt.payload = SourceHeader(route, 0)
            self._forward(pkt, "s")
            return "sent"
        dropped = self.buffer.push(pkt, now)
        if dropped is not None:
            self.drop(dropped)
        if pkt.dst not in self.discoveries:
            self.discoveries[pkt.dst] = _Discovery()
            self._send_rreq(pkt.dst)
        return "buffered"

    def _send_rreq(self, target: int) -> None:
        d = self.discoveries[target]
        d.tries += 1
        self._counter += 1
        rid = (self.node, self._counter)
        self.seen.add(rid)
        rreq = DsrRreq(rid, target, (self.node,))
        pkt = Packet(self.net.new_uid(), PacketType.DSR_RREQ, self.node, BROADCAST,
                     control_size(PacketType.DSR_RREQ, 1), ttl=RREQ_TTL, payload=rreq)
        self.net.broadcast(self.node, pkt)
        wait = min(BACKOFF_START * 2 ** (d.tries - 1), BACKOFF_CAP)
        d.timer = self.sim.schedule(self.sim.now + wait, self._rreq_timeout, target)

    def _rreq_timeout(self, target: int) -> None:
        d = self.discoveries.get(target)
        if d is None:
            return
        d.timer = None
        for p in self.buffer.expire(self.sim.now):
            self.drop(p)
        if not self.buffer.has(target):
            del self.discoveries[target]
            return
        if d.tries >= MAX_TRIES:
            del self.discoveries[target]
            for p in self.buffer.take(target):
                self.drop(p)
            return
        self._send_rreq(target)

    # -- control processing -------------------------------------------------

    def receive(self, pkt: Packet, sender: int) -> None:
        pt = pkt.ptype
        if pt is PacketType.CBR_DATA:
            self.dsr_forward(pkt)
        elif pt is PacketType.DSR_RREQ:
            self.process_rreq(pkt)
        elif pt is PacketType.DSR_RREP:
            self.process_rrep(pkt)
        elif pt is PacketType.DSR_RERR:
            self.process_rerr(pkt)

    def process_rreq(self, pkt: Packet) -> str:
        rreq: DsrRreq = pkt.payload
        if rreq.request_id in self.seen or self.node in rreq.record:
            return "drop"
        self.seen.add(rreq.request_id)
        if rreq.target == self.node:
            route = rreq.record + (self.node,)
            self.cache.learn_path(route, self.sim.now)
            rrep = Packet(self.net.new_uid(), PacketType.DSR_RREP, self.node, route[0],
                          control_size(PacketType.DSR_RREP, len(route)), payload=DsrRrep(route))
            self._send_back(rrep, route, len(route) - 1, "s")
            return "reply"
        if pkt.ttl <= 1:
            return "drop"
        fwd = DsrRreq(rreq.request_id, rreq.target, rreq.record + (self.node,))
        out = Packet(pkt.uid, PacketType.DSR_RREQ, pkt.src, BROADCAST,
                     control_size(PacketType.DSR_RREQ, len(fwd.record)), ttl=pkt.ttl - 1,
                     payload=fwd)
        self.net.broadcast(self.node, out, "f")
        return "rebroadcast"

    def _send_back(self, pkt: Packet, route, i: int, op: str) -> None:
        """Unicast a reply from ``route[i]`` to ``route[i - 1]``."""
        prev = route[i - 1]
        if not self.net.unicast(self.node, prev, pkt, op):
            self.cache.remove_link(self.node, prev)
            self.drop(pkt)

    def process_rrep(self, pkt: Packet) -> str:
        route = pkt.payload.route
        now = self.sim.now
        self.cache.learn_path(route, now)
        if route[0] == self.node:
            self._route_found(route[-1])
            return "flushed"
        i = route.index(self.node)
        self._send_back(pkt, route, i, "f")
        return "forwarded"

    def _route_found(self, dest: int) -> None:
        d = self.discoveries.pop(dest, None)
        if d is not None and d.timer is not None:
            self.sim.cancel(d.timer)
        for p in self.buffer.expire(self.sim.now):
            self.drop(p)
        for p in self.buffer.take(dest):
            self.dsr_send(p)

    def process_rerr(self, pkt: Packet) -> None:
        rerr: DsrRerr = pkt.payload
        self.cache.remove_link(*rerr.broken)
        path = rerr.path
        i = path.index(self.node)
        if i == len(path) - 1:
            return
        if not self.net.unicast(self.node, path[i + 1], pkt, "f"):
            self.cache.remove_link(self.node, path[i + 1])
            self.drop(pkt)

    # -- data forwarding -----------------------------------------------------

    def dsr_forward(self, pkt: Packet) -> str:
        hdr: SourceHeader = pkt.payload
        route = hdr.route
        i = route.index(self.node)
        hdr.index = i
        if i == len(route) - 1:
            self.deliver(pkt)
            return "delivered"
        return self._forward(pkt, "f")

    def _forward(self, pkt: Packet, op: str) -> str:
        hdr: SourceHeader = pkt.payload
        route, i = hdr.route, hdr.index
        nxt = route[i + 1]
        if self.net.unicast(self.node, nxt, pkt, op):
            return "forwarded"
        self.cache.remove_link(self.node, nxt)
        if i == 0:
            # the source simply picks another cached route or rediscovers
            self.dsr_send(pkt)
            return "rerouted"
        self.drop(pkt)
        back = tuple(reversed(route[:i + 1]))
        rerr = Packet(self.net.new_uid(), PacketType.DSR_RERR, self.node, route[0],
                      control_size(PacketType.DSR_RERR, len(back)),
                      payload=DsrRerr((self.node, nxt), back))
        if not self.net.unicast(self.node, back[1], rerr, "s"):
            self.cache.remove_link(self.node, back[1])
            self.drop(rerr)
        return "rerr"
