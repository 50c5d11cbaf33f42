"""AODV: on-demand hop-by-hop routing with destination sequence numbers.

Route discovery uses an expanding ring search. Link breaks are detected
from unicast send failures, with HELLO silence as a backstop, and are
reported upstream with RERRs sent to the precursors of each broken route.
Local repair and gratuitous replies are not modelled.
"""

from __future__ import annotations

import math

from typing import NamedTuple

from .link import BROADCAST, Packet, PacketType, control_size
from .routing import RoutingAgent, SendBuffer

HELLO_INTERVAL = 1.0
ALLOWED_HELLO_LOSS = 2
ACTIVE_ROUTE_TIMEOUT = 10.0
TTL_START = 1
TTL_INCREMENT = 2
TTL_THRESHOLD = 7
NET_DIAMETER = 35
RREQ_RETRIES = 2
NODE_TRAVERSAL_TIME = 0.04  # 20 x the default 2 ms hop latency
DATA_TTL = 64


def ring_schedule() -> list[int]:
    """TTLs of successive attempts: 1, 3, 5, 7, then the diameter."""
    ttls = list(range(TTL_START, TTL_THRESHOLD + 1, TTL_INCREMENT))
    return ttls + [NET_DIAMETER] * (1 + RREQ_RETRIES)


def ring_timeout(ttl: int) -> float:
    return 2 * ttl * NODE_TRAVERSAL_TIME


class AodvEntry:
    __slots__ = ("dest", "next_hop", "hop_count", "dest_seqno", "lifetime", "valid",
                 "precursors", "last_used")

    def __init__(self, dest, next_hop, hop_count, dest_seqno, lifetime):
        self.dest = dest
        self.next_hop = next_hop
        self.hop_count = hop_count
        self.dest_seqno = dest_seqno
        self.lifetime = lifetime
        self.valid = True
        self.precursors: set[int] = set()
        self.last_used = -math.inf  # never used

    def __repr__(self):
        state = "valid" if self.valid else "invalid"
        return (f"AodvEntry(dest={self.dest}, via={self.next_hop}, hops={self.hop_count}, "
                f"seq={self.dest_seqno}, {state})")


class AodvRreq(NamedTuple):
    rreq_id: tuple[int, int]  # (origin, counter)
    origin_seqno: int
    dest: int
    dest_seqno_known: int | None  # None = unknown
    hop_count: int

    @property
    def origin(self) -> int:
        return self.rreq_id[0]


class AodvRrep(NamedTuple):
    dest: int
    dest_seqno: int
    hop_count: int
    origin: int


class AodvRerr(NamedTuple):
    unreachable: tuple[tuple[int, int], ...]  # (dest, seqno)


class AodvHello(NamedTuple):
    node: int
    seqno: int


class _Discovery:
    __slots__ = ("attempt", "timer")

    def __init__(self):
        self.attempt = 0
        self.timer = None


class AodvAgent(RoutingAgent):
    name = "AODV"

    def __init__(self, node, net, rng):
        super().__init__(node, net, rng)
        self.seqno = 0
        self.table: dict[int, AodvEntry] = {}
        self.buffer = SendBuffer()
        self.seen: set[tuple[int, int]] = set()
        self.discoveries: dict[int, _Discovery] = {}
        self.last_heard: dict[int, float] = {}
        self.hello_neighbors: set[int] = set()
        self.hellos_sent = 0
        self._rreq_counter = 0

    def start(self) -> None:
        self.sim.schedule(self.rng.uniform(0.0, HELLO_INTERVAL), self.aodv_hello_tick)

    # -- route table ---------------------------------------------------------

    def _expire(self, e: AodvEntry) -> None:
        e.valid = False
        e.dest_seqno += 1

    def valid_route(self, dest: int) -> AodvEntry | None:
        e = self.table.get(dest)
        if e is None or not e.valid:
            return None
        if e.lifetime < self.sim.now:
            self._expire(e)
            return None
        return e

    def update_route(self, dest, next_hop, hop_count, seqno, lifetime) -> bool:
        """Install fresher routing information; returns True if adopted.

        New info wins with a higher sequence number, or the same sequence
        number and either fewer hops or an inactive stored entry.
        """
        e = self.table.get(dest)
        if e is None:
            self.table[dest] = AodvEntry(dest, next_hop, hop_count, seqno, lifetime)
            return True
        if e.valid and e.lifetime < self.sim.now:
            self._expire(e)
        if seqno > e.dest_seqno or (seqno == e.dest_seqno and (not e.valid or hop_count < e.hop_count)):
            if e.next_hop != next_hop:
                e.precursors = set()
            e.next_hop = next_hop
            e.hop_count = hop_count
            e.dest_seqno = seqno
            e.lifetime = lifetime if not e.valid else max(lifetime, e.lifetime)
            e.valid = True
            return True
        if e.valid and e.next_hop == next_hop and seqno == e.dest_seqno and hop_count == e.hop_count:
            e.lifetime = max(e.lifetime, lifetime)
        return False

    def _neighbor_route(self, hello: AodvHello) -> None:
        """A HELLO is first-hand news about its sender: always trust it.

        The sequence number is never lowered, so the one-hop entry stays
        at least as fresh as anything this node advertised before.
        """
        lifetime = self.sim.now + ALLOWED_HELLO_LOSS * HELLO_INTERVAL
        e = self.table.get(hello.node)
        if e is None:
            self.table[hello.node] = AodvEntry(hello.node, hello.node, 1, hello.seqno, lifetime)
            return
        if e.valid and e.lifetime < self.sim.now:
            self._expire(e)
        if e.valid and e.next_hop == hello.node:
            e.dest_seqno = max(e.dest_seqno, hello.seqno)
            e.lifetime = max(e.lifetime, lifetime)
            return
        if e.next_hop != hello.node:
            e.precursors = set()
        e.next_hop = hello.node
        e.hop_count = 1
        e.dest_seqno = max(e.dest_seqno, hello.seqno)
        e.lifetime = lifetime
        e.valid = True

    def _active(self, e: AodvEntry, now: float) -> bool:
        return e.valid and e.lifetime >= now and e.last_used >= now - ACTIVE_ROUTE_TIMEOUT

    def has_active_route(self) -> bool:
        now = self.sim.now
        return any(self._active(e, now) for e in self.table.values())

    def _touch(self, dest: int, via: int | None = None) -> None:
        # data seen on this route: keep it (and our HELLOs) alive
        e = self.table.get(dest)
        if e is None or not e.valid or (via is not None and e.next_hop != via):
            return
        now = self.sim.now
        if e.lifetime < now:
            return
        e.lifetime = max(e.lifetime, now + ACTIVE_ROUTE_TIMEOUT)
        e.last_used = now

    # -- discovery -----------------------------------------------------------

    def aodv_originate_rreq(self, dest: int) -> int:
        d = self.discoveries.get(dest)
        if d is None:
            d = self.discoveries[dest] = _Discovery()
        ttl = ring_schedule()[d.attempt]
        self.seqno += 1
        self._rreq_counter += 1
        rid = (self.node, self._rreq_counter)
        self.seen.add(rid)
        e = self.table.get(dest)
        rreq = AodvRreq(rid, self.seqno, dest, e.dest_seqno if e else None, 0)
        pkt = Packet(self.net.new_uid(), PacketType.AODV_RREQ, self.node, BROADCAST,
                     control_size(PacketType.AODV_RREQ), ttl=ttl, payload=rreq)
        self.net.broadcast(self.node, pkt)
        wait = ring_timeout(ttl)
        if ttl == NET_DIAMETER:
            # binary backoff across network-wide retries
            wait *= 2 ** (d.attempt - (len(ring_schedule()) - 1 - RREQ_RETRIES))
        d.timer = self.sim.schedule(self.sim.now + wait, self._rreq_timeout, dest)
        return ttl

    def _rreq_timeout(self, dest: int) -> None:
        d = self.discoveries.get(dest)
        if d is None:
            return
        d.timer = None
        for p in self.buffer.expire(self.sim.now):
            self.drop(p)
        if self.valid_route(dest) is not None:
            self._route_found(dest)
            return
        if not self.buffer.has(dest):
            del self.discoveries[dest]
            return
        d.attempt += 1
        if d.attempt >= len(ring_schedule()):
            del self.discoveries[dest]
            for p in self.buffer.take(dest):
                self.drop(p)
            return
        self.aodv_originate_rreq(dest)

    def aodv_process_rreq(self, pkt: Packet, sender: int) -> str:
        rreq: AodvRreq = pkt.payload
        if rreq.rreq_id in self.seen:
            return "drop"
        self.seen.add(rreq.rreq_id)
        now = self.sim.now
        origin = rreq.origin
        self.update_route(origin, sender, rreq.hop_count + 1, rreq.origin_seqno,
                          now + ACTIVE_ROUTE_TIMEOUT)
        if rreq.dest == self.node:
            if rreq.dest_seqno_known is not None:
                self.seqno = max(self.seqno, rreq.dest_seqno_known)
            rrep = AodvRrep(self.node, self.seqno, 0, origin)
            self._send_rrep(rrep, sender, None)
            return "reply"
        e = self.valid_route(rreq.dest)
        if e is not None and (rreq.dest_seqno_known is None or e.dest_seqno >= rreq.dest_seqno_known):
            e.precursors.add(sender)
            rev = self.table[origin]
            if rev.valid:
                rev.precursors.add(e.next_hop)
            rrep = AodvRrep(rreq.dest, e.dest_seqno, e.hop_count, origin)
            self._send_rrep(rrep, sender, None)
            return "reply"
        ttl = pkt.ttl - 1
        if ttl <= 0:
            return "drop"
        known = rreq.dest_seqno_known
        stored = self.table.get(rreq.dest)
        if stored is not None and (known is None or stored.dest_seqno > known):
            known = stored.dest_seqno
        fwd = rreq._replace(hop_count=rreq.hop_count + 1, dest_seqno_known=known)
        out = Packet(pkt.uid, PacketType.AODV_RREQ, pkt.src, BROADCAST, pkt.size, ttl=ttl,
                     payload=fwd)
        self.net.broadcast(self.node, out, "f")
        return "rebroadcast"

    def _send_rrep(self, rrep: AodvRrep, next_hop: int, uid: int | None) -> None:
        op = "s" if uid is None else "f"
        pkt = Packet(self.net.new_uid() if uid is None else uid, PacketType.AODV_RREP,
                     self.node, rrep.origin, control_size(PacketType.AODV_RREP), payload=rrep)
        if not self.net.unicast(self.node, next_hop, pkt, op):
            self.drop(pkt)
            self.aodv_link_failure(next_hop)

    def aodv_process_rrep(self, pkt: Packet, sender: int) -> str:
        rrep: AodvRrep = pkt.payload
        now = self.sim.now
        hops = rrep.hop_count + 1
        self.update_route(rrep.dest, sender, hops, rrep.dest_seqno, now + ACTIVE_ROUTE_TIMEOUT)
        if rrep.origin == self.node:
            if self.valid_route(rrep.dest) is not None:
                self._route_found(rrep.dest)
            return "origin"
        rev = self.valid_route(rrep.origin)
        if rev is None:
            self.drop(pkt)
            return "broken-reverse-path"
        fwd = self.valid_route(rrep.dest)
        if fwd is None:
            self.drop(pkt)
            return "stale"
        fwd.precursors.add(rev.next_hop)
        rev.precursors.add(fwd.next_hop)
        rev.lifetime = max(rev.lifetime, now + ACTIVE_ROUTE_TIMEOUT)
        self._send_rrep(rrep._replace(hop_count=hops), rev.next_hop, pkt.uid)
        return "forwarded"

    def _route_found(self, dest: int) -> None:
        d = self.discoveries.pop(dest, None)
        if d is not None and d.timer is not None:
            self.sim.cancel(d.timer)
        for p in self.buffer.expire(self.sim.now):
            self.drop(p)
        for p in self.buffer.take(dest):
            self._route_data(p, "s")

    # -- maintenance ---------------------------------------------------------

    def aodv_link_failure(self, lost: int) -> tuple[tuple[int, int], ...]:
        self.hello_neighbors.discard(lost)
        self.last_heard.pop(lost, None)
        broken = []
        recipients: set[int] = set()
        for dest, e in sorted(self.table.items()):
            if e.valid and e.next_hop == lost:
                e.valid = False
                e.dest_seqno += 1
                broken.append((dest, e.dest_seqno))
                recipients |= e.precursors
        recipients.discard(lost)
        if broken and recipients:
            self._send_rerr(tuple(broken), recipients)
        return tuple(broken)

    def _send_rerr(self, unreachable, recipients: set[int]) -> None:
        pkt = Packet(self.net.new_uid(), PacketType.AODV_RERR, self.node, BROADCAST,
                     control_size(PacketType.AODV_RERR), ttl=1, payload=AodvRerr(unreachable))
        if len(recipients) == 1:
            (only,) = recipients
            pkt.dst = only
            if not self.net.unicast(self.node, only, pkt):
                self.drop(pkt)
        else:
            self.net.broadcast(self.node, pkt)

    def aodv_process_rerr(self, pkt: Packet, sender: int) -> tuple[tuple[int, int], ...]:
        broken = []
        recipients: set[int] = set()
        for dest, seqno in pkt.payload.unreachable:
            e = self.table.get(dest)
            if e is None or not e.valid or e.next_hop != sender:
                continue
            e.valid = False
            e.dest_seqno = max(e.dest_seqno + 1, seqno)
            broken.append((dest, e.dest_seqno))
            recipients |= e.precursors
        recipients.discard(sender)
        if broken and recipients:
            self._send_rerr(tuple(broken), recipients)
        return tuple(broken)

    def aodv_hello_tick(self) -> bool:
        now = self.sim.now
        silence = ALLOWED_HELLO_LOSS * HELLO_INTERVAL
        for nb in sorted(self.hello_neighbors):
            if now - self.last_heard.get(nb, -math.inf) < silence:
                continue
            # silence only matters for a neighbour we are actively routing through;
            # an idle neighbour may simply have stopped sending HELLOs
            if any(e.next_hop == nb and self._active(e, now) for e in self.table.values()):
                self.aodv_link_failure(nb)
            else:
                self.hello_neighbors.discard(nb)
        sent = False
        if self.has_active_route():
            pkt = Packet(self.net.new_uid(), PacketType.AODV_HELLO, self.node, BROADCAST,
                         control_size(PacketType.AODV_HELLO), ttl=1,
                         payload=AodvHello(self.node, self.seqno))
            self.net.broadcast(self.node, pkt)
            self.hellos_sent += 1
            sent = True
        self.sim.schedule(now + HELLO_INTERVAL, self.aodv_hello_tick)
        return sent

    # -- packets -------------------------------------------------------------

    def receive(self, pkt: Packet, sender: int) -> None:
        self.last_heard[sender] = self.sim.now
        pt = pkt.ptype
        if pt is PacketType.CBR_DATA:
            self._touch(pkt.src, sender)
            self._touch(sender, sender)
            self._route_data(pkt, "f", sender)
        elif pt is PacketType.AODV_HELLO:
            self.hello_neighbors.add(sender)
            self._neighbor_route(pkt.payload)
        elif pt is PacketType.AODV_RREQ:
            self.aodv_process_rreq(pkt, sender)
        elif pt is PacketType.AODV_RREP:
            self.aodv_process_rrep(pkt, sender)
        elif pt is PacketType.AODV_RERR:
            self.aodv_process_rerr(pkt, sender)

    def send_data(self, pkt: Packet) -> None:
        pkt.ttl = DATA_TTL
        self._route_data(pkt, "s")

    def _buffer(self, pkt: Packet) -> None:
        dropped = self.buffer.push(pkt, self.sim.now)
        if dropped is not None:
            self.drop(dropped)
        if pkt.dst not in self.discoveries:
            self.aodv_originate_rreq(pkt.dst)

    def _route_data(self, pkt: Packet, op: str, prev: int | None = None) -> None:
        now = self.sim.now
        if pkt.dst == self.node:
            self.deliver(pkt)
            return
        e = self.valid_route(pkt.dst)
        if e is None:
            if pkt.src == self.node:
                self._buffer(pkt)
                return
            self.drop(pkt)
            if prev is not None:
                stale = self.table.get(pkt.dst)
                seq = stale.dest_seqno if stale is not None else 0
                rerr = Packet(self.net.new_uid(), PacketType.AODV_RERR, self.node, prev,
                              control_size(PacketType.AODV_RERR), ttl=1,
                              payload=AodvRerr(((pkt.dst, seq),)))
                if not self.net.unicast(self.node, prev, rerr):
                    self.drop(rerr)
            return
        if pkt.ttl <= 0:
            self.drop(pkt)
            return
        pkt.ttl -= 1
        e.lifetime = max(e.lifetime, now + ACTIVE_ROUTE_TIMEOUT)
        e.last_used = now
        nh = e.next_hop
        if self.net.unicast(self.node, nh, pkt, op):
            return
        self.aodv_link_failure(nh)
        if pkt.src == self.node:
            pkt.ttl += 1
            self._buffer(pkt)
        else:
            self.drop(pkt)


def check_loop_freedom(agents: list[AodvAgent], now: float) -> list[str]:
    """Follow valid next hops toward every destination.

    Along each path ``(dest_seqno, -hop_count)`` must strictly increase from
    one hop to the next; returns a description of every violation.
    """
    problems = []

    def live(agent, dest):
        e = agent.table.get(dest)
        if e is None or not e.valid or e.lifetime < now:
            return None
        return e

    for a in agents:
        for dest in list(a.table):
            e = live(a, dest)
            if e is None:
                continue
            seen = {a.node}
            cur, key = e, (e.dest_seqno, -e.hop_count)
            while cur.next_hop != dest:
                nxt_agent = agents[cur.next_hop]
                if nxt_agent.node in seen:
                    problems.append(f"t={now}: loop toward {dest} through {nxt_agent.node}")
                    break
                seen.add(nxt_agent.node)
                nxt = live(nxt_agent, dest)
                if nxt is None:
                    break
                nkey = (nxt.dest_seqno, -nxt.hop_count)
                if not nkey > key:
                    problems.append(
                        f"t={now}: dest {dest} key {key} at hop before {nxt_agent.node} "
                        f"not below {nkey}")
                    break
                cur, key = nxt, nkey
    return problems
