"""DSDV: proactive distance vector routing with destination sequence numbers.

Each node broadcasts its full table every ~15 s, bumping its own (even)
sequence number. Routes are replaced by a higher sequence number, or by a
lower metric at the same sequence number. A broken link marks its routes
with metric infinity and an odd sequence number (stored + 1).

Triggered updates carry only changed entries. A change that advances the
sequence number goes out at once; a pure metric improvement waits out the
settling time first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .link import Packet, PacketType, BROADCAST, control_size
from .routing import RoutingAgent

INF = math.inf

PERIOD = 15.0
PERIOD_JITTER = 1.0
SETTLING_TIME = 5.0
MISSED_PERIODS = 2
BROKEN_PURGE = 30.0
DATA_TTL = 32


@dataclass(eq=False, slots=True)
class DsdvEntry:
    dest: int
    next_hop: int
    metric: float
    seqno: int
    install_time: float
    settling: bool = False
    settle_until: float = 0.0
    pending: bool = False
    broken_at: float | None = None


class DsdvUpdate(NamedTuple):
    origin: int
    entries: tuple  # of (dest, metric, seqno)
    full: bool


class DsdvAgent(RoutingAgent):
    name = "DSDV"

    def __init__(self, node, net, rng, period: float = PERIOD, jitter: float = PERIOD_JITTER,
                 settling_time: float = SETTLING_TIME):
        super().__init__(node, net, rng)
        self.period = period
        self.jitter = jitter
        self.settling_time = settling_time
        self.seqno = 0
        self.table: dict[int, DsdvEntry] = {node: DsdvEntry(node, node, 0, 0, 0.0)}
        self.last_heard: dict[int, float] = {}
        self.periodic_sent = 0
        self._pending: set[int] = set()
        self._trigger_queued = False
        self._settle_timer: tuple[float, int] | None = None

    def start(self) -> None:
        self.sim.schedule(self.rng.uniform(0.0, self.jitter), self.periodic_update)

    # -- updates ---------------------------------------------------------

    def periodic_update(self) -> DsdvUpdate:
        now = self.sim.now
        self.seqno += 2
        me = self.table[self.node]
        me.seqno = self.seqno
        silence = MISSED_PERIODS * self.period
        for nb, heard in sorted(self.last_heard.items()):
            if now - heard > silence:
                self.handle_link_break(nb)
        for dest in [d for d, e in self.table.items()
                     if e.broken_at is not None and now - e.broken_at >= BROKEN_PURGE]:
            del self.table[dest]
        entries = tuple((d, e.metric, e.seqno) for d, e in sorted(self.table.items()))
        for d in self._pending:
            e = self.table.get(d)
            if e is not None:
                e.pending = False
                e.settling = False
        self._pending.clear()
        upd = DsdvUpdate(self.node, entries, True)
        self._broadcast(upd)
        self.periodic_sent += 1
        delay = self.period + self.rng.uniform(-self.jitter, self.jitter)
        self.sim.schedule(now + delay, self.periodic_update)
        return upd

    def _broadcast(self, upd: DsdvUpdate) -> None:
        pkt = Packet(self.net.new_uid(), PacketType.DSDV_UPDATE, self.node, BROADCAST,
                     control_size(PacketType.DSDV_UPDATE, len(upd.entries)), ttl=1, payload=upd)
        self.net.broadcast(self.node, pkt)

    def _queue_trigger(self) -> None:
        if not self._trigger_queued:
            self._trigger_queued = True
            self.sim.schedule(self.sim.now, self._triggered_update)

    def _arm_settle_timer(self, at: float) -> None:
        if self._settle_timer is not None:
            if self._settle_timer[0] <= at:
                return
            self.sim.cancel(self._settle_timer[1])
        self._settle_timer = (at, self.sim.schedule(at, self._settle_expired))

    def _settle_expired(self) -> None:
        self._settle_timer = None
        self._triggered_update()

    def _triggered_update(self) -> DsdvUpdate | None:
        self._trigger_queued = False
        now = self.sim.now
        ready = []
        next_settle = INF
        for d in sorted(self._pending):
            e = self.table.get(d)
            if e is None or not e.pending:
                self._pending.discard(d)
                continue
            if e.settling and e.settle_until > now:
                next_settle = min(next_settle, e.settle_until)
                continue
            ready.append(e)
        if next_settle < INF:
            self._arm_settle_timer(next_settle)
        if not ready:
            return None
        me = self.table[self.node]
        if not any(e is me for e in ready):
            ready.insert(0, me)
        for e in ready:
            e.pending = False
            e.settling = False
            self._pending.discard(e.dest)
        upd = DsdvUpdate(self.node, tuple((e.dest, e.metric, e.seqno) for e in ready), False)
        self._broadcast(upd)
        return upd

    def process_update(self, upd: DsdvUpdate, sender: int) -> list[int]:
        """Merge an advertisement; returns the destinations whose entry changed."""
        now = self.sim.now
        changed = []
        immediate = False
        table = self.table
        for dest, metric, seqno in upd.entries:
            if dest == self.node:
                # a neighbour advertises us as broken with a newer odd number:
                # answer with a fresh even one so the route heals quickly
                if seqno > self.seqno:
                    self.seqno = seqno + 1 if seqno % 2 else seqno + 2
                    me = table[dest]
                    me.seqno = self.seqno
                    me.pending = True
                    self._pending.add(dest)
                    immediate = True
                    changed.append(dest)
                continue
            cand = metric + 1
            e = table.get(dest)
            if e is None:
                if cand == INF:
                    continue
                table[dest] = DsdvEntry(dest, sender, cand, seqno, now, pending=True)
                self._pending.add(dest)
                immediate = True
                changed.append(dest)
            elif seqno > e.seqno:
                e.next_hop = sender
                e.metric = cand
                e.seqno = seqno
                e.install_time = now
                e.broken_at = now if cand == INF else None
                e.settling = False
                e.pending = True
                self._pending.add(dest)
                immediate = True
                changed.append(dest)
            elif seqno == e.seqno and cand < e.metric:
                e.next_hop = sender
                e.metric = cand
                e.install_time = now
                e.broken_at = None
                e.pending = True
                self._pending.add(dest)
                if not e.settling:
                    e.settling = True
                    e.settle_until = now + self.settling_time
                self._arm_settle_timer(e.settle_until)
                changed.append(dest)
        if immediate:
            self._queue_trigger()
        return changed

    def handle_link_break(self, lost: int) -> list[int]:
        self.last_heard.pop(lost, None)
        now = self.sim.now
        broken = []
        for dest, e in sorted(self.table.items()):
            if dest != self.node and e.next_hop == lost and e.metric != INF:
                e.metric = INF
                e.seqno += 1
                e.broken_at = now
                e.settling = False
                e.pending = True
                self._pending.add(dest)
                broken.append(dest)
        if broken:
            self._queue_trigger()
        return broken

    def dsdv_route(self, dest: int) -> int | None:
        if dest == self.node:
            return self.node
        e = self.table.get(dest)
        if e is None or e.metric == INF:
            return None
        return e.next_hop

    # -- packets ----------------------------------------------------------

    def receive(self, pkt: Packet, sender: int) -> None:
        self.last_heard[sender] = self.sim.now
        if pkt.ptype is PacketType.DSDV_UPDATE:
            self.process_update(pkt.payload, sender)
        elif pkt.ptype is PacketType.CBR_DATA:
            self._route_data(pkt, "f")

    def send_data(self, pkt: Packet) -> None:
        pkt.ttl = DATA_TTL
        self._route_data(pkt, "s")

    def _route_data(self, pkt: Packet, op: str) -> None:
        if pkt.dst == self.node:
            self.deliver(pkt)
            return
        nh = self.dsdv_route(pkt.dst)
        if nh is None or pkt.ttl <= 0:
            self.drop(pkt)
            return
        pkt.ttl -= 1
        if not self.net.unicast(self.node, nh, pkt, op):
            self.drop(pkt)
            self.handle_link_break(nh)
