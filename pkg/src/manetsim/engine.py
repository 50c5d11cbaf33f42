"""Discrete-event engine: clock, event queue, cancellable timers and the PRNG.

Events are ordered by ``(fire_at, id)``. Ids grow with every call to
:meth:`Simulator.schedule`, so events sharing a timestamp execute in the order
they were scheduled.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
from typing import Any, Callable

MASK64 = (1 << 64) - 1

# Sub-stream tags. A run's streams are derived as ``run_seed ^ tag`` so that
# switching protocols never perturbs the mobility scenario or traffic pattern.
TAG_MOBILITY = 0x4D4F42494C495459  # "MOBILITY"
TAG_TRAFFIC = 0x0054524146464943  # "TRAFFIC"
TAG_PROTOCOL = 0x50524F544F434F4C  # "PROTOCOL"


class PastTimeError(ValueError):
    """Raised when an event is scheduled before the current clock."""


class BadRangeError(ValueError):
    """Raised by :meth:`RandomStream.uniform` when ``lo > hi``."""


class EventKind(enum.Enum):
    PACKET_DELIVERY = "packet-delivery"
    TIMER = "timer"
    MOBILITY_LEG_END = "mobility-leg-end"
    TRAFFIC_TICK = "traffic-tick"
    PERIODIC_UPDATE = "periodic-update"


class RandomStream:
    """SplitMix64 generator.

    State transition: ``state += 0x9E3779B97F4A7C15 (mod 2**64)``; the output
    is the standard SplitMix64 finaliser of the new state. Floats take the
    top 53 bits of one output, so every float draw costs exactly one step.
    """

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.state = self.seed

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        if lo > hi:
            raise BadRangeError(f"uniform({lo}, {hi}): lo > hi")
        u = self.random()
        if lo == hi:
            return lo
        v = lo + (hi - lo) * u
        # rounding can land exactly on hi for wide ranges
        return v if v < hi else math.nextafter(hi, lo)

    def randrange(self, n: int) -> int:
        """Integer in [0, n) from one step."""
        if n <= 0:
            raise BadRangeError(f"randrange({n})")
        return int(self.random() * n)

    def derive(self, tag: int) -> "RandomStream":
        return RandomStream(self.seed ^ tag)


class Event:
    __slots__ = ("id", "fire_at", "kind", "target", "callback", "args")

    def __init__(self, id, fire_at, kind, target, callback, args):
        self.id = id
        self.fire_at = fire_at
        self.kind = kind
        self.target = target
        self.callback = callback
        self.args = args

    def __repr__(self):
        return f"Event(id={self.id}, fire_at={self.fire_at}, kind={self.kind.value})"


class Simulator:
    """Single-threaded event loop with a monotone clock."""

    def __init__(self):
        self.now = 0.0
        self._heap: list[tuple[float, int, Event]] = []
        self._pending: dict[int, Event] = {}
        self._ids = itertools.count(1)
        self.executed = 0

    def schedule(
        self,
        fire_at: float,
        callback: Callable[..., Any],
        *args: Any,
        kind: EventKind = EventKind.TIMER,
        target: Any = None,
    ) -> int:
        if fire_at < self.now:
            raise PastTimeError(f"cannot schedule at {fire_at} < now {self.now}")
        eid = next(self._ids)
        ev = Event(eid, fire_at, kind, target, callback, args)
        self._pending[eid] = ev
        heapq.heappush(self._heap, (fire_at, eid, ev))
        return eid

    def schedule_in(self, delay: float, callback, *args, kind=EventKind.TIMER, target=None) -> int:
        return self.schedule(self.now + delay, callback, *args, kind=kind, target=target)

    def cancel(self, eid: int) -> bool:
        # lazy deletion: the heap entry is skipped when popped
        return self._pending.pop(eid, None) is not None

    def pending(self) -> int:
        return len(self._pending)

    def run_until(self, t_end: float) -> int:
        if t_end < self.now:
            raise PastTimeError(f"run_until({t_end}) is before now {self.now}")
        heap = self._heap
        pending = self._pending
        count = 0
        while heap and heap[0][0] <= t_end:
            fire_at, eid, ev = heapq.heappop(heap)
            if pending.pop(eid, None) is None:
                continue
            self.now = fire_at
            ev.callback(*ev.args)
            count += 1
        self.now = t_end
        self.executed += count
        return count
