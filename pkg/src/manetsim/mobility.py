"""Random Walk and Random Waypoint trajectories and setdest-style scenario files.

A trajectory is a contiguous list of linear legs per node. Random Walk legs
that hit the area border are split at the hit point, so every leg stays a
straight segment and position is always ``origin + velocity * (t - start)``.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import RandomStream


class OutOfLegError(ValueError):
    pass


class MobilityConfigError(ValueError):
    pass


class MobilityModel(enum.Enum):
    RANDOM_WALK = "RandomWalk"
    RANDOM_WAYPOINT = "RandomWaypoint"

    @classmethod
    def parse(cls, text: str) -> "MobilityModel":
        key = text.strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "rw": cls.RANDOM_WALK,
            "randomwalk": cls.RANDOM_WALK,
            "rwp": cls.RANDOM_WAYPOINT,
            "randomwaypoint": cls.RANDOM_WAYPOINT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise MobilityConfigError(f"unknown mobility model {text!r}") from None


@dataclass(frozen=True)
class AreaBounds:
    width: float = 670.0
    height: float = 670.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise MobilityConfigError(f"area must be positive, got {self.width}x{self.height}")

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height


@dataclass(frozen=True)
class MobilityParams:
    model: MobilityModel = MobilityModel.RANDOM_WAYPOINT
    speed_min: float = 0.0
    speed_max: float = 10.0
    pause_time: float = 0.0
    leg_duration: float = 10.0

    def __post_init__(self):
        if not (0 <= self.speed_min <= self.speed_max):
            raise MobilityConfigError(
                f"need 0 <= speed_min <= speed_max, got {self.speed_min}, {self.speed_max}"
            )
        if self.pause_time < 0:
            raise MobilityConfigError(f"pause_time must be >= 0, got {self.pause_time}")
        if self.model is MobilityModel.RANDOM_WALK and self.pause_time != 0:
            raise MobilityConfigError("RandomWalk has no pause time; pause_time must be 0")
        if not self.leg_duration > 0:
            raise MobilityConfigError(f"leg_duration must be > 0, got {self.leg_duration}")
        if self.model is MobilityModel.RANDOM_WAYPOINT and self.speed_max <= 0:
            raise MobilityConfigError("RandomWaypoint needs speed_max > 0")


@dataclass(frozen=True)
class MobilityState:
    """One linear leg of a node's trajectory."""

    node: int
    leg_origin: tuple[float, float]
    leg_start: float
    velocity: tuple[float, float]
    leg_end: float
    paused: bool = False

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)

    @property
    def leg_dest(self) -> tuple[float, float]:
        if math.isinf(self.leg_end):
            return self.leg_origin
        return position_at(self, self.leg_end)


def position_at(state: MobilityState, t: float) -> tuple[float, float]:
    if t < state.leg_start or t > state.leg_end:
        raise OutOfLegError(f"t={t} outside leg [{state.leg_start}, {state.leg_end}]")
    dt = t - state.leg_start
    x0, y0 = state.leg_origin
    vx, vy = state.velocity
    return (x0 + vx * dt, y0 + vy * dt)


def reflect(pos, vel, bounds: AreaBounds):
    """Fold a position that crossed the border back inside, mirroring velocity.

    Each crossing negates the matching velocity component; folding repeats
    until the point lies within the area, so the speed is unchanged.
    """
    x, y = pos
    vx, vy = vel
    w, h = bounds.width, bounds.height
    while x < 0 or x > w:
        x = -x if x < 0 else 2 * w - x
        vx = -vx
    while y < 0 or y > h:
        y = -y if y < 0 else 2 * h - y
        vy = -vy
    return (x, y), (vx, vy)


def _clamp(v: float, hi: float) -> float:
    return 0.0 if v < 0.0 else hi if v > hi else v


def _bounce_segments(node, origin, start, velocity, duration, bounds):
    """Split straight motion of ``duration`` seconds into in-bounds segments."""
    w, h = bounds.width, bounds.height
    x, y = origin
    vx, vy = velocity
    t = start
    end = start + duration
    legs = []
    while True:
        # heading out while sitting on a wall: bounce before moving
        if (x <= 0 and vx < 0) or (x >= w and vx > 0):
            vx = -vx
        if (y <= 0 and vy < 0) or (y >= h and vy > 0):
            vy = -vy
        tx = (w - x) / vx if vx > 0 else (-x / vx if vx < 0 else math.inf)
        ty = (h - y) / vy if vy > 0 else (-y / vy if vy < 0 else math.inf)
        hit = min(tx, ty)
        if t + hit >= end:
            legs.append(MobilityState(node, (x, y), t, (vx, vy), end))
            return legs
        t_hit = t + hit
        legs.append(MobilityState(node, (x, y), t, (vx, vy), t_hit))
        nx = _clamp(x + vx * hit, w)
        ny = _clamp(y + vy * hit, h)
        if tx <= hit:
            nx = w if vx > 0 else 0.0
        if ty <= hit:
            ny = h if vy > 0 else 0.0
        x, y, t = nx, ny, t_hit


def rw_next_leg(
    state: MobilityState, params: MobilityParams, rng: RandomStream, bounds: AreaBounds
) -> list[MobilityState]:
    """Draw a new Random Walk leg starting where ``state`` ends.

    Returns the leg as a list of straight segments (more than one when it
    bounces off the border). The last segment ends at
    ``state.leg_end + params.leg_duration``.
    """
    if params.model is not MobilityModel.RANDOM_WALK:
        raise MobilityConfigError("rw_next_leg needs a RandomWalk configuration")
    theta = rng.uniform(0.0, 2 * math.pi)
    speed = rng.uniform(params.speed_min, params.speed_max)
    velocity = (speed * math.cos(theta), speed * math.sin(theta))
    return _bounce_segments(
        state.node, state.leg_dest, state.leg_end, velocity, params.leg_duration, bounds
    )


def rwp_next_leg(
    state: MobilityState, params: MobilityParams, rng: RandomStream, bounds: AreaBounds
) -> MobilityState:
    if params.model is not MobilityModel.RANDOM_WAYPOINT:
        raise MobilityConfigError("rwp_next_leg needs a RandomWaypoint configuration")
    here = state.leg_dest
    start = state.leg_end
    if not state.paused and params.pause_time > 0:
        return MobilityState(state.node, here, start, (0.0, 0.0), start + params.pause_time, True)
    dx = rng.uniform(0.0, bounds.width)
    dy = rng.uniform(0.0, bounds.height)
    speed = 0.0
    while speed <= 0.0:
        speed = rng.uniform(params.speed_min, params.speed_max)
    dist = math.hypot(dx - here[0], dy - here[1])
    if dist == 0.0:
        return MobilityState(state.node, here, start, (0.0, 0.0), start)
    vel = (speed * (dx - here[0]) / dist, speed * (dy - here[1]) / dist)
    return MobilityState(state.node, here, start, vel, start + dist / speed)


@dataclass
class Scenario:
    bounds: AreaBounds
    duration: float
    legs: list[list[MobilityState]]
    _starts: list[list[float]] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        self._starts = [[leg.leg_start for leg in node_legs] for node_legs in self.legs]

    @property
    def n_nodes(self) -> int:
        return len(self.legs)

    def initial_positions(self) -> list[tuple[float, float]]:
        return [node_legs[0].leg_origin for node_legs in self.legs]

    def leg_at(self, node: int, t: float) -> MobilityState:
        i = bisect.bisect_right(self._starts[node], t) - 1
        legs = self.legs[node]
        i = max(0, min(i, len(legs) - 1))
        # zero-length legs share their start with the next one
        while t > legs[i].leg_end and i + 1 < len(legs):
            i += 1
        return legs[i]

    def position(self, node: int, t: float) -> tuple[float, float]:
        leg = self.leg_at(node, t)
        x, y = position_at(leg, min(max(t, leg.leg_start), leg.leg_end))
        return (_clamp(x, self.bounds.width), _clamp(y, self.bounds.height))

    def paused_time(self, node: int) -> float:
        total = 0.0
        for leg in self.legs[node]:
            if leg.paused:
                total += min(leg.leg_end, self.duration) - min(leg.leg_start, self.duration)
        return total

    def to_text(self) -> str:
        lines = []
        for node, node_legs in enumerate(self.legs):
            x, y = node_legs[0].leg_origin
            lines.append(f"node {node} init {x:.6f} {y:.6f}")
        cmds = []
        for node, node_legs in enumerate(self.legs):
            for leg in node_legs:
                if leg.leg_start >= self.duration:
                    break
                if leg.paused:
                    cmd = f"pause {leg.leg_end - leg.leg_start:.6f}"
                elif math.isinf(leg.leg_end):
                    continue
                else:
                    dx, dy = leg.leg_dest
                    cmd = f"setdest {dx:.6f} {dy:.6f} {leg.speed:.6f}"
                cmds.append((leg.leg_start, node, f"at {leg.leg_start:.6f} node {node} {cmd}"))
        cmds.sort(key=lambda c: (c[0], c[1]))
        lines.extend(c[2] for c in cmds)
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str, bounds: AreaBounds, duration: float) -> "Scenario":
        init: dict[int, tuple[float, float]] = {}
        cmds: dict[int, list] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "node" and parts[2] == "init":
                    init[int(parts[1])] = (float(parts[3]), float(parts[4]))
                elif parts[0] == "at" and parts[2] == "node":
                    t, node, verb = float(parts[1]), int(parts[3]), parts[4]
                    if verb == "setdest":
                        args = (float(parts[5]), float(parts[6]), float(parts[7]))
                    elif verb == "pause":
                        args = (float(parts[5]),)
                    else:
                        raise ValueError(verb)
                    cmds.setdefault(node, []).append((t, verb, args))
                else:
                    raise ValueError(parts[0])
            except (IndexError, ValueError) as exc:
                raise ValueError(f"scenario line {lineno}: cannot parse {raw!r}") from exc
        n = max(init) + 1 if init else 0
        if sorted(init) != list(range(n)):
            raise ValueError("scenario must give init positions for nodes 0..n-1")
        legs = []
        for node in range(n):
            pos = init[node]
            t_cur = 0.0
            node_legs: list[MobilityState] = []
            for t, verb, args in sorted(cmds.get(node, []), key=lambda c: c[0]):
                if node_legs:
                    last = node_legs.pop()
                    end = min(last.leg_end, t)
                    trimmed = MobilityState(node, last.leg_origin, last.leg_start,
                                            last.velocity, end, last.paused)
                    node_legs.append(trimmed)
                    pos = position_at(trimmed, end)
                    pos = (_clamp(pos[0], bounds.width), _clamp(pos[1], bounds.height))
                    t_cur = end
                if t > t_cur:
                    node_legs.append(MobilityState(node, pos, t_cur, (0.0, 0.0), t))
                if verb == "pause":
                    node_legs.append(MobilityState(node, pos, t, (0.0, 0.0), t + args[0], True))
                else:
                    dx, dy, speed = args
                    dist = math.hypot(dx - pos[0], dy - pos[1])
                    if dist == 0.0 or speed <= 0.0:
                        node_legs.append(MobilityState(node, pos, t, (0.0, 0.0), math.inf))
                    else:
                        vel = (speed * (dx - pos[0]) / dist, speed * (dy - pos[1]) / dist)
                        node_legs.append(MobilityState(node, pos, t, vel, t + dist / speed))
                t_cur = t
            if node_legs:
                last = node_legs[-1]
                if not math.isinf(last.leg_end):
                    end_pos = last.leg_dest
                    end_pos = (_clamp(end_pos[0], bounds.width), _clamp(end_pos[1], bounds.height))
                    node_legs.append(MobilityState(node, end_pos, last.leg_end, (0.0, 0.0), math.inf))
            else:
                node_legs.append(MobilityState(node, pos, 0.0, (0.0, 0.0), math.inf))
            legs.append(node_legs)
        return cls(bounds, duration, legs)

    @classmethod
    def read(cls, path, bounds: AreaBounds, duration: float) -> "Scenario":
        return cls.from_text(Path(path).read_text(), bounds, duration)

    @classmethod
    def static(cls, positions, bounds: AreaBounds, duration: float) -> "Scenario":
        legs = [
            [MobilityState(i, (float(x), float(y)), 0.0, (0.0, 0.0), math.inf)]
            for i, (x, y) in enumerate(positions)
        ]
        return cls(bounds, duration, legs)


def generate_scenario(
    params: MobilityParams,
    bounds: AreaBounds,
    n_nodes: int,
    duration: float,
    rng: RandomStream,
) -> Scenario:
    """Place nodes uniformly and precompute legs covering ``[0, duration]``.

    Draw order: all initial positions (x then y, node by node), then each
    node's legs in turn.
    """
    if n_nodes < 1:
        raise MobilityConfigError("need at least one node")
    if not duration > 0:
        raise MobilityConfigError("duration must be > 0")
    origins = [(rng.uniform(0.0, bounds.width), rng.uniform(0.0, bounds.height)) for _ in range(n_nodes)]
    legs = []
    for node, origin in enumerate(origins):
        node_legs: list[MobilityState] = []
        if params.model is MobilityModel.RANDOM_WALK:
            cur = MobilityState(node, origin, 0.0, (0.0, 0.0), 0.0)
            while cur.leg_end < duration:
                segs = rw_next_leg(cur, params, rng, bounds)
                node_legs.extend(segs)
                cur = segs[-1]
        else:
            # a zero-length "arrival" makes the first real leg a pause
            cur = MobilityState(node, origin, 0.0, (0.0, 0.0), 0.0, paused=False)
            while cur.leg_end < duration:
                cur = rwp_next_leg(cur, params, rng, bounds)
                if cur.leg_end > cur.leg_start or cur.paused:
                    node_legs.append(cur)
        if not node_legs:
            node_legs.append(MobilityState(node, origin, 0.0, (0.0, 0.0), duration))
        legs.append(node_legs)
    return Scenario(bounds, duration, legs)


class PositionTracker:
    """Vectorised positions of all nodes for a non-decreasing query time."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        n = scenario.n_nodes
        self._idx = [0] * n
        self.ox = np.zeros(n)
        self.oy = np.zeros(n)
        self.vx = np.zeros(n)
        self.vy = np.zeros(n)
        self.ts = np.zeros(n)
        self.te = np.zeros(n)
        self._last_t = -math.inf
        self._cache_t = None
        self._cache = None
        for node in range(n):
            self._load(node, scenario.legs[node][0])
        self._next_change = float(self.te.min()) if n else math.inf

    def _load(self, node, leg):
        self.ox[node], self.oy[node] = leg.leg_origin
        self.vx[node], self.vy[node] = leg.velocity
        self.ts[node] = leg.leg_start
        self.te[node] = leg.leg_end

    def _advance(self, t: float) -> None:
        if t < self._last_t:
            for node in range(self.scenario.n_nodes):
                self._idx[node] = 0
                self._load(node, self.scenario.legs[node][0])
        self._last_t = t
        if t <= self._next_change:
            return
        legs = self.scenario.legs
        for node in np.nonzero(self.te < t)[0].tolist():
            i = self._idx[node]
            node_legs = legs[node]
            while i + 1 < len(node_legs) and node_legs[i].leg_end < t:
                i += 1
            self._idx[node] = i
            self._load(node, node_legs[i])
        self._next_change = float(self.te.min())

    def positions(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if t == self._cache_t:
            return self._cache
        self._advance(t)
        dt = t - self.ts
        b = self.scenario.bounds
        xs = np.clip(self.ox + self.vx * dt, 0.0, b.width)
        ys = np.clip(self.oy + self.vy * dt, 0.0, b.height)
        self._cache_t = t
        self._cache = (xs, ys)
        return self._cache
