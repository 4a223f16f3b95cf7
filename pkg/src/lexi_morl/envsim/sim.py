"""Deterministic urban micro-simulator: scripted ego route plus crossing pedestrians."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from ..errors import ConfigError, ContractViolation
from ..morl import ACCELERATIONS, Action
from ..rewards import SafetyEvent, SafetyParams, dynamic_range
from .geometry import discs_hit_rect, obb_overlaps_aabb, point_segment_distance, rect_corners
from .maps import MapSpec, resolve_map

_GOAL_TOL = 0.3
_STUCK_LIMIT = 30
_DWELL_STEPS = (10, 50)
_CURB_HEADWAY_S = 1.0
_CURB_MARGIN_M = 3.0
_HEADING_TRIES = np.deg2rad([0.0, 45.0, -45.0, 90.0, -90.0])


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    v_ref: float = 8.0
    v_hard_cap: float = 15.0
    max_pedestrians: int = 30
    vicinity_radius: float = 35.0
    despawn_radius: float = 40.0
    crossing_factor: float = 0.8
    ped_speed_min: float = 0.4
    ped_speed_max: float = 1.2
    ped_radius: float = 0.3
    heading_noise_deg: float = 5.0
    ego_length: float = 4.5
    ego_width: float = 2.0
    step_cap: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.despawn_radius <= self.vicinity_radius:
            raise ConfigError("despawn radius must exceed the vicinity radius")
        if not 0.0 <= self.crossing_factor <= 1.0:
            raise ConfigError("crossing factor must lie in [0, 1]")
        if self.max_pedestrians < 0 or self.step_cap <= 0:
            raise ConfigError("max_pedestrians must be >= 0 and step_cap > 0")
        if not 0 < self.ped_speed_min <= self.ped_speed_max:
            raise ConfigError("pedestrian speed range is invalid")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown environment fields: {sorted(unknown)}")
        return cls(**d)


class DoneReason(str, Enum):
    GOAL = "goal"
    COLLISION = "collision"
    STEP_CAP = "step_cap"


@dataclass
class EgoState:
    position: np.ndarray
    heading: float
    speed: float = 0.0
    arc: float = 0.0  # arc length along the route
    waypoint: int = 0
    length: float = 4.5
    width: float = 2.0


@dataclass(frozen=True)
class Pedestrian:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    goal: np.ndarray
    crossing_allowed: bool
    radius: float = 0.3


@dataclass
class Crowd:
    """Struct-of-arrays pedestrian storage."""

    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    goal: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    speed: np.ndarray = field(default_factory=lambda: np.zeros(0))
    heading: np.ndarray = field(default_factory=lambda: np.zeros(0))
    moving: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    crossing: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    crossing_leg: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    stuck: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    wait: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    _FIELDS = ("ids", "pos", "goal", "speed", "heading", "moving", "crossing", "crossing_leg", "stuck", "wait")

    def __len__(self):
        return len(self.ids)

    def keep(self, mask):
        for name in self._FIELDS:
            setattr(self, name, getattr(self, name)[mask])

    def extend(self, other: "Crowd"):
        for name in self._FIELDS:
            setattr(self, name, np.concatenate([getattr(self, name), getattr(other, name)]))

    @property
    def velocity(self) -> np.ndarray:
        v = np.where(self.moving, self.speed, 0.0)
        return np.stack([v * np.cos(self.heading), v * np.sin(self.heading)], axis=-1).reshape(-1, 2)

    def copy(self) -> "Crowd":
        return Crowd(**{n: getattr(self, n).copy() for n in self._FIELDS})


@dataclass
class EnvState:
    ego: EgoState
    crowd: Crowd
    steps: int = 0
    distance: float = 0.0
    done: bool = False
    reason: DoneReason | None = None
    next_id: int = 0

    def pedestrians(self, radius: float = 0.3) -> list[Pedestrian]:
        vel = self.crowd.velocity
        c = self.crowd
        return [
            Pedestrian(int(c.ids[k]), c.pos[k].copy(), vel[k].copy(), c.goal[k].copy(), bool(c.crossing[k]), radius)
            for k in range(len(c))
        ]

    def fingerprint(self) -> tuple:
        """Hashable exact snapshot for determinism checks."""
        c = self.crowd
        return (
            self.ego.position.tobytes(), self.ego.heading, self.ego.speed, self.ego.arc, self.steps,
            self.distance, self.done, self.reason,
            *(getattr(c, n).tobytes() for n in Crowd._FIELDS),
        )


@dataclass(frozen=True)
class StepOutcome:
    event: SafetyEvent
    done: bool
    reason: DoneReason | None
    distance: float
    in_intersection: bool
    front_ped_distance: float | None
    speed_before: float
    speed_after: float
    action: int

    def __post_init__(self):
        assert self.done == (self.reason is not None)
        assert (self.reason is DoneReason.COLLISION) == (self.event.kind.value == "collision")


class UrbanEnv:
    """One simulator instance. Not thread-safe; use one per thread."""

    def __init__(self, config: EnvConfig = EnvConfig(), map_spec: MapSpec | str = "train",
                 safety: SafetyParams = SafetyParams()):
        self.config = config
        self.map = resolve_map(map_spec)
        self.safety = safety
        self.raster = self.map.raster
        self.path = self.map.path
        self._noise = np.deg2rad(config.heading_noise_deg)
        self.state: EnvState | None = None
        self.rng = np.random.default_rng(config.seed)

    # -- episode lifecycle -------------------------------------------------
    def reset(self, seed: int | None = None) -> EnvState:
        self.rng = np.random.default_rng(self.config.seed if seed is None else seed)
        pos, heading = self.path.locate(0.0)
        ego = EgoState(pos.copy(), heading, 0.0, 0.0, 0, self.config.ego_length, self.config.ego_width)
        self.state = EnvState(ego=ego, crowd=Crowd())
        self._spawn(self.config.max_pedestrians)
        return self.state

    def step(self, action) -> StepOutcome:
        st, cfg = self.state, self.config
        if st is None or st.done:
            raise ContractViolation("step() called on a finished or un-reset episode")
        action = Action(int(action))
        ego = st.ego

        v0 = ego.speed
        v1 = min(max(v0 + ACCELERATIONS[action] * cfg.dt, 0.0), cfg.v_hard_cap)
        s1 = min(ego.arc + v1 * cfg.dt, self.path.length)
        moved = s1 - ego.arc
        ego.position, ego.heading = self.path.locate(s1)
        ego.arc, ego.speed = s1, v1
        ego.waypoint = int(min(np.searchsorted(self.path.cum, s1, side="right") - 1, len(self.path.seg) - 1))
        st.distance += moved
        st.steps += 1

        hit_now = self._hits(st.crowd.pos)
        self._move_crowd(frozen=hit_now)
        self._despawn_and_respawn()

        collided = bool(np.any(self._hits(st.crowd.pos)))
        front = self.nearest_front_crossing_pedestrian()
        if collided:
            event = SafetyEvent.collision()
        elif front is not None and front <= dynamic_range(v1, self.safety):
            event = SafetyEvent.near(front)
        else:
            event = SafetyEvent.clear()

        reason = None
        if collided:
            reason = DoneReason.COLLISION
        elif s1 >= self.path.length:
            reason = DoneReason.GOAL
        elif st.steps >= cfg.step_cap:
            reason = DoneReason.STEP_CAP
        st.done, st.reason = reason is not None, reason
        return StepOutcome(event, st.done, reason, moved, self.in_intersection(), front, v0, v1, int(action))

    # -- queries -----------------------------------------------------------
    def _hits(self, points) -> np.ndarray:
        ego = self.state.ego
        return discs_hit_rect(points, self.config.ped_radius, ego.position, ego.heading, ego.length, ego.width)

    def footprint(self) -> np.ndarray:
        ego = self.state.ego
        return rect_corners(ego.position, ego.heading, ego.length, ego.width)

    def in_intersection(self) -> bool:
        corners = self.footprint()
        return any(obb_overlaps_aabb(corners, r) for r in self.map.intersections)

    def nearest_front_crossing_pedestrian(self) -> float | None:
        """Along-route gap from the front bumper to the closest in-lane pedestrian on the road."""
        c = self.state.crowd
        if len(c) == 0:
            return None
        s, lat = self.path.project(c.pos)
        gap = s - (self.state.ego.arc + self.state.ego.length / 2)
        ok = (gap > 0) & (np.abs(lat) <= self.map.lane_width / 2) & self.raster.on_road(c.pos)
        if not np.any(ok):
            return None
        return float(gap[ok].min())

    # -- pedestrians -------------------------------------------------------
    def _move_crowd(self, frozen):
        c, cfg, rng = self.state.crowd, self.config, self.rng
        n = len(c)
        if n == 0:
            return
        noise = rng.normal(0.0, self._noise, size=n)
        on_road = self.raster.on_road(c.pos)
        to_goal = c.goal - c.pos
        dist = np.hypot(to_goal[:, 0], to_goal[:, 1])
        step_len = np.minimum(c.speed * cfg.dt, dist)
        may_enter_road = c.crossing & ~self._curb_hold(on_road)
        pending = ((dist > _GOAL_TOL) | on_road) & ~frozen & (c.wait == 0)

        # straight-to-goal first, then the dodge headings; first free one wins
        idx = np.flatnonzero(pending)
        h = (np.arctan2(to_goal[idx, 1], to_goal[idx, 0]) + noise[idx])[:, None] + _HEADING_TRIES
        cand = c.pos[idx, None, :] + step_len[idx, None, None] * np.stack([np.cos(h), np.sin(h)], axis=-1)
        flat = cand.reshape(-1, 2)
        blocked = (~np.repeat(may_enter_road[idx], len(_HEADING_TRIES)) & self.raster.on_road(flat)) | self._hits(flat)
        free = ~blocked.reshape(len(idx), len(_HEADING_TRIES))
        ok = free.any(axis=1)
        first = np.argmax(free, axis=1)
        take = idx[ok]
        c.pos = c.pos.copy()
        c.pos[take] = cand[ok, first[ok]]
        c.heading[take] = h[ok, first[ok]]
        moved = np.zeros(n, dtype=bool)
        moved[take] = True
        c.moving = moved
        c.stuck = np.where(moved | (c.wait > 0), 0, c.stuck + 1)

        # arrival starts a dwell; a new goal is picked once it runs out
        arrived = (c.wait == 0) & (np.hypot(*(c.goal - c.pos).T) <= _GOAL_TOL) & ~self.raster.on_road(c.pos)
        n_arr = int(arrived.sum())
        if n_arr:
            c.wait[arrived] = rng.integers(*_DWELL_STEPS, size=n_arr)
        ending = c.wait == 1
        c.wait = np.maximum(c.wait - 1, 0)
        for k in np.flatnonzero(ending | (c.stuck > _STUCK_LIMIT)):
            if c.crossing[k]:
                c.crossing_leg[k] = not c.crossing_leg[k]
            c.goal[k] = self._pick_goal(c.pos[k], bool(c.crossing_leg[k]))
            c.stuck[k] = 0

    def _curb_hold(self, on_road) -> np.ndarray:
        """Pedestrians still on the sidewalk wait while the ego is about to pass them."""
        c, ego = self.state.crowd, self.state.ego
        s, _ = self.path.project(c.pos)
        gap = s - (ego.arc + ego.length / 2)
        window = ego.speed * _CURB_HEADWAY_S + _CURB_MARGIN_M
        return (gap > -ego.length) & (gap < window) & ~on_road

    def _nearest_road(self, p):
        best = None
        for r in self.map.roads:
            d, foot = point_segment_distance(p[None], r.start, r.end)
            if best is None or d[0] < best[0]:
                best = (d[0], foot[0], r)
        return best

    def _pick_goal(self, p, cross: bool):
        rng, raster = self.rng, self.raster
        d, foot, road = self._nearest_road(p)
        u = np.subtract(road.end, road.start, dtype=float)
        u /= np.hypot(*u)
        on_road = bool(raster.on_road(p)[0])
        if (cross or on_road) and d > 0:
            goal = 2 * foot - p + u * rng.uniform(-2.0, 2.0)
            if not raster.on_road(goal)[0]:
                return goal
        if on_road:
            # never linger on the carriageway
            walk = raster.sidewalk_centers
            return walk[np.argmin(np.hypot(*(walk - p).T))].copy()
        span = rng.uniform(5.0, 20.0)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        for cand in (p + sign * span * u, p - sign * span * u, p + sign * 0.5 * span * u, p - sign * 0.5 * span * u):
            probe = p + np.linspace(0.0, 1.0, 12)[:, None] * (cand - p)
            if not np.any(raster.on_road(probe)):
                return cand
        return p.copy()

    def _spawn(self, count: int):
        st, cfg, rng = self.state, self.config, self.rng
        count = min(count, cfg.max_pedestrians - len(st.crowd))
        if count <= 0:
            return
        ego = st.ego
        cells = self.raster.sidewalk_centers
        rel = cells - ego.position
        fwd = rel @ np.array([np.cos(ego.heading), np.sin(ego.heading)])
        near = (np.hypot(rel[:, 0], rel[:, 1]) <= cfg.vicinity_radius - self.raster.res) & (fwd >= 0)
        clear = ~discs_hit_rect(cells, cfg.ped_radius + 1.0, ego.position, ego.heading, ego.length, ego.width)
        pool = cells[near & clear]
        if len(pool) == 0:
            return
        pick = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
        pos = pool[pick] + rng.uniform(-0.5, 0.5, size=(len(pick), 2)) * self.raster.res
        m = len(pos)
        crossing = rng.random(m) < cfg.crossing_factor
        leg = crossing & (rng.random(m) < 0.5)
        goals = np.array([self._pick_goal(pos[k], bool(leg[k])) for k in range(m)]).reshape(-1, 2)
        heading = np.arctan2(goals[:, 1] - pos[:, 1], goals[:, 0] - pos[:, 0])
        new = Crowd(
            ids=np.arange(st.next_id, st.next_id + m, dtype=np.int64),
            pos=pos,
            goal=goals,
            speed=rng.uniform(cfg.ped_speed_min, cfg.ped_speed_max, size=m),
            heading=heading,
            moving=np.ones(m, dtype=bool),
            crossing=crossing,
            crossing_leg=leg,
            stuck=np.zeros(m, dtype=np.int64),
            wait=np.zeros(m, dtype=np.int64),
        )
        st.next_id += m
        st.crowd.extend(new)

    def _despawn_and_respawn(self):
        c, ego = self.state.crowd, self.state.ego
        if len(c) == 0:
            return
        far = np.hypot(*(c.pos - ego.position).T) > self.config.despawn_radius
        if np.any(far):
            c.keep(~far)
            self._spawn(int(far.sum()))
