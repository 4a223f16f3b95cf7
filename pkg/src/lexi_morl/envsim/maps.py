"""Road maps: JSON schema, validation, rasterisation and the builtin generators."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .geometry import Polyline, in_rects, point_segment_distance

SIDEWALK, ROAD, INTERSECTION, CROSSWALK = 0, 1, 2, 3
RASTER_RES = 0.5


@dataclass(frozen=True)
class RoadSegment:
    start: tuple[float, float]
    end: tuple[float, float]
    lanes: int = 2

    def half_width(self, lane_width: float) -> float:
        return self.lanes * lane_width / 2.0


@dataclass
class MapSpec:
    name: str
    roads: list[RoadSegment]
    route: np.ndarray
    intersections: list[tuple[float, float, float, float]] = field(default_factory=list)
    crosswalks: list[tuple[float, float, float, float]] = field(default_factory=list)
    lane_width: float = 3.5
    sidewalk_width: float = 3.0

    def __post_init__(self):
        self.route = np.asarray(self.route, dtype=float)
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self):
        if not self.roads:
            raise ConfigError(f"map {self.name!r} has no roads")
        if self.lane_width <= 0 or self.sidewalk_width <= 0:
            raise ConfigError("lane and sidewalk widths must be positive")
        if self.route.ndim != 2 or self.route.shape[1] != 2 or len(self.route) < 2:
            raise ConfigError(f"map {self.name!r}: route needs >= 2 waypoints")
        try:
            Polyline(self.route)
        except ValueError as exc:
            raise ConfigError(f"map {self.name!r}: {exc}") from exc
        off = self.road_distance(self.route) > 1e-9
        if np.any(off):
            raise ConfigError(f"map {self.name!r}: waypoints {np.flatnonzero(off).tolist()} are off-road")
        for rect in list(self.intersections) + list(self.crosswalks):
            x0, y0, x1, y1 = rect
            if not (x1 > x0 and y1 > y0):
                raise ConfigError(f"map {self.name!r}: degenerate rect {rect}")
        for rect in self.crosswalks:
            x0, y0, x1, y1 = rect
            probe = np.array([[(x0 + x1) / 2, (y0 + y1) / 2]])
            if self.road_distance(probe)[0] > 0:
                raise ConfigError(f"map {self.name!r}: crosswalk {rect} does not touch a road")

    def road_distance(self, points) -> np.ndarray:
        """How far each point lies outside the road surface (0 when on it)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        best = np.full(len(pts), np.inf)
        for r in self.roads:
            d, _ = point_segment_distance(pts, r.start, r.end)
            best = np.minimum(best, np.maximum(d - r.half_width(self.lane_width), 0.0))
        return best

    @property
    def goal(self) -> np.ndarray:
        return self.route[-1]

    @cached_property
    def path(self) -> Polyline:
        return Polyline(self.route)

    @cached_property
    def bounds(self) -> tuple[float, float, float, float]:
        ends = np.array([p for r in self.roads for p in (r.start, r.end)], dtype=float)
        margin = max(r.half_width(self.lane_width) for r in self.roads) + self.sidewalk_width + 5.0
        return (ends[:, 0].min() - margin, ends[:, 1].min() - margin,
                ends[:, 0].max() + margin, ends[:, 1].max() + margin)

    @cached_property
    def raster(self) -> "MapRaster":
        return MapRaster(self)

    def translated(self, offset) -> "MapSpec":
        off = np.asarray(offset, dtype=float)
        shift = lambda p: tuple(float(v) for v in np.asarray(p) + off)  # noqa: E731
        rect = lambda r: (r[0] + off[0], r[1] + off[1], r[2] + off[0], r[3] + off[1])  # noqa: E731
        return MapSpec(
            self.name,
            [RoadSegment(shift(r.start), shift(r.end), r.lanes) for r in self.roads],
            self.route + off,
            [rect(r) for r in self.intersections],
            [rect(r) for r in self.crosswalks],
            self.lane_width,
            self.sidewalk_width,
        )

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lane_width": self.lane_width,
            "sidewalk_width": self.sidewalk_width,
            "roads": [{"start": list(r.start), "end": list(r.end), "lanes": r.lanes} for r in self.roads],
            "intersections": [list(r) for r in self.intersections],
            "crosswalks": [list(r) for r in self.crosswalks],
            "route": self.route.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MapSpec":
        try:
            roads = [RoadSegment(tuple(r["start"]), tuple(r["end"]), int(r.get("lanes", 2))) for r in d["roads"]]
            return cls(
                name=d.get("name", "custom"),
                roads=roads,
                route=np.asarray(d["route"], dtype=float),
                intersections=[tuple(map(float, r)) for r in d.get("intersections", [])],
                crosswalks=[tuple(map(float, r)) for r in d.get("crosswalks", [])],
                lane_width=float(d.get("lane_width", 3.5)),
                sidewalk_width=float(d.get("sidewalk_width", 3.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed map: {exc}") from exc

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "MapSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc


class MapRaster:
    """Semantic codes on a regular 0.5 m lattice, plus the sidewalk spawn cells."""

    def __init__(self, spec: MapSpec, res: float = RASTER_RES):
        x0, y0, x1, y1 = spec.bounds
        self.origin = np.array([x0, y0])
        self.res = res
        self.shape = (int(np.ceil((x1 - x0) / res)), int(np.ceil((y1 - y0) / res)))
        ix, iy = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
        centers = self.origin + (np.stack([ix.ravel(), iy.ravel()], axis=1) + 0.5) * res

        off_road = spec.road_distance(centers)
        codes = np.where(off_road <= 0.0, ROAD, SIDEWALK).astype(np.int8)
        codes[in_rects(centers, spec.intersections)] = INTERSECTION
        codes[in_rects(centers, spec.crosswalks)] = CROSSWALK
        self.codes = codes.reshape(self.shape)

        self._inv_res = 1.0 / res
        self._max_idx = np.array(self.shape) - 1
        walk = (codes == SIDEWALK) & (off_road <= spec.sidewalk_width)
        self.sidewalk_centers = centers[walk]

    def lookup(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        # the raster border is always sidewalk, so clamping out-of-range points is exact
        idx = ((p - self.origin) * self._inv_res).astype(np.intp)
        np.maximum(idx, 0, out=idx)
        np.minimum(idx, self._max_idx, out=idx)
        return self.codes[idx[:, 0], idx[:, 1]]

    def on_road(self, points) -> np.ndarray:
        return self.lookup(points) != SIDEWALK


# -- builtin maps -------------------------------------------------------------

def _junction(cx, cy, hw, arms=("e", "w", "n", "s"), walk=3.0):
    inter = (cx - hw, cy - hw, cx + hw, cy + hw)
    strips = {
        "e": (cx + hw, cy - hw, cx + hw + walk, cy + hw),
        "w": (cx - hw - walk, cy - hw, cx - hw, cy + hw),
        "n": (cx - hw, cy + hw, cx + hw, cy + hw + walk),
        "s": (cx - hw, cy - hw - walk, cx + hw, cy - hw),
    }
    return inter, [strips[a] for a in arms]


def _arc(center, radius, a0, a1, n=9):
    t = np.linspace(a0, a1, n)
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)


def training_map() -> MapSpec:
    """Straight two-way avenue crossing two four-way unsignalised junctions."""
    hw = 3.5
    roads = [RoadSegment((-30.0, 0.0), (190.0, 0.0))]
    inters, walks = [], []
    for cx in (50.0, 110.0):
        roads.append(RoadSegment((cx, -60.0), (cx, 60.0)))
        i, w = _junction(cx, 0.0, hw)
        inters.append(i)
        walks += w
    route = np.array([[0.0, -1.75], [50.0, -1.75], [110.0, -1.75], [150.0, -1.75]])
    return MapSpec("train", roads, route, inters, walks)


def heldout_three_way() -> MapSpec:
    """Three-way junctions only; the route turns right at the second one."""
    hw = 3.5
    roads = [
        RoadSegment((-30.0, 0.0), (150.0, 0.0)),
        RoadSegment((40.0, 0.0), (40.0, 60.0)),
        RoadSegment((100.0, 0.0), (100.0, -60.0)),
    ]
    i1, w1 = _junction(40.0, 0.0, hw, arms=("e", "w", "n"))
    i2, w2 = _junction(100.0, 0.0, hw, arms=("e", "w", "s"))
    r = 5.0
    xa = 100.0 - 1.75 - r
    arc = _arc((xa, -1.75 - r), r, np.pi / 2, 0.0)
    route = np.vstack([[[0.0, -1.75]], arc, [[100.0 - 1.75, -30.0]]])
    return MapSpec("heldout1", roads, route, [i1, i2], w1 + w2)


def heldout_multi_lane() -> MapSpec:
    """Four-lane roads with three four-way junctions; the route turns left at the second."""
    roads = [RoadSegment((-30.0, 0.0), (170.0, 0.0), lanes=4)]
    inters, walks = [], []
    for cx in (35.0, 80.0, 125.0):
        roads.append(RoadSegment((cx, -60.0), (cx, 60.0), lanes=4))
        i, w = _junction(cx, 0.0, 7.0)
        inters.append(i)
        walks += w
    r = 7.0
    xa = 80.0 + 1.75 - r
    arc = _arc((xa, -1.75 + r), r, -np.pi / 2, 0.0)
    route = np.vstack([[[0.0, -1.75]], arc, [[80.0 + 1.75, 45.0]]])
    return MapSpec("heldout2", roads, route, inters, walks)


BUILTIN_MAPS = {
    "train": training_map,
    "heldout1": heldout_three_way,
    "heldout2": heldout_multi_lane,
}


def builtin_map(name: str) -> MapSpec:
    try:
        return BUILTIN_MAPS[name]()
    except KeyError:
        raise ConfigError(f"unknown builtin map {name!r}; choose from {sorted(BUILTIN_MAPS)}") from None


def resolve_map(name_or_path) -> MapSpec:
    if isinstance(name_or_path, MapSpec):
        return name_or_path
    if str(name_or_path) in BUILTIN_MAPS:
        return builtin_map(str(name_or_path))
    return MapSpec.load(name_or_path)
