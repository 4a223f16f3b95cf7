"""Seeded evaluation episodes and the nine per-episode driving metrics.

Metric definitions
------------------
collision_free         no collision happened
success                the goal was reached before the step cap (a collision ends the episode first)
distance_m             arc length driven along the route
steps                  environment steps executed
avg_speed_mps          distance / (steps * dt)
speed_violated         some step ended with speed > v_ref (1e-9 slack absorbs float drift at exactly v_ref)
crossing_duration_pct  100 * steps with the ego footprint overlapping a junction / steps
stops                  maximal runs of Brake actions that bring a moving vehicle to v = 0
closest_ped_distances  per step, the gap to the nearest front in-lane pedestrian on the road, when < 2 m

Per-episode values come from an online accumulator; ``metrics_from_trace``
recomputes them from a stored step trace by a separate code path.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .envsim.maps import resolve_map
from .envsim.sim import DoneReason, EnvConfig, UrbanEnv
from .morl import Action
from .rewards import RewardConfig, reward_vector

CLOSE_PED_M = 2.0
_SPEED_SLACK = 1e-9


@dataclass
class EpisodeMetrics:
    collision_free: bool
    success: bool
    distance_m: float
    steps: int
    avg_speed_mps: float
    speed_violated: bool
    crossing_duration_pct: float
    stops: int
    closest_ped_distances: list[float] = field(default_factory=list)
    reason: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class EpisodeAccumulator:
    """Streams ``StepOutcome``s into an ``EpisodeMetrics``."""

    def __init__(self, dt: float, v_ref: float):
        self.dt, self.v_ref = dt, v_ref
        self.steps = 0
        self.distance = 0.0
        self.violated = False
        self.in_junction = 0
        self.stops = 0
        self.close: list[float] = []
        self.reason = None

    def update(self, out):
        self.steps += 1
        self.distance += out.distance
        self.violated |= out.speed_after > self.v_ref + _SPEED_SLACK
        self.in_junction += bool(out.in_intersection)
        if out.action == Action.BRAKE and out.speed_after == 0.0 and out.speed_before > 0.0:
            self.stops += 1
        if out.front_ped_distance is not None and out.front_ped_distance < CLOSE_PED_M:
            self.close.append(float(out.front_ped_distance))
        if out.done:
            self.reason = out.reason

    def result(self) -> EpisodeMetrics:
        n = self.steps
        return EpisodeMetrics(
            collision_free=self.reason is not DoneReason.COLLISION,
            success=self.reason is DoneReason.GOAL,
            distance_m=self.distance,
            steps=n,
            avg_speed_mps=self.distance / (n * self.dt) if n else 0.0,
            speed_violated=bool(self.violated),
            crossing_duration_pct=100.0 * self.in_junction / n if n else 0.0,
            stops=self.stops,
            closest_ped_distances=self.close,
            reason=None if self.reason is None else self.reason.value,
        )


def trace_record(step: int, out, selection=None, reward=None) -> dict:
    return {
        "step": step,
        "action": int(out.action),
        "speed_before": out.speed_before,
        "speed_after": out.speed_after,
        "distance": out.distance,
        "in_intersection": bool(out.in_intersection),
        "front_ped_distance": out.front_ped_distance,
        "event": out.event.kind.value,
        "event_distance": out.event.distance,
        "done": out.done,
        "reason": None if out.reason is None else out.reason.value,
        "reward": None if reward is None else [reward.safety, reward.speed],
        "selection": selection,
    }


def metrics_from_trace(records, dt: float, v_ref: float) -> EpisodeMetrics:
    """Recompute episode metrics from trace records (vectorised, independent of the accumulator)."""
    recs = list(records)
    n = len(recs)
    if n == 0:
        return EpisodeMetrics(True, False, 0.0, 0, 0.0, False, 0.0, 0, [], None)
    act = np.array([r["action"] for r in recs])
    v0 = np.array([r["speed_before"] for r in recs])
    v1 = np.array([r["speed_after"] for r in recs])
    # cumsum adds left to right like the accumulator, so the totals agree bit-for-bit
    dist = float(np.cumsum([r["distance"] for r in recs])[-1])
    junction = np.array([r["in_intersection"] for r in recs])
    reason = recs[-1]["reason"]

    # stops: maximal runs of consecutive Brake steps that end stationary after some motion
    braking = np.concatenate([[False], act == int(Action.BRAKE), [False]])
    edges = np.flatnonzero(np.diff(braking.astype(int)))
    starts, ends = edges[::2], edges[1::2]
    stops = sum(1 for s, e in zip(starts, ends) if v1[e - 1] == 0.0 and np.any(v0[s:e] > 0.0))

    fronts = [r["front_ped_distance"] for r in recs]
    close = [float(d) for d in fronts if d is not None and d < CLOSE_PED_M]
    return EpisodeMetrics(
        collision_free=reason != DoneReason.COLLISION.value,
        success=reason == DoneReason.GOAL.value,
        distance_m=dist,
        steps=n,
        avg_speed_mps=dist / (n * dt),
        speed_violated=bool(np.any(v1 > v_ref + _SPEED_SLACK)),
        crossing_duration_pct=100.0 * int(junction.sum()) / n,
        stops=int(stops),
        closest_ped_distances=close,
        reason=reason,
    )


def read_trace(path) -> list[dict]:
    text = Path(path).read_text()
    return [json.loads(line) for line in text.splitlines() if line.strip()]


# -- aggregation ------------------------------------------------------------------

# key, label, unit, direction (+1 higher is better, -1 lower is better, 0 no preference)
METRIC_ROWS = (
    ("collision_free", "Collision Free", "%", +1),
    ("success", "Success Rate", "%", +1),
    ("distance", "Distance Travelled", "m", +1),
    ("steps", "Average Steps", "steps", 0),
    ("avg_speed", "Average Speed", "m/s", +1),
    ("speed_violation", "Speed Violation", "%", -1),
    ("crossing_duration", "Crossing Duration", "%", -1),
    ("stops", "Average Stops", "count", -1),
    ("closest_ped_distance", "Closest Pedestrian Distance", "m", +1),
)
METRIC_KEYS = tuple(r[0] for r in METRIC_ROWS)


def _mean_hw(values, scale=1.0):
    v = [float(x) for x in values]
    n = len(v)
    if n == 0:
        return None, None
    mean = math.fsum(v) / n
    if n == 1:
        return mean * scale, 0.0
    var = math.fsum((x - mean) ** 2 for x in v) / (n - 1)
    return mean * scale, 1.96 * math.sqrt(var / n) * scale


@dataclass
class AggregateReport:
    """Means (percentages for episode-level booleans) with 95% normal half-widths."""

    n: int
    values: dict[str, float | None]
    half_widths: dict[str, float | None]
    label: str = ""
    episodes: list[EpisodeMetrics] = field(default_factory=list, repr=False)
    notes: list[str] = field(default_factory=list)

    @classmethod
    def from_episodes(cls, episodes, label: str = "") -> "AggregateReport":
        eps = list(episodes)
        cols = {
            "collision_free": ([e.collision_free for e in eps], 100.0),
            "success": ([e.success for e in eps], 100.0),
            "distance": ([e.distance_m for e in eps], 1.0),
            "steps": ([e.steps for e in eps], 1.0),
            "avg_speed": ([e.avg_speed_mps for e in eps], 1.0),
            "speed_violation": ([e.speed_violated for e in eps], 100.0),
            "crossing_duration": ([e.crossing_duration_pct for e in eps], 1.0),
            "stops": ([e.stops for e in eps], 1.0),
            # pooled over every close-approach step of every episode
            "closest_ped_distance": (sorted(d for e in eps for d in e.closest_ped_distances), 1.0),
        }
        values, hws = {}, {}
        for key, (vals, scale) in cols.items():
            values[key], hws[key] = _mean_hw(sorted(vals), scale)
        notes = ["Average Steps includes episodes that hit the step cap."]
        if values["closest_ped_distance"] is None:
            notes.append("No front pedestrian came within 2 m; Closest Pedestrian Distance is empty.")
        return cls(len(eps), values, hws, label, eps, notes)

    def rows(self):
        for key, label, unit, _ in METRIC_ROWS:
            yield key, label, unit, self.values.get(key), self.half_widths.get(key)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "metrics": [{"key": k, "label": lab, "unit": u, "value": v, "half_width": h}
                        for k, lab, u, v, h in self.rows()],
            "notes": self.notes,
            "episodes": [e.to_dict() for e in self.episodes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateReport":
        eps = [EpisodeMetrics(**e) for e in d.get("episodes", [])]
        values = {m["key"]: m["value"] for m in d["metrics"]}
        hws = {m["key"]: m["half_width"] for m in d["metrics"]}
        return cls(d["n"], values, hws, d.get("label", ""), eps, d.get("notes", []))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "label", "unit", "value", "half_width", "n"])
        for k, lab, u, v, h in self.rows():
            w.writerow([k, lab, u, "" if v is None else repr(v), "" if h is None else repr(h), self.n])
        return buf.getvalue()

    def save(self, path):
        path = Path(path)
        path.write_text(self.to_csv() if path.suffix == ".csv" else self.to_json())


def _fmt(v, h):
    if v is None:
        return "n/a"
    return f"{v:.2f} ± {h:.2f}"


def compare(a: AggregateReport, b: AggregateReport):
    """Row-by-row comparison in the table's order; ``better`` is the label of the winner or ``tie``/``-``."""
    rows = []
    for key, label, unit, direction in METRIC_ROWS:
        va, vb = a.values.get(key), b.values.get(key)
        if direction == 0 or va is None or vb is None:
            better = "-"
        elif va == vb:
            better = "tie"
        else:
            better = a.label if (va > vb) == (direction > 0) else b.label
        rows.append({"key": key, "label": label, "unit": unit, "a": va, "a_hw": a.half_widths.get(key),
                     "b": vb, "b_hw": b.half_widths.get(key), "better": better})
    return rows


def compare_text(a: AggregateReport, b: AggregateReport) -> str:
    rows = compare(a, b)
    head = ["Metric", f"{a.label or 'A'} (N={a.n})", f"{b.label or 'B'} (N={b.n})", "Better"]
    body = [[f"{r['label']} [{r['unit']}]", _fmt(r["a"], r["a_hw"]), _fmt(r["b"], r["b_hw"]), r["better"]]
            for r in rows]
    widths = [max(len(str(x[i])) for x in [head] + body) for i in range(4)]
    line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
    return "\n".join([line(head), line(["-" * w for w in widths])] + [line(r) for r in body]) + "\n"


def compare_csv(a: AggregateReport, b: AggregateReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "label", "unit", "a", "a_half_width", "b", "b_half_width", "better"])
    for r in compare(a, b):
        w.writerow([r["key"], r["label"], r["unit"], r["a"], r["a_hw"], r["b"], r["b_hw"], r["better"]])
    return buf.getvalue()


# -- running episodes -------------------------------------------------------------

def episode_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(2**31, size=n)]


def run_episode(policy, env: UrbanEnv, seed: int, trace_path=None,
                reward_cfg: RewardConfig = RewardConfig()) -> EpisodeMetrics:
    """One greedy episode; optionally writes a JSON-lines step trace."""
    env.reset(seed)
    pol = policy.for_episode(seed)
    acc = EpisodeAccumulator(env.config.dt, env.config.v_ref)
    fh = open(trace_path, "w") if trace_path is not None else None
    try:
        step = 0
        while not env.state.done:
            action, selection = pol.act(env)
            out = env.step(action)
            acc.update(out)
            if fh:
                rv = reward_vector(out.event, out.speed_after, reward_cfg)
                fh.write(json.dumps(trace_record(step, out, selection, rv), separators=(",", ":")) + "\n")
            step += 1
    finally:
        if fh:
            fh.close()
    return acc.result()


def default_threads() -> int:
    raw = os.environ.get("LEXI_MORL_THREADS")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def run_eval(policy, env_config: EnvConfig = EnvConfig(), map_spec="train", n_episodes: int = 100,
             seed: int = 0, reward_cfg: RewardConfig = RewardConfig(), trace_dir=None, threads=None,
             label: str = "") -> AggregateReport:
    """Evaluate ``policy`` greedily on ``n_episodes`` seeded episodes of one map."""
    spec = resolve_map(map_spec)
    seeds = episode_seeds(seed, n_episodes)
    threads = default_threads() if threads is None else max(1, threads)
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)

    def one(k):
        env = UrbanEnv(env_config, spec, reward_cfg.safety)
        path = None if trace_dir is None else Path(trace_dir) / f"{spec.name}_ep{k:04d}.jsonl"
        return run_episode(policy, env, seeds[k], path, reward_cfg)

    if threads > 1 and n_episodes > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            episodes = list(pool.map(one, range(n_episodes)))
    else:
        episodes = [one(k) for k in range(n_episodes)]
    return AggregateReport.from_episodes(episodes, label or spec.name)
