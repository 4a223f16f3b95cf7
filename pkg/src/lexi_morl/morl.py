"""Thresholded lexicographic action selection.

Two selection mechanisms live here:

* ``tlq_greedy`` clamps each objective's Q-values at a fixed level and picks the
  action that is lexicographically best under the recursive ``superior``
  comparator.
* ``tlo_select`` filters the action set objective by objective, keeping actions
  whose value is within a percentage ``tau`` of that objective's best among the
  survivors of the previous objective. This is what the driving agent uses.

Ties are always broken toward the lowest action index.
"""
from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

MAX_OBJECTIVES = 8
THRESHOLD_MODES = ("literal", "slack")

# Comparison used by the percentage filter. Only the mutation hook in
# ``lexi_morl.verify`` swaps this out.
_threshold_cmp = operator.ge


class Action(IntEnum):
    """Longitudinal high-level actions; the value is the Q-vector index."""

    ACCELERATE = 0
    DECELERATE = 1
    BRAKE = 2
    MAINTAIN = 3

    @property
    def acceleration(self) -> float:
        """Commanded longitudinal acceleration in m/s^2."""
        return float(ACCELERATIONS[self.value])


ACCELERATIONS = np.array([1.0, -1.0, -5.0, 0.0])
N_ACTIONS = len(Action)
ALL_ACTIONS = tuple(range(N_ACTIONS))


@dataclass(frozen=True)
class Objective:
    name: str
    threshold: float = 1.0
    clamp: float | None = None

    def __post_init__(self):
        if not (0.0 < self.threshold <= 1.0):
            raise ValueError(f"threshold for {self.name!r} must be in (0, 1], got {self.threshold}")
        if self.clamp is not None and math.isnan(self.clamp):
            raise ValueError(f"clamp for {self.name!r} is NaN")

    @property
    def clamp_level(self) -> float:
        return math.inf if self.clamp is None else float(self.clamp)


@dataclass(frozen=True)
class ObjectiveChain:
    """Objectives in priority order (index 0 is the most important)."""

    objectives: tuple[Objective, ...]
    threshold_mode: str = "literal"

    def __post_init__(self):
        objs = tuple(self.objectives)
        if not objs:
            raise ValueError("objective chain must not be empty")
        if len(objs) > MAX_OBJECTIVES:
            raise ValueError(f"at most {MAX_OBJECTIVES} objectives supported")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        object.__setattr__(self, "objectives", objs)

    @classmethod
    def from_thresholds(cls, thresholds: dict[str, float] | Sequence[tuple[str, float]],
                        mode: str = "literal", clamps: Sequence[float | None] | None = None):
        items = list(thresholds.items()) if isinstance(thresholds, dict) else list(thresholds)
        clamps = clamps or [None] * len(items)
        return cls(tuple(Objective(n, float(t), c) for (n, t), c in zip(items, clamps)), mode)

    def __len__(self):
        return len(self.objectives)

    @property
    def names(self) -> list[str]:
        return [o.name for o in self.objectives]

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([o.threshold for o in self.objectives])

    @property
    def clamp_levels(self) -> np.ndarray:
        return np.array([o.clamp_level for o in self.objectives])

    def to_dict(self) -> dict:
        return {
            "mode": self.threshold_mode,
            "objectives": [
                {"name": o.name, "threshold": o.threshold, "clamp": o.clamp} for o in self.objectives
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectiveChain":
        objs = tuple(Objective(o["name"], float(o["threshold"]), o.get("clamp")) for o in d["objectives"])
        return cls(objs, d.get("mode", "literal"))


def _check_snapshot(values, n_objectives=None) -> np.ndarray:
    q = np.asarray(values, dtype=float)
    if q.ndim != 2 or q.shape[1] == 0:
        raise ValueError(f"Q snapshot must be [objectives x actions], got shape {q.shape}")
    if n_objectives is not None and q.shape[0] != n_objectives:
        raise ValueError(f"snapshot has {q.shape[0]} rows but chain has {n_objectives} objectives")
    if not np.all(np.isfinite(q)):
        raise ValueError("Q snapshot contains non-finite values")
    return q


def clamp_thresholded(q: float, clamp_level: float) -> float:
    """Clamp a Q-value from above: ``min(q, clamp_level)``.

    ``clamp_level`` may be ``+inf`` for an unconstrained objective; NaN or a
    non-finite ``q`` is rejected.
    """
    if not math.isfinite(q) or math.isnan(clamp_level) or clamp_level == -math.inf:
        raise ValueError(f"clamp_thresholded needs finite inputs, got q={q}, clamp={clamp_level}")
    return min(q, clamp_level)


def superior(tq_a: Sequence[float], tq_b: Sequence[float], i: int) -> bool:
    """Is clamped vector ``tq_a`` superior to ``tq_b`` from objective ``i`` on?

    ``i`` is 1-based. Equality all the way to the last objective counts as
    superior, so the relation is reflexive.
    """
    n = len(tq_a)
    if n == 0 or len(tq_b) != n:
        raise ValueError(f"superior needs equal-length non-empty vectors, got {len(tq_a)} and {len(tq_b)}")
    if not 1 <= i <= n:
        raise ValueError(f"level i={i} outside 1..{n}")
    a, b = tq_a[i - 1], tq_b[i - 1]
    if a > b:
        return True
    if a == b:
        if i == n:
            return True
        return superior(tq_a, tq_b, i + 1)
    return False


def clamp_snapshot(values, chain: ObjectiveChain) -> np.ndarray:
    q = _check_snapshot(values, len(chain))
    return np.minimum(q, chain.clamp_levels[:, None])


def tlq_greedy(values, chain: ObjectiveChain) -> Action:
    """Greedy action under clamped lexicographic ordering.

    Returns the lowest-index action that no other action strictly beats.
    """
    tq = clamp_snapshot(values, chain)
    cols = [tuple(tq[:, a]) for a in range(tq.shape[1])]
    for a, col in enumerate(cols):
        beaten = any(
            superior(other, col, 1) and not superior(col, other, 1)
            for b, other in enumerate(cols)
            if b != a
        )
        if not beaten:
            return Action(a)
    raise AssertionError("lexicographic order has no maximal element")  # unreachable


def _argmax(q_row, candidates) -> int:
    best = candidates[0]
    for a in candidates[1:]:
        if q_row[a] > q_row[best]:
            best = a
    return best


def acceptable_actions(prev: Sequence[int], q_row: Sequence[float], tau: float,
                       mode: str = "literal") -> tuple[int, ...]:
    """Actions of ``prev`` whose value is acceptable relative to the best in ``prev``.

    literal: keep ``q >= tau * max`` (plus the argmax, so the result is never empty).
    slack:   keep ``q >= max - (1 - tau) * |max|``, which behaves sensibly when
             the best value is negative.
    """
    prev = tuple(sorted(set(int(a) for a in prev)))
    if not prev:
        raise ValueError("previous acceptable set is empty")
    best = _argmax(q_row, prev)
    qmax = q_row[best]
    if mode == "literal":
        bar = qmax * tau
    elif mode == "slack":
        bar = qmax - (1.0 - tau) * abs(qmax)
    else:
        raise ValueError(f"unknown threshold mode {mode!r}")
    return tuple(a for a in prev if a == best or _threshold_cmp(q_row[a], bar))


@dataclass
class SelectionTrace:
    """Audit record of one ``tlo_select`` call.

    ``sets[0]`` is the full action set; ``sets[i]`` is the acceptable set after
    objective ``i - 1``. When an objective was explored the trace stops there.
    """

    q: list[list[float]]
    sets: list[tuple[int, ...]] = field(default_factory=list)
    explored: int | None = None
    action: int = -1

    def to_dict(self) -> dict:
        return {
            "q": [[float(v) for v in row] for row in self.q],
            "sets": [list(s) for s in self.sets],
            "explored": self.explored,
            "action": self.action,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionTrace":
        return cls(q=d["q"], sets=[tuple(s) for s in d["sets"]], explored=d.get("explored"),
                   action=int(d["action"]))

    def is_nested(self) -> bool:
        return all(set(b) <= set(a) and b for a, b in zip(self.sets, self.sets[1:]))


def tlo_select(values, chain: ObjectiveChain, explore: Sequence[bool] | None = None,
               rng: np.random.Generator | None = None) -> tuple[Action, SelectionTrace]:
    """Percentage-threshold lexicographic selection with per-objective exploration."""
    q = _check_snapshot(values, len(chain))
    n = len(chain)
    explore = [False] * n if explore is None else list(explore)
    if len(explore) != n:
        raise ValueError(f"explore flags length {len(explore)} != {n} objectives")
    if sum(bool(e) for e in explore) > 1:
        raise ValueError("at most one objective may be explored per selection")

    rows = [list(map(float, r)) for r in q]
    trace = SelectionTrace(q=rows, sets=[tuple(range(q.shape[1]))])
    for i, obj in enumerate(chain.objectives):
        prev = trace.sets[-1]
        trace.sets.append(acceptable_actions(prev, rows[i], obj.threshold, chain.threshold_mode))
        if explore[i]:
            if rng is None:
                raise ValueError("exploration requested without a random source")
            trace.explored = i
            trace.action = int(prev[rng.integers(len(prev))])
            return Action(trace.action), trace
    trace.action = _argmax(rows[-1], trace.sets[-1])
    return Action(trace.action), trace
