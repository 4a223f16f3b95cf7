"""Per-step reward vector for the safety and speed objectives."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

NEAR_COLLISION_MODES = ("literal", "proximity")
SPEED_MODES = ("literal", "corrected")


class EventKind(str, Enum):
    COLLISION = "collision"
    NEAR_COLLISION = "near_collision"
    CLEAR = "clear"


@dataclass(frozen=True)
class SafetyEvent:
    kind: EventKind
    distance: float | None = None  # gap to the nearest front crossing pedestrian

    def __post_init__(self):
        if self.kind is EventKind.NEAR_COLLISION and not (self.distance is not None and self.distance > 0):
            raise ValueError("near-collision event needs a positive pedestrian distance")

    @classmethod
    def collision(cls):
        return cls(EventKind.COLLISION)

    @classmethod
    def near(cls, d_p: float):
        return cls(EventKind.NEAR_COLLISION, float(d_p))

    @classmethod
    def clear(cls):
        return cls(EventKind.CLEAR)


@dataclass(frozen=True)
class SafetyParams:
    r_c: float = -4.0
    a_max: float = 5.0
    d0: float = 2.0
    near_collision_mode: str = "literal"

    def __post_init__(self):
        if self.a_max <= 0 or self.d0 <= 0:
            raise ValueError("a_max and d0 must be positive")
        if self.r_c >= 0:
            raise ValueError("collision penalty r_c must be negative")
        if self.near_collision_mode not in NEAR_COLLISION_MODES:
            raise ValueError(f"near_collision_mode must be one of {NEAR_COLLISION_MODES}")


@dataclass(frozen=True)
class RewardConfig:
    safety: SafetyParams = SafetyParams()
    v_ref: float = 8.0
    speed_mode: str = "literal"

    def __post_init__(self):
        if self.speed_mode not in SPEED_MODES:
            raise ValueError(f"speed_mode must be one of {SPEED_MODES}")
        if self.v_ref <= 0:
            raise ValueError("v_ref must be positive")

    def to_dict(self) -> dict:
        d = asdict(self.safety)
        d.update(v_ref=self.v_ref, speed_mode=self.speed_mode)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RewardConfig":
        d = dict(d)
        v_ref = float(d.pop("v_ref", 8.0))
        speed_mode = d.pop("speed_mode", "literal")
        return cls(SafetyParams(**d), v_ref, speed_mode)


@dataclass(frozen=True)
class RewardVector:
    safety: float
    speed: float

    def __iter__(self):
        yield self.safety
        yield self.speed

    def __add__(self, other):
        return RewardVector(self.safety + other.safety, self.speed + other.speed)

    def __mul__(self, k: float):
        return RewardVector(k * self.safety, k * self.speed)

    __rmul__ = __mul__

    def as_array(self) -> np.ndarray:
        return np.array([self.safety, self.speed])


def dynamic_range(v_ev: float, params: SafetyParams = SafetyParams()) -> float:
    """Speed-dependent look-ahead distance: the larger of braking distance and ``d0``."""
    if v_ev < 0:
        raise ValueError(f"speed must be non-negative, got {v_ev}")
    return max(v_ev * v_ev / (2.0 * params.a_max), params.d0)


def near_collision_penalty(d_p: float, d_r: float, params: SafetyParams = SafetyParams()) -> float:
    if not (0.0 < d_p <= d_r):
        raise ValueError(f"near-collision penalty needs 0 < d_p <= d_r, got d_p={d_p}, d_r={d_r}")
    if params.near_collision_mode == "literal":
        return -math.exp((d_p - d_r) / d_r)
    # grows toward -1 as the pedestrian gets closer
    return -math.exp((d_r - d_p) / d_r) / math.e


def safety_reward(event: SafetyEvent, v_ev: float, params: SafetyParams = SafetyParams()) -> float:
    if event.kind is EventKind.COLLISION:
        return params.r_c
    if event.kind is EventKind.NEAR_COLLISION:
        return near_collision_penalty(event.distance, dynamic_range(v_ev, params), params)
    return 0.0


def speed_reward(v_ev: float, v_ref: float = 8.0, mode: str = "literal") -> float:
    if v_ref <= 0:
        raise ValueError(f"v_ref must be positive, got {v_ref}")
    if v_ev <= 0.0:
        return -1.0
    if v_ev > v_ref:
        return -0.5
    lam = 1.0 / v_ref
    if mode == "literal":
        return lam * (v_ref - v_ev)
    if mode == "corrected":
        return lam * v_ev
    raise ValueError(f"unknown speed reward mode {mode!r}")


def reward_vector(event: SafetyEvent, v_ev: float, cfg: RewardConfig = RewardConfig()) -> RewardVector:
    return RewardVector(
        safety_reward(event, v_ev, cfg.safety),
        speed_reward(v_ev, cfg.v_ref, cfg.speed_mode),
    )


def scalarize(r: RewardVector) -> float:
    """Single-objective baseline reward: plain sum of the components."""
    return r.safety + r.speed
