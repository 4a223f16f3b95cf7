"""Run configuration: one JSON file with environment/observation/reward/thresholds/training sections."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .envsim.sim import EnvConfig
from .errors import ConfigError
from .morl import THRESHOLD_MODES, ObjectiveChain
from .observe import GridSpec
from .qfunc.ddqn import LOSSES
from .rewards import RewardConfig


@dataclass(frozen=True)
class EpsilonSpec:
    start: float
    end: float
    decay_steps: int

    def __post_init__(self):
        if not (self.start >= self.end >= 0.0) or self.start > 1.0:
            raise ConfigError(f"epsilon schedule needs 1 >= start >= end >= 0, got {self}")
        if self.decay_steps <= 0:
            raise ConfigError("epsilon decay_steps must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters. Defaults are the full-scale values; see ``desk()``."""

    total_steps: int = 500_000
    gamma: float = 0.99
    batch_size: int = 32
    replay_capacity: int = 10_000
    warmup: int = 1_000
    train_every: int = 1
    target_sync: int = 1_000
    lr_safety: float = 0.00025
    lr_speed: float = 0.0025
    lr_sorl: float = 0.00025
    rms_rho: float = 0.95
    rms_eps: float = 1e-6
    loss: str = "mse"
    eps_safety: EpsilonSpec = EpsilonSpec(0.9, 0.3, 400_000)
    eps_speed: EpsilonSpec = EpsilonSpec(0.8, 0.1, 400_000)
    eps_sorl: EpsilonSpec = EpsilonSpec(0.85, 0.2, 400_000)
    checkpoint_every: int = 50_000
    map: str = "train"
    seed: int = 0
    normalize_inputs: bool = True

    def __post_init__(self):
        for name in ("total_steps", "batch_size", "replay_capacity", "train_every", "target_sync",
                     "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"training.{name} must be positive")
        if self.warmup < 0:
            raise ConfigError("training.warmup must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("training.gamma must lie in [0, 1]")
        for name in ("lr_safety", "lr_speed", "lr_sorl"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"training.{name} must be positive")
        if self.loss not in LOSSES:
            raise ConfigError(f"training.loss must be one of {LOSSES}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Desk scale: 50k steps and every epsilon decay shrunk by the same factor of ten."""
        base = cls(
            total_steps=50_000,
            eps_safety=EpsilonSpec(0.9, 0.3, 40_000),
            eps_speed=EpsilonSpec(0.8, 0.1, 40_000),
            eps_sorl=EpsilonSpec(0.85, 0.2, 40_000),
            checkpoint_every=10_000,
        )
        return replace(base, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        _reject_unknown("training", d, cls)
        for k in ("eps_safety", "eps_speed", "eps_sorl"):
            if k in d and not isinstance(d[k], EpsilonSpec):
                try:
                    d[k] = EpsilonSpec(**d[k])
                except TypeError as exc:
                    raise ConfigError(f"training.{k}: {exc}") from exc
        return cls(**d)


@dataclass(frozen=True)
class ThresholdConfig:
    safety: float = 0.95
    speed: float = 1.0
    mode: str = "literal"

    def __post_init__(self):
        if self.mode not in THRESHOLD_MODES:
            raise ConfigError(f"thresholds.mode must be one of {THRESHOLD_MODES}")
        for name in ("safety", "speed"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigError(f"thresholds.{name} must lie in (0, 1]")

    def chain(self) -> ObjectiveChain:
        return ObjectiveChain.from_thresholds({"safety": self.safety, "speed": self.speed}, self.mode)


@dataclass(frozen=True)
class RunConfig:
    environment: EnvConfig = EnvConfig()
    observation: GridSpec = GridSpec()
    reward: RewardConfig = RewardConfig()
    thresholds: ThresholdConfig = ThresholdConfig()
    training: TrainConfig = field(default_factory=TrainConfig.desk)

    def to_dict(self) -> dict:
        return {
            "environment": self.environment.to_dict(),
            "observation": self.observation.to_dict(),
            "reward": self.reward.to_dict(),
            "thresholds": asdict(self.thresholds),
            "training": self.training.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(d) - {"environment", "observation", "reward", "thresholds", "training"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        try:
            obs = dict(d.get("observation", {}))
            _reject_unknown("observation", obs, GridSpec)
            thr = dict(d.get("thresholds", {}))
            _reject_unknown("thresholds", thr, ThresholdConfig)
            # missing training fields fall back to desk scale, not full scale
            train = TrainConfig.from_dict({**TrainConfig.desk().to_dict(), **d.get("training", {})})
            return cls(
                environment=EnvConfig.from_dict(d.get("environment", {})),
                observation=GridSpec(**obs),
                reward=RewardConfig.from_dict(d.get("reward", {})),
                thresholds=ThresholdConfig(**thr),
                training=train,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc

    def with_overrides(self, assignments) -> "RunConfig":
        """Apply ``section.field=value`` strings (values parsed as JSON when possible)."""
        d = self.to_dict()
        for item in assignments:
            key, sep, raw = item.partition("=")
            if not sep or "." not in key:
                raise ConfigError(f"override {item!r} must look like section.field=value")
            section, name = key.split(".", 1)
            if section not in d:
                raise ConfigError(f"unknown config section {section!r}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            d[section][name] = value
        return RunConfig.from_dict(d)


def _reject_unknown(section, d, cls):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {section} fields: {sorted(unknown)}")
