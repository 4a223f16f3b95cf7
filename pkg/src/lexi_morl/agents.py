"""Policies: the two-network lexicographic agent, the single-network baseline and scripted drivers.

Every policy answers ``act(env) -> (action, trace)`` where ``trace`` is a
JSON-able dict (or ``None``) describing how the action was chosen.
"""
from __future__ import annotations

import numpy as np

from .morl import N_ACTIONS, Action, ObjectiveChain, tlo_select
from .observe import GridEncoder, GridSpec, encode_ego
from .qfunc.checkpoint import Checkpoint, unpack_qfunction
from .qfunc.nets import CnnQ, MlpQ
from .errors import CheckpointError


def grid_scale(v_ref: float) -> list[float]:
    """Per-layer input scaling: occupancy, closing speed, heading (deg), semantic code."""
    return [1.0, 1.0 / v_ref, 1.0 / 180.0, 1.0 / 3.0]


def make_safety_net(spec: GridSpec, v_ref: float, normalize=True, seed=0) -> CnnQ:
    return CnnQ(spec.shape, input_scale=grid_scale(v_ref) if normalize else None, seed=seed)


def make_speed_net(v_ref: float, normalize=True, seed=0) -> MlpQ:
    return MlpQ((1, 32, 32, N_ACTIONS), input_scale=[1.0 / v_ref] if normalize else None, seed=seed)


def make_sorl_net(spec: GridSpec, v_ref: float, normalize=True, seed=0) -> CnnQ:
    return CnnQ(spec.shape, extra_inputs=1, seed=seed,
                input_scale=grid_scale(v_ref) if normalize else None,
                extra_scale=[1.0 / v_ref] if normalize else None)


def greedy(q) -> int:
    """Argmax with ties to the lowest action index."""
    return int(np.argmax(q))


class MorlAgent:
    """Safety CNN on the grid, speed MLP on ego speed, combined by thresholded lexicographic selection."""

    kind = "morl"

    def __init__(self, safety_q, speed_q, chain: ObjectiveChain, grid: GridSpec = GridSpec()):
        if chain.names != ["safety", "speed"]:
            raise ValueError("MORL agent expects the chain [safety, speed]")
        self.safety_q, self.speed_q, self.chain = safety_q, speed_q, chain
        self.encoder = GridEncoder(grid)

    def observe(self, env):
        return self.encoder.encode(env), encode_ego(env)

    def snapshot(self, obs) -> np.ndarray:
        grid, ego = obs
        return np.stack([self.safety_q.q_values(grid), self.speed_q.q_values(ego)])

    def select(self, obs, explore=None, rng=None):
        return tlo_select(self.snapshot(obs), self.chain, explore, rng)

    def for_episode(self, seed):
        return self

    def act(self, env):
        action, trace = self.select(self.observe(env))
        return action, trace.to_dict()


class SorlAgent:
    """One CNN over the grid with ego speed joined at the first dense layer; greedy on the summed reward."""

    kind = "sorl"

    def __init__(self, q, grid: GridSpec = GridSpec()):
        self.q = q
        self.encoder = GridEncoder(grid)

    def observe(self, env):
        return self.encoder.encode(env), encode_ego(env)

    def for_episode(self, seed):
        return self

    def act(self, env):
        q = self.q.q_values(self.observe(env))
        return Action(greedy(q)), {"q": [[float(v) for v in q]]}


class ScriptedPolicy:
    """Constant-action driver (``brake``, ``accelerate``, ``decelerate``, ``maintain``) or ``random``."""

    kind = "scripted"
    NAMES = ("accelerate", "decelerate", "brake", "maintain", "random")

    def __init__(self, name: str, seed: int = 0):
        if name not in self.NAMES:
            raise ValueError(f"unknown scripted policy {name!r}; choose from {self.NAMES}")
        self.name = name
        self.rng = np.random.default_rng(seed)

    def for_episode(self, seed):
        """Stateless copy for one episode; the random driver is reseeded per episode."""
        return ScriptedPolicy(self.name, seed)

    def act(self, env):
        if self.name == "random":
            return Action(int(self.rng.integers(N_ACTIONS))), None
        return Action[self.name.upper()], None


def load_agent(path):
    """Rebuild the greedy agent stored in a training checkpoint."""
    ckpt = Checkpoint.load(path)
    grid = GridSpec(**ckpt.meta["config"]["observation"]) if "config" in ckpt.meta else GridSpec()
    if ckpt.kind == "morl":
        safety, _ = unpack_qfunction(ckpt, "safety")
        speed, _ = unpack_qfunction(ckpt, "speed")
        return MorlAgent(safety, speed, ObjectiveChain.from_dict(ckpt.meta["chain"]), grid)
    if ckpt.kind == "sorl":
        q, _ = unpack_qfunction(ckpt, "q")
        return SorlAgent(q, grid)
    raise CheckpointError(f"checkpoint kind {ckpt.kind!r} holds no agent")
