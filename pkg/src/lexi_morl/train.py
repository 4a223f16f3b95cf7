"""Training loops for the lexicographic two-network agent and the summed-reward baseline."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import MorlAgent, SorlAgent, greedy, make_safety_net, make_sorl_net, make_speed_net
from .config import EpsilonSpec, RunConfig
from .envsim.sim import DoneReason, UrbanEnv
from .errors import TrainingError
from .morl import N_ACTIONS, Action
from .qfunc.checkpoint import Checkpoint, pack_qfunction
from .qfunc.ddqn import sync_target, train_step
from .qfunc.optim import RmsProp
from .qfunc.replay import ReplayBuffer
from .rewards import reward_vector, scalarize


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float
    end: float
    decay_steps: int

    @classmethod
    def from_spec(cls, s: EpsilonSpec) -> "EpsilonSchedule":
        return cls(s.start, s.end, s.decay_steps)

    def value(self, step: int) -> float:
        frac = min(step / self.decay_steps, 1.0)
        return self.start + (self.end - self.start) * frac


def pick_exploration(step, schedules, rng) -> list[bool]:
    """Choose one objective uniformly, then explore it with that objective's epsilon."""
    i = int(rng.integers(len(schedules)))
    flags = [False] * len(schedules)
    flags[i] = bool(rng.random() < schedules[i].value(step))
    return flags


def code_hash() -> str:
    """sha256 over the package sources, in sorted path order."""
    root = Path(__file__).resolve().parent
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(str(p.relative_to(root)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _terminal(outcome) -> bool:
    # hitting the step cap is a time limit, not a terminal state of the task
    return outcome.done and outcome.reason is not DoneReason.STEP_CAP


def _f(x):
    return None if x is None else float(x)


class _MorlLearner:
    kind = "morl"

    def __init__(self, cfg: RunConfig, seeds):
        tc, v_ref = cfg.training, cfg.reward.v_ref
        init = np.random.default_rng(seeds)
        s1, s2 = (int(v) for v in init.integers(2**31, size=2))
        self.safety = make_safety_net(cfg.observation, v_ref, tc.normalize_inputs, s1)
        self.speed = make_speed_net(v_ref, tc.normalize_inputs, s2)
        self.safety_target, self.speed_target = self.safety.copy(), self.speed.copy()
        self.opt_safety = RmsProp(self.safety.params, tc.lr_safety, tc.rms_rho, tc.rms_eps)
        self.opt_speed = RmsProp(self.speed.params, tc.lr_speed, tc.rms_rho, tc.rms_eps)
        self.buf_safety = ReplayBuffer(tc.replay_capacity)
        self.buf_speed = ReplayBuffer(tc.replay_capacity)
        self.schedules = [EpsilonSchedule.from_spec(tc.eps_safety), EpsilonSchedule.from_spec(tc.eps_speed)]
        self.agent = MorlAgent(self.safety, self.speed, cfg.thresholds.chain(), cfg.observation)
        self.tc = tc

    def observe(self, env):
        return self.agent.observe(env)

    def select(self, obs, step, rng):
        flags = pick_exploration(step, self.schedules, rng)
        action, trace = self.agent.select(obs, flags, rng)
        return action, trace.explored, [s.value(step) for s in self.schedules]

    def store(self, obs, action, rv, next_obs, terminal):
        self.buf_safety.push(obs[0], action, rv.safety, next_obs[0], terminal)
        self.buf_speed.push(obs[1], action, rv.speed, next_obs[1], terminal)

    def update(self, rng):
        tc = self.tc
        b1 = self.buf_safety.sample(tc.batch_size, rng)
        b2 = self.buf_speed.sample(tc.batch_size, rng)
        l1 = train_step(self.safety, b1, tc.gamma, self.opt_safety, self.safety_target, tc.loss)
        l2 = train_step(self.speed, b2, tc.gamma, self.opt_speed, self.speed_target, tc.loss)
        return [l1, l2]

    def sync(self):
        sync_target(self.safety, self.safety_target)
        sync_target(self.speed, self.speed_target)

    def pack(self, ckpt):
        pack_qfunction(ckpt, "safety", self.safety, self.opt_safety)
        pack_qfunction(ckpt, "safety_target", self.safety_target)
        pack_qfunction(ckpt, "speed", self.speed, self.opt_speed)
        pack_qfunction(ckpt, "speed_target", self.speed_target)
        ckpt.meta["chain"] = self.agent.chain.to_dict()


class _SorlLearner:
    kind = "sorl"

    def __init__(self, cfg: RunConfig, seeds):
        tc = cfg.training
        init = np.random.default_rng(seeds)
        self.q = make_sorl_net(cfg.observation, cfg.reward.v_ref, tc.normalize_inputs, int(init.integers(2**31)))
        self.target = self.q.copy()
        self.opt = RmsProp(self.q.params, tc.lr_sorl, tc.rms_rho, tc.rms_eps)
        self.buf = ReplayBuffer(tc.replay_capacity)
        self.schedule = EpsilonSchedule.from_spec(tc.eps_sorl)
        self.agent = SorlAgent(self.q, cfg.observation)
        self.tc = tc

    def observe(self, env):
        return self.agent.observe(env)

    def select(self, obs, step, rng):
        eps = self.schedule.value(step)
        if rng.random() < eps:
            return Action(int(rng.integers(N_ACTIONS))), 0, [eps]
        return Action(greedy(self.q.q_values(obs))), None, [eps]

    def store(self, obs, action, rv, next_obs, terminal):
        self.buf.push(obs, action, scalarize(rv), next_obs, terminal)

    def update(self, rng):
        b = self.buf.sample(self.tc.batch_size, rng)
        return [train_step(self.q, b, self.tc.gamma, self.opt, self.target, self.tc.loss)]

    def sync(self):
        sync_target(self.q, self.target)

    def pack(self, ckpt):
        pack_qfunction(ckpt, "q", self.q, self.opt)
        pack_qfunction(ckpt, "q_target", self.target)


@dataclass
class TrainingRun:
    kind: str
    config: RunConfig
    agent: object
    steps: int = 0
    episodes: list[dict] = field(default_factory=list)
    out_dir: Path | None = None
    status: str = "running"


def train(kind: str, cfg: RunConfig, out_dir=None, progress=None) -> TrainingRun:
    """Run one training job. ``kind`` is ``"morl"`` or ``"sorl"``.

    With ``out_dir`` the run writes ``manifest.json``, ``train_log.jsonl`` (one
    record per environment step), ``episodes.jsonl`` and checkpoints under
    ``checkpoints/`` (every ``checkpoint_every`` steps plus ``final.ckpt``).
    """
    tc = cfg.training
    ss = np.random.SeedSequence(tc.seed)
    init_ss, explore_ss, replay_ss, episode_ss = ss.spawn(4)
    learner = {"morl": _MorlLearner, "sorl": _SorlLearner}[kind](cfg, init_ss)
    explore_rng = np.random.default_rng(explore_ss)
    replay_rng = np.random.default_rng(replay_ss)
    episode_rng = np.random.default_rng(episode_ss)

    run = TrainingRun(kind, cfg, learner.agent, out_dir=None if out_dir is None else Path(out_dir))
    env = UrbanEnv(cfg.environment, tc.map, cfg.reward.safety)
    writer = _RunWriter(run, kind) if out_dir is not None else None
    learner.sync()

    episode = 0
    env.reset(int(episode_rng.integers(2**31)))
    obs = learner.observe(env)
    ret = np.zeros(2)
    try:
        for step in range(tc.total_steps):
            action, explored, eps = learner.select(obs, step, explore_rng)
            out = env.step(action)
            rv = reward_vector(out.event, out.speed_after, cfg.reward)
            next_obs = learner.observe(env)
            learner.store(obs, action, rv, next_obs, _terminal(out))
            ret += rv.as_array()

            losses = None
            if step + 1 > tc.warmup and step % tc.train_every == 0:
                losses = learner.update(replay_rng)
            if (step + 1) % tc.target_sync == 0:
                learner.sync()

            run.steps = step + 1
            if writer:
                writer.step({
                    "step": step, "episode": episode, "action": int(action), "explored": explored,
                    "reward": [rv.safety, rv.speed], "eps": eps,
                    "loss": None if losses is None else [_f(v) for v in losses],
                })
            if out.done:
                rec = {"episode": episode, "end_step": step, "steps": env.state.steps,
                       "reason": out.reason.value, "distance": env.state.distance, "return": ret.tolist()}
                run.episodes.append(rec)
                if writer:
                    writer.episode(rec)
                if progress:
                    progress(run, rec)
                episode += 1
                ret[:] = 0.0
                env.reset(int(episode_rng.integers(2**31)))
                next_obs = learner.observe(env)
            obs = next_obs
            if writer and run.steps % tc.checkpoint_every == 0 and run.steps < tc.total_steps:
                writer.checkpoint(learner, f"step_{run.steps:08d}.ckpt")
    except TrainingError as exc:
        run.status = "diverged"
        if writer:
            writer.close(status="diverged", diagnostics={**exc.diagnostics, "step": run.steps})
        raise
    run.status = "completed"
    if writer:
        writer.checkpoint(learner, "final.ckpt")
        writer.close(status="completed")
    return run


def train_morl(cfg: RunConfig, out_dir=None, progress=None) -> TrainingRun:
    return train("morl", cfg, out_dir, progress)


def train_sorl(cfg: RunConfig, out_dir=None, progress=None) -> TrainingRun:
    return train("sorl", cfg, out_dir, progress)


class _RunWriter:
    def __init__(self, run: TrainingRun, kind: str):
        self.run = run
        d = run.out_dir
        (d / "checkpoints").mkdir(parents=True, exist_ok=True)
        self.log = open(d / "train_log.jsonl", "w")
        self.eps_log = open(d / "episodes.jsonl", "w")
        self.started = time.time()
        self.manifest = {
            "kind": kind,
            "package": __package__,
            "code_hash": code_hash(),
            "config": run.config.to_dict(),
            "seeds": {"training": run.config.training.seed, "environment": run.config.environment.seed},
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(self.started)),
            "status": "running",
            "checkpoints": [],
        }
        self._write_manifest()

    def _write_manifest(self):
        (self.run.out_dir / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))

    def step(self, rec):
        self.log.write(json.dumps(rec, separators=(",", ":")) + "\n")

    def episode(self, rec):
        self.eps_log.write(json.dumps(rec, separators=(",", ":")) + "\n")

    def checkpoint(self, learner, name):
        ckpt = Checkpoint(learner.kind, self.run.steps, {"config": self.run.config.to_dict()})
        learner.pack(ckpt)
        ckpt.save(self.run.out_dir / "checkpoints" / name)
        self.manifest["checkpoints"].append(name)

    def close(self, status, diagnostics=None):
        self.log.close()
        self.eps_log.close()
        self.manifest.update(
            status=status,
            steps=self.run.steps,
            episodes=len(self.run.episodes),
            finished_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            wall_seconds=round(time.time() - self.started, 3),
        )
        if diagnostics:
            self.manifest["diagnostics"] = diagnostics
        self._write_manifest()
