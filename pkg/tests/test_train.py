import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lexi_morl.config import RunConfig, TrainConfig
from lexi_morl.envsim.sim import UrbanEnv
from lexi_morl.errors import TrainingError
from lexi_morl.morl import Action
from lexi_morl.qfunc.checkpoint import Checkpoint
from lexi_morl.rewards import RewardVector
from lexi_morl.train import EpsilonSchedule, _MorlLearner, pick_exploration, train


def small_config(**training):
    base = dict(total_steps=300, warmup=64, train_every=8, target_sync=100, checkpoint_every=150, seed=7)
    base.update(training)
    return RunConfig(training=TrainConfig.desk(**base))


def test_epsilon_schedule_closed_form():
    s = EpsilonSchedule(0.9, 0.3, 40_000)
    assert s.value(0) == 0.9
    assert s.value(20_000) == pytest.approx(0.6)
    assert s.value(40_000) == pytest.approx(0.3)
    assert s.value(10**6) == pytest.approx(0.3)


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_epsilon_schedule_monotone(a, b):
    s = EpsilonSchedule(0.85, 0.2, 40_000)
    lo, hi = sorted((a, b))
    assert 0.2 - 1e-12 <= s.value(hi) <= s.value(lo) <= 0.85


def test_pick_exploration_extremes():
    rng = np.random.default_rng(0)
    zero = [EpsilonSchedule(0.0, 0.0, 1)] * 2
    one = [EpsilonSchedule(1.0, 1.0, 1)] * 2
    for _ in range(200):
        assert pick_exploration(0, zero, rng) == [False, False]
        flags = pick_exploration(0, one, rng)
        assert sum(flags) == 1


def test_pick_exploration_rate():
    # one objective drawn uniformly, then its own epsilon applies: (0.6 + 0.3) / 2
    rng = np.random.default_rng(1)
    sch = [EpsilonSchedule(0.6, 0.6, 1), EpsilonSchedule(0.3, 0.3, 1)]
    n = 200_000
    hits = np.array([pick_exploration(0, sch, rng) for _ in range(n)])
    assert hits.any(axis=1).mean() == pytest.approx(0.45, abs=0.01)
    assert not (hits[:, 0] & hits[:, 1]).any()


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    cfg = small_config(total_steps=500)
    return train("morl", cfg, out), out


def test_smoke_artifacts(smoke_run):
    run, out = smoke_run
    log = (out / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 500 and run.steps == 500
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "completed" and manifest["steps"] == 500
    assert manifest["checkpoints"][-1] == "final.ckpt"
    assert len(manifest["code_hash"]) == 64
    assert Checkpoint.load(out / "checkpoints" / "final.ckpt").step == 500
    eps = (out / "episodes.jsonl").read_text().splitlines()
    assert len(eps) == len(run.episodes)


def test_logged_epsilons_and_losses(smoke_run):
    _, out = smoke_run
    cfg = small_config()
    sch = [EpsilonSchedule.from_spec(cfg.training.eps_safety), EpsilonSchedule.from_spec(cfg.training.eps_speed)]
    for line in (out / "train_log.jsonl").read_text().splitlines():
        rec = json.loads(line)
        assert rec["eps"] == pytest.approx([s.value(rec["step"]) for s in sch], abs=1e-15)
        trained = rec["step"] + 1 > 64 and rec["step"] % 8 == 0
        assert (rec["loss"] is not None) == trained
        assert rec["explored"] in (None, 0, 1)
        if rec["explored"] == 1:
            # exploring speed stays inside the safety-acceptable set, never outside {0..3}
            assert 0 <= rec["action"] < 4


def test_determinism(tmp_path):
    cfg = small_config()
    a = train("morl", cfg, tmp_path / "a")
    b = train("morl", cfg, tmp_path / "b")
    for name in ("train_log.jsonl", "episodes.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for ck in ("step_00000150.ckpt", "final.ckpt"):
        assert (tmp_path / "a" / "checkpoints" / ck).read_bytes() == \
               (tmp_path / "b" / "checkpoints" / ck).read_bytes()
    assert a.episodes == b.episodes


def test_seed_changes_run(tmp_path):
    a = train("sorl", small_config(total_steps=120), tmp_path / "a")
    b = train("sorl", small_config(total_steps=120, seed=8), tmp_path / "b")
    assert (tmp_path / "a" / "train_log.jsonl").read_bytes() != (tmp_path / "b" / "train_log.jsonl").read_bytes()
    assert a.steps == b.steps == 120


def test_replays_are_isolated():
    cfg = small_config(total_steps=100, warmup=1000)
    lr = _MorlLearner(cfg, np.random.SeedSequence(0))
    assert lr.buf_safety is not lr.buf_speed
    env = UrbanEnv()
    env.reset(0)
    obs = lr.observe(env)
    lr.store(obs, Action.MAINTAIN, RewardVector(-0.5, 0.25), obs, False)
    assert lr.buf_safety.rewards[0] == -0.5 and lr.buf_speed.rewards[0] == 0.25
    (o1, *_), = lr.buf_safety.contents()
    (o2, *_), = lr.buf_speed.contents()
    assert o1.shape == (40, 30, 4) and o2.shape == (1,)


def test_sorl_logs_single_epsilon(tmp_path):
    train("sorl", small_config(total_steps=50), tmp_path)
    rec = json.loads((tmp_path / "train_log.jsonl").read_text().splitlines()[0])
    assert rec["eps"] == [0.85]
    assert rec["explored"] in (0, None)


def test_divergence_is_reported(tmp_path, monkeypatch):
    import lexi_morl.train as tr

    def bad_reward(*a, **k):
            return RewardVector(float("inf"), 0.0)

    monkeypatch.setattr(tr, "reward_vector", bad_reward)
    with np.errstate(all="ignore"), pytest.raises(TrainingError):
        train("morl", small_config(total_steps=200, warmup=32), tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "diverged"
    assert "step" in manifest["diagnostics"]
