import json
from pathlib import Path

import pytest

from lexi_morl.config import EpsilonSpec, RunConfig, ThresholdConfig, TrainConfig
from lexi_morl.errors import ConfigError


def test_defaults_are_desk_scale():
    tc = RunConfig().training
    assert tc.total_steps == 50_000
    assert (tc.eps_safety.start, tc.eps_safety.end, tc.eps_safety.decay_steps) == (0.9, 0.3, 40_000)
    assert (tc.lr_safety, tc.lr_speed, tc.batch_size, tc.target_sync) == (0.00025, 0.0025, 32, 1000)
    full = TrainConfig()
    assert full.total_steps == 500_000 and full.eps_speed.decay_steps == 400_000
    assert RunConfig().observation.shape == (40, 30, 4)


def test_roundtrip(tmp_path):
    cfg = RunConfig().with_overrides(["thresholds.mode=slack", "training.seed=3", "environment.step_cap=99"])
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(tmp_path / "c.json") == cfg
    assert cfg.thresholds.chain().to_dict()["mode"] == "slack"


def test_partial_file_falls_back_to_desk(tmp_path):
    (tmp_path / "c.json").write_text('{"training": {"total_steps": 10}}')
    cfg = RunConfig.load(tmp_path / "c.json")
    assert cfg.training.total_steps == 10 and cfg.training.eps_safety.decay_steps == 40_000


@pytest.mark.parametrize("override", ["training.batch_size=0", "training.gamma=1.5", "training.loss=l1",
                                      "thresholds.safety=0", "thresholds.mode=odd", "reward.v_ref=-1",
                                      "nowhere.x=1", "training", "training.nope=1"])
def test_bad_overrides(override):
    with pytest.raises(ConfigError):
        RunConfig().with_overrides([override])


def test_bad_files(tmp_path):
    for text in ("[1, 2]", "{", '{"extra": {}}', '{"training": {"eps_safety": {"start": 0.1}}}'):
        (tmp_path / "c.json").write_text(text)
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "c.json")


def test_epsilon_spec_validation():
    with pytest.raises(ConfigError):
        EpsilonSpec(0.2, 0.5, 10)
    with pytest.raises(ConfigError):
        EpsilonSpec(0.9, 0.1, 0)
    assert ThresholdConfig().chain().to_dict()["objectives"][0]["threshold"] == 0.95


def test_shipped_configs_load():
    for path in sorted(Path(__file__).resolve().parents[1].joinpath("configs").glob("*.json")):
        RunConfig.load(path)
