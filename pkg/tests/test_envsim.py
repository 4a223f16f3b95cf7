import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import place_pedestrians
from lexi_morl.envsim.maps import BUILTIN_MAPS, MapSpec, RoadSegment, builtin_map, resolve_map
from lexi_morl.envsim.sim import DoneReason, EnvConfig, UrbanEnv
from lexi_morl.errors import ConfigError, ContractViolation
from lexi_morl.morl import ACCELERATIONS, Action
from lexi_morl.rewards import EventKind


def test_reset_contract():
    env = UrbanEnv(EnvConfig(), "train")
    st_ = env.reset(1)
    assert st_.ego.speed == 0.0 and st_.ego.waypoint == 0 and st_.ego.arc == 0.0
    assert np.allclose(st_.ego.position, env.map.route[0])
    assert 0 < len(st_.crowd) <= 30
    rel = st_.crowd.pos - st_.ego.position
    assert np.all(np.hypot(*rel.T) <= 35.0)
    assert np.all(rel[:, 0] * np.cos(st_.ego.heading) + rel[:, 1] * np.sin(st_.ego.heading) >= -0.5)


def test_reset_is_deterministic():
    a, b = UrbanEnv(), UrbanEnv()
    assert a.reset(1).fingerprint() == b.reset(1).fingerprint()
    assert a.reset(2).fingerprint() != b.reset(1).fingerprint()


def test_crossing_factor_zero():
    env = UrbanEnv(EnvConfig(crossing_factor=0.0))
    for seed in range(5):
        assert not env.reset(seed).crowd.crossing.any()


@pytest.mark.parametrize("kw", [dict(dt=0), dict(despawn_radius=30.0), dict(crossing_factor=1.5),
                                dict(max_pedestrians=-1), dict(ped_speed_min=2.0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        EnvConfig(**kw)


def test_config_unknown_field():
    with pytest.raises(ConfigError):
        EnvConfig.from_dict({"warp": 9})


def test_brake_clamps_at_zero(empty_env):
    empty_env.state.ego.speed = 0.3
    out = empty_env.step(Action.BRAKE)
    assert out.speed_after == 0.0 and empty_env.state.ego.speed == 0.0


def test_accelerate_past_limit(empty_env):
    empty_env.state.ego.speed = 8.0
    out = empty_env.step(Action.ACCELERATE)
    assert out.speed_after == pytest.approx(8.1, abs=1e-12)


def test_hard_cap(empty_env):
    empty_env.state.ego.speed = 14.95
    assert empty_env.step(Action.ACCELERATE).speed_after == 15.0


def test_pedestrian_on_footprint_collides(empty_env):
    place_pedestrians(empty_env, [empty_env.state.ego.position + [0.5, 0.0]])
    out = empty_env.step(Action.MAINTAIN)
    assert out.event.kind is EventKind.COLLISION
    assert out.done and out.reason is DoneReason.COLLISION
    with pytest.raises(ContractViolation):
        empty_env.step(Action.MAINTAIN)


def test_nearest_front_crossing_pedestrian(empty_env):
    env = empty_env
    assert env.nearest_front_crossing_pedestrian() is None
    place_pedestrians(env, [[5.25, -1.75]])
    assert env.nearest_front_crossing_pedestrian() == pytest.approx(3.0, abs=1e-12)
    place_pedestrians(env, [[-6.0, -1.75]])
    assert env.nearest_front_crossing_pedestrian() is None
    # off the lane corridor (other lane) and on the sidewalk
    place_pedestrians(env, [[8.0, 1.75], [8.0, -5.0]])
    assert env.nearest_front_crossing_pedestrian() is None


def test_near_collision_event(empty_env):
    env = empty_env
    env.state.ego.speed = 8.0
    place_pedestrians(env, [[8.0, -1.75]])
    out = env.step(Action.MAINTAIN)
    assert out.event.kind is EventKind.NEAR_COLLISION
    assert out.event.distance == pytest.approx(8.0 - 0.8 - 2.25)


def test_goal_and_step_cap():
    env = UrbanEnv(EnvConfig(max_pedestrians=0, step_cap=50))
    env.reset(0)
    out = None
    for _ in range(50):
        out = env.step(Action.MAINTAIN)
    assert out.reason is DoneReason.STEP_CAP
    env = UrbanEnv(EnvConfig(max_pedestrians=0, v_hard_cap=15.0))
    env.reset(0)
    while not env.state.done:
        out = env.step(Action.ACCELERATE)
    assert out.reason is DoneReason.GOAL
    assert env.state.distance == pytest.approx(env.path.length, abs=1e-9)


def test_intersection_flag(empty_env):
    env = empty_env
    env.state.ego.arc = 47.0
    out = env.step(Action.MAINTAIN)
    assert out.in_intersection
    env.state.ego.arc = 20.0
    assert not env.step(Action.MAINTAIN).in_intersection


# -- maps ----------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(BUILTIN_MAPS))
def test_builtin_maps_roundtrip(name, tmp_path):
    spec = builtin_map(name)
    spec.save(tmp_path / "m.json")
    back = resolve_map(tmp_path / "m.json")
    assert back.to_dict() == spec.to_dict()
    assert np.all(spec.road_distance(spec.route) == 0.0)


def test_map_validation_errors(tmp_path):
    road = [RoadSegment((0.0, 0.0), (50.0, 0.0))]
    with pytest.raises(ConfigError):
        MapSpec("x", road, [[0.0, 0.0]])
    with pytest.raises(ConfigError):
        MapSpec("x", road, [[0.0, 0.0], [10.0, 20.0]])
    with pytest.raises(ConfigError):
        MapSpec("x", [], [[0.0, 0.0], [10.0, 0.0]])
    with pytest.raises(ConfigError):
        MapSpec("x", road, [[0.0, 0.0], [10.0, 0.0]], crosswalks=[(0.0, 30.0, 2.0, 33.0)])
    with pytest.raises(ConfigError):
        MapSpec.from_dict({"roads": [{"start": [0, 0]}], "route": [[0, 0], [1, 0]]})
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(ConfigError):
        UrbanEnv(EnvConfig(), tmp_path / "bad.json")
    with pytest.raises(ConfigError):
        builtin_map("nowhere")


# -- invariants -----------------------------------------------------------------------

def _hits_oracle(peds, ego, radius):
    """Disc vs oriented rectangle in the ego frame, written independently of the simulator."""
    c, s = np.cos(ego.heading), np.sin(ego.heading)
    rel = peds - ego.position
    x = rel[:, 0] * c + rel[:, 1] * s
    y = -rel[:, 0] * s + rel[:, 1] * c
    dx = np.maximum(np.abs(x) - ego.length / 2, 0.0)
    dy = np.maximum(np.abs(y) - ego.width / 2, 0.0)
    return dx * dx + dy * dy <= radius * radius


@given(st.integers(0, 2**31 - 1), st.sampled_from(sorted(BUILTIN_MAPS)))
@settings(max_examples=15, deadline=None)
def test_step_invariants(seed, name):
    cfg = EnvConfig()
    env = UrbanEnv(cfg, name)
    env.reset(seed)
    rng = np.random.default_rng(seed)
    for _ in range(150):
        if env.state.done:
            break
        v0 = env.state.ego.speed
        a = int(rng.integers(4))
        out = env.step(a)
        ego, crowd = env.state.ego, env.state.crowd
        want = v0 + ACCELERATIONS[a] * cfg.dt
        if 0.0 < want < cfg.v_hard_cap:
            assert out.speed_after == pytest.approx(want, abs=1e-12)
        assert 0.0 <= ego.speed <= cfg.v_hard_cap
        d = np.hypot(*(crowd.pos - ego.position).T)
        assert np.all(d <= cfg.despawn_radius)
        assert np.sum(d <= cfg.vicinity_radius) <= cfg.max_pedestrians
        assert env.state.distance == pytest.approx(ego.arc, abs=1e-9)
        assert out.done == (out.reason is not None)
        assert (out.event.kind is EventKind.COLLISION) == bool(np.any(_hits_oracle(crowd.pos, ego, cfg.ped_radius)))


def test_trajectory_determinism():
    actions = np.random.default_rng(3).integers(4, size=300)

    def roll():
        env = UrbanEnv(EnvConfig(), "heldout2")
        env.reset(11)
        prints = []
        for a in actions:
            if env.state.done:
                break
            out = env.step(int(a))
            prints.append((env.state.fingerprint(), json.dumps(out.front_ped_distance)))
        return prints

    assert roll() == roll()
