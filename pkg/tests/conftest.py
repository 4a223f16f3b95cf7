import numpy as np
import pytest

from lexi_morl.envsim.sim import Crowd, EnvConfig, UrbanEnv


def place_pedestrians(env, positions, velocities=None, crossing=True):
    """Replace the crowd with pedestrians at fixed positions (static unless velocities given)."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(pos)
    vel = np.zeros((n, 2)) if velocities is None else np.asarray(velocities, dtype=float).reshape(-1, 2)
    speed = np.hypot(vel[:, 0], vel[:, 1])
    env.state.crowd = Crowd(
        ids=np.arange(n, dtype=np.int64),
        pos=pos.copy(),
        goal=pos.copy(),
        speed=speed,
        heading=np.arctan2(vel[:, 1], vel[:, 0]),
        moving=speed > 0,
        crossing=np.full(n, crossing),
        crossing_leg=np.zeros(n, dtype=bool),
        stuck=np.zeros(n, dtype=np.int64),
        wait=np.zeros(n, dtype=np.int64),
    )
    return env


@pytest.fixture
def empty_env():
    """Training map with no pedestrians, already reset."""
    env = UrbanEnv(EnvConfig(max_pedestrians=0), "train")
    env.reset(0)
    return env
