"""Double-DQN targets and the per-batch update."""
from __future__ import annotations

import numpy as np

from ..errors import TrainingError

LOSSES = ("mse", "huber")


def ddqn_target(r, gamma, q_online_next, q_target_next, done) -> float:
    """``r`` if terminal, else ``r + gamma * Q_target(s', argmax_a Q_online(s', a))``."""
    if done:
        return float(r)
    a = int(np.argmax(q_online_next))
    return float(r + gamma * q_target_next[a])


def ddqn_targets(rewards, gamma, q_online_next, q_target_next, dones) -> np.ndarray:
    """Batched ``ddqn_target``; argmax ties go to the lowest action index."""
    a = np.argmax(q_online_next, axis=1)
    boot = q_target_next[np.arange(len(a)), a]
    return np.where(dones, rewards, rewards + gamma * boot)


def loss_and_grad(q, actions, targets, loss="mse"):
    """Mean TD loss over the batch and ``dL/dQ`` (nonzero only at the taken actions)."""
    rows = np.arange(len(actions))
    err = q[rows, actions] - targets
    dq = np.zeros_like(q)
    n = len(actions)
    if loss == "mse":
        value = float(np.mean(err * err))
        dq[rows, actions] = 2.0 * err / n
    elif loss == "huber":
        a = np.abs(err)
        value = float(np.mean(np.where(a <= 1.0, 0.5 * err * err, a - 0.5)))
        dq[rows, actions] = np.clip(err, -1.0, 1.0) / n
    else:
        raise ValueError(f"loss must be one of {LOSSES}")
    return value, dq


def train_step(f, batch, gamma, opt, target, loss="mse") -> float:
    """One DDQN update of ``f`` on ``batch``; returns the pre-update loss."""
    obs, actions, rewards, next_obs, dones = batch
    actions = np.asarray(actions, dtype=np.intp)
    q_online_next, _ = f.forward(next_obs)
    q_target_next, _ = target.forward(next_obs)
    targets = ddqn_targets(np.asarray(rewards, dtype=float), gamma, q_online_next, q_target_next,
                           np.asarray(dones, dtype=bool))
    q, cache = f.forward(obs)
    value, dq = loss_and_grad(q, actions, targets, loss)
    grads = f.backward(cache, dq)
    bad = [i for i, g in enumerate(grads) if not np.all(np.isfinite(g))]
    if bad or not np.isfinite(value):
        raise TrainingError(
            "non-finite loss or gradient",
            diagnostics={
                "loss": value,
                "bad_param_tensors": bad,
                "max_abs_q": float(np.nanmax(np.abs(q))) if q.size else 0.0,
                "max_abs_target": float(np.nanmax(np.abs(targets))) if targets.size else 0.0,
            },
        )
    opt.step(grads)
    return value


def sync_target(online, target):
    """Copy online parameters into the target bit-for-bit."""
    for dst, src in zip(target.params, online.params):
        np.copyto(dst, src)
    if hasattr(online, "rows"):
        target.rows = online.rows  # tabular: one shared key->row index
