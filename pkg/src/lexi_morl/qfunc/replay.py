"""Fixed-capacity experience replay (ring buffer, uniform sampling with replacement)."""
from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Preallocated ring buffer.

    Observations may be arrays or tuples of arrays (the single-objective
    baseline stores ``(grid, speed)`` pairs). Grids (ndim >= 3) are held as
    float32 by default so a 10k buffer of 40x30x4 tensors stays near 400 MB
    instead of 800 MB; every value the encoder produces is exactly
    representable or within float32 rounding of it.
    """

    def __init__(self, capacity: int = 10_000, grid_dtype=np.float32):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.grid_dtype = grid_dtype
        self._obs = self._next = None
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.head = 0
        self.pushed = 0
        self._tuple = False

    def __len__(self):
        return self.size

    def _alloc(self, obs):
        parts = obs if self._tuple else (obs,)
        mk = lambda a: np.zeros((self.capacity, *np.shape(a)),  # noqa: E731
                                dtype=self.grid_dtype if np.ndim(a) >= 3 else np.float64)
        self._obs = [mk(a) for a in parts]
        self._next = [mk(a) for a in parts]

    def push(self, obs, action, reward, next_obs, done):
        if self._obs is None:
            self._tuple = isinstance(obs, tuple)
            self._alloc(obs)
        i = self.head
        for store, a in zip(self._obs, obs if self._tuple else (obs,)):
            store[i] = a
        for store, a in zip(self._next, next_obs if self._tuple else (next_obs,)):
            store[i] = a
        self.actions[i] = int(action)
        self.rewards[i] = reward
        self.dones[i] = bool(done)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def _gather(self, stores, idx):
        out = [s[idx].astype(np.float64) for s in stores]
        return tuple(out) if self._tuple else out[0]

    def sample(self, batch_size: int, rng):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(self.size, size=batch_size)
        return (self._gather(self._obs, idx), self.actions[idx], self.rewards[idx],
                self._gather(self._next, idx), self.dones[idx])

    def contents(self):
        """Stored transitions oldest first, as ``(obs, action, reward, next_obs, done)`` tuples."""
        order = [(self.head - self.size + k) % self.capacity for k in range(self.size)]
        out = []
        for i in order:
            obs = self._gather(self._obs, [i])
            nxt = self._gather(self._next, [i])
            if self._tuple:
                obs, nxt = tuple(o[0] for o in obs), tuple(o[0] for o in nxt)
            else:
                obs, nxt = obs[0], nxt[0]
            out.append((obs, int(self.actions[i]), float(self.rewards[i]), nxt, bool(self.dones[i])))
        return out
