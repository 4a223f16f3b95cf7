"""Q-function approximators: tabular, MLP (speed objective), CNN (safety objective).

Every approximator exposes the same surface:

``params``               list of float64 arrays, updated in place by the optimiser
``forward(x)``           batched Q-values ``[B, 4]`` plus a cache for ``backward``
``backward(cache, dq)``  gradients w.r.t. ``params`` given ``dL/dQ``
``q_values(obs)``        Q-vector for a single observation
``descriptor()``         JSON-able architecture description (checkpoints rebuild from it)
"""
from __future__ import annotations

import copy

import numpy as np

from ..morl import N_ACTIONS
from . import layers as L


class QFunction:
    n_actions = N_ACTIONS
    params: list[np.ndarray]

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dq):
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def batch(self, observations):
        """Stack single observations into a batched input."""
        return np.stack([np.asarray(o, dtype=float) for o in observations])

    def single(self, obs):
        return self.batch([obs])

    def q_values(self, obs) -> np.ndarray:
        q, _ = self.forward(self.single(obs))
        return q[0]

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params))

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.parameter_count:
            raise ValueError(f"expected {self.parameter_count} parameters, got {flat.size}")
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self):
        return copy.deepcopy(self)


class TabularQ(QFunction):
    """Lookup table keyed by observations rounded to a 0.5-unit lattice.

    Rows are allocated on first sight, up to ``capacity`` distinct keys.
    """

    def __init__(self, capacity: int = 4096, resolution: float = 0.5):
        self.capacity = capacity
        self.resolution = resolution
        self.table = np.zeros((capacity, N_ACTIONS))
        self.params = [self.table]
        self.rows: dict[tuple, int] = {}

    def key(self, obs) -> tuple:
        return self._keys(np.asarray(obs, dtype=float).reshape(1, -1))[0]

    def _keys(self, x2d) -> list[tuple]:
        return list(map(tuple, np.round(x2d / self.resolution).astype(np.int64).tolist()))

    def _row_for(self, k: tuple, allocate: bool) -> int | None:
        r = self.rows.get(k)
        if r is None and allocate:
            if len(self.rows) >= self.capacity:
                raise RuntimeError("tabular Q capacity exhausted")
            r = self.rows[k] = len(self.rows)
        return r

    def row(self, obs, allocate: bool = True) -> int | None:
        return self._row_for(self.key(obs), allocate)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.array([self._row_for(k, True) for k in self._keys(x.reshape(len(x), -1))], dtype=np.intp)
        return self.table[idx].copy(), idx

    def backward(self, idx, dq):
        g = np.zeros_like(self.table)
        np.add.at(g, idx, dq)
        return [g]

    def q_values(self, obs) -> np.ndarray:
        r = self.row(obs, allocate=False)
        return np.zeros(N_ACTIONS) if r is None else self.table[r].copy()

    def descriptor(self) -> dict:
        keys = sorted(self.rows, key=self.rows.get)
        return {"kind": "tabular", "capacity": self.capacity, "resolution": self.resolution,
                "keys": [list(k) for k in keys]}


class MlpQ(QFunction):
    """Fully connected ReLU network, default 1 -> 32 -> 32 -> 4."""

    def __init__(self, sizes=(1, 32, 32, N_ACTIONS), input_scale=None, seed=0):
        self.sizes = tuple(int(s) for s in sizes)
        if self.sizes[-1] != N_ACTIONS:
            raise ValueError("MLP output layer must have one unit per action")
        self.input_scale = np.ones(self.sizes[0]) if input_scale is None else np.asarray(input_scale, dtype=float)
        rng = np.random.default_rng(seed)
        self.params = []
        for fi, fo in zip(self.sizes[:-1], self.sizes[1:]):
            self.params += [L.glorot(rng, (fi, fo), fi, fo), np.zeros(fo)]

    def forward(self, x):
        h = np.asarray(x, dtype=float).reshape(len(x), -1) * self.input_scale
        acts = [h]
        n = len(self.params) // 2
        for i in range(n):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = z if i == n - 1 else L.relu(z)
            acts.append(h)
        return h, acts

    def backward(self, acts, dq):
        n = len(self.params) // 2
        grads = [None] * len(self.params)
        g = dq
        for i in reversed(range(n)):
            a_in = acts[i]
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.params[2 * i].T) * (acts[i] > 0)
        return grads

    def descriptor(self) -> dict:
        return {"kind": "mlp", "sizes": list(self.sizes), "input_scale": self.input_scale.tolist()}


class CnnQ(QFunction):
    """Three conv layers (5x5, stride 3, ReLU, 2x2 average pooling) then FC 128 -> 64 -> 4.

    With ``extra_inputs > 0`` the network takes ``(grid, extra)`` pairs and
    concatenates ``extra`` onto the flattened conv features before the first
    fully connected layer (the single-objective baseline feeds ego speed here).
    """

    def __init__(self, input_shape=(40, 30, 4), filters=(32, 64, 64), kernel=5, stride=3, pool=2,
                 hidden=(128, 64), extra_inputs=0, input_scale=None, extra_scale=None, seed=0):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.filters = tuple(int(f) for f in filters)
        self.kernel, self.stride, self.pool = int(kernel), int(stride), int(pool)
        self.hidden = tuple(int(h) for h in hidden)
        self.extra_inputs = int(extra_inputs)
        c_in = self.input_shape[2]
        self.input_scale = np.ones(c_in) if input_scale is None else np.asarray(input_scale, dtype=float)
        self.extra_scale = (np.ones(self.extra_inputs) if extra_scale is None
                            else np.asarray(extra_scale, dtype=float))
        rng = np.random.default_rng(seed)
        self.params = []
        h, w, c = self.input_shape
        k = self.kernel
        for f in self.filters:
            self.params += [L.glorot(rng, (k, k, c, f), k * k * c, k * k * f), np.zeros(f)]
            h, w = L.conv_output_hw(h, w, k, self.stride)
            h, w = L.pooled_hw(h, w, self.pool)
            c = f
        self.feature_hw = (h, w)
        self.n_features = h * w * c
        fc_sizes = (self.n_features + self.extra_inputs, *self.hidden, N_ACTIONS)
        for fi, fo in zip(fc_sizes[:-1], fc_sizes[1:]):
            self.params += [L.glorot(rng, (fi, fo), fi, fo), np.zeros(fo)]
        self._n_conv = len(self.filters)

    def batch(self, observations):
        if self.extra_inputs:
            grids = np.stack([np.asarray(o[0], dtype=float) for o in observations])
            extra = np.stack([np.asarray(o[1], dtype=float).reshape(-1) for o in observations])
            return grids, extra
        return super().batch(observations)

    def forward(self, x):
        if self.extra_inputs:
            grid, extra = x
            extra = np.asarray(extra, dtype=float).reshape(len(grid), -1) * self.extra_scale
        else:
            grid, extra = x, None
        h = np.asarray(grid, dtype=float) * self.input_scale
        caches = []
        for i in range(self._n_conv):
            z, conv_cache = L.conv2d_forward(h, self.params[2 * i], self.params[2 * i + 1], self.stride)
            a = L.relu(z)
            h, pool_cache = L.avgpool_forward(a, self.pool)
            caches.append((conv_cache, z, pool_cache))
        flat_shape = h.shape
        h = h.reshape(len(h), -1)
        if extra is not None:
            h = np.concatenate([h, extra], axis=1)
        acts = [h]
        n_fc = len(self.hidden) + 1
        base = 2 * self._n_conv
        for j in range(n_fc):
            z = h @ self.params[base + 2 * j] + self.params[base + 2 * j + 1]
            h = z if j == n_fc - 1 else L.relu(z)
            acts.append(h)
        return h, (caches, flat_shape, acts)

    def backward(self, cache, dq):
        caches, flat_shape, acts = cache
        grads = [None] * len(self.params)
        base = 2 * self._n_conv
        n_fc = len(self.hidden) + 1
        g = dq
        for j in reversed(range(n_fc)):
            grads[base + 2 * j] = acts[j].T @ g
            grads[base + 2 * j + 1] = g.sum(axis=0)
            g = g @ self.params[base + 2 * j].T
            if j > 0:
                g = g * (acts[j] > 0)
        g = g[:, :self.n_features].reshape(flat_shape)
        for i in reversed(range(self._n_conv)):
            conv_cache, z, pool_cache = caches[i]
            g = L.avgpool_backward(g, pool_cache) * (z > 0)
            g, grads[2 * i], grads[2 * i + 1] = L.conv2d_backward(g, self.params[2 * i], conv_cache,
                                                                  input_grad=i > 0)
        return grads

    def descriptor(self) -> dict:
        return {
            "kind": "cnn",
            "input_shape": list(self.input_shape),
            "filters": list(self.filters),
            "kernel": self.kernel,
            "stride": self.stride,
            "pool": self.pool,
            "hidden": list(self.hidden),
            "extra_inputs": self.extra_inputs,
            "input_scale": self.input_scale.tolist(),
            "extra_scale": self.extra_scale.tolist(),
        }


def build(descriptor: dict) -> QFunction:
    """Instantiate an (uninitialised-weights) approximator from its descriptor."""
    d = dict(descriptor)
    kind = d.pop("kind")
    if kind == "mlp":
        return MlpQ(d["sizes"], d.get("input_scale"))
    if kind == "cnn":
        return CnnQ(d["input_shape"], d["filters"], d["kernel"], d["stride"], d["pool"], d["hidden"],
                    d.get("extra_inputs", 0), d.get("input_scale"), d.get("extra_scale"))
    if kind == "tabular":
        f = TabularQ(d["capacity"], d["resolution"])
        for i, k in enumerate(d.get("keys", [])):
            f.rows[tuple(k)] = i
        return f
    raise ValueError(f"unknown Q-function kind {kind!r}")
