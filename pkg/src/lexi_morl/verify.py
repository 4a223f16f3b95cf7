"""Self-verification suites behind ``lexi_morl selftest`` and the acceptance tests.

Every suite returns a ``SuiteResult``. The oracles here are written
independently of the code they check: the selection oracle enumerates sets
with plain Python, the comparator oracle uses tuple ordering, rewards are
checked against hand-computed constants and gradients against finite
differences.
"""
from __future__ import annotations

import contextlib
import json
import math
import operator
import time
from dataclasses import dataclass, field

import numpy as np

from . import morl
from .morl import ObjectiveChain, Objective, superior, tlo_select
from .qfunc.ddqn import sync_target, train_step
from .qfunc.gradcheck import grad_check
from .qfunc.nets import CnnQ, MlpQ, TabularQ
from .qfunc.optim import RmsProp
from .qfunc.replay import ReplayBuffer
from .rewards import (RewardVector, SafetyEvent, SafetyParams, dynamic_range, near_collision_penalty,
                      reward_vector, safety_reward, scalarize, speed_reward)

TAUS = (0.5, 0.8, 0.95, 1.0)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f} s)"


@contextlib.contextmanager
def injected_fault():
    """Swap the acceptance comparison ``>=`` for ``>`` (mutation check for the oracle suite)."""
    saved = morl._threshold_cmp
    morl._threshold_cmp = operator.gt
    try:
        yield
    finally:
        morl._threshold_cmp = saved


# -- thresholded selection ----------------------------------------------------------

def oracle_select(q, taus, explore, rng, mode="literal"):
    """Set-enumeration reference for the percentage-threshold selection.

    Returns ``(action, sets)``; the explored branch draws ``sorted(A_{i-1})[rng.integers(len)]``.
    """
    n, m = len(q), len(q[0])
    current = set(range(m))
    sets = [sorted(current)]
    for i in range(n):
        row = q[i]
        top = max(row[a] for a in current)
        first_best = min(a for a in current if row[a] == top)
        if mode == "literal":
            keep = {a for a in current if row[a] >= top * taus[i]}
        else:
            keep = {a for a in current if row[a] >= top - (1 - taus[i]) * abs(top)}
        nxt = keep | {first_best}
        sets.append(sorted(nxt))
        if explore[i]:
            options = sorted(current)
            return options[int(rng.integers(len(options)))], sets
        current = nxt
    row = q[-1]
    top = max(row[a] for a in current)
    return min(a for a in current if row[a] == top), sets


def random_case(rng):
    n = int(rng.integers(1, 4))
    if rng.random() < 0.5:
        # small integers force ties and values exactly on the threshold bar
        q = rng.integers(-4, 5, size=(n, 4)).astype(float)
    else:
        q = np.round(rng.normal(0.0, 3.0, size=(n, 4)), 3)
    taus = [float(rng.choice(TAUS)) for _ in range(n)]
    explore = [False] * n
    if rng.random() < 0.3:
        explore[int(rng.integers(n))] = True
    return q, taus, explore


def tlo_oracle_suite(n_cases=10_000, seed=0, modes=("literal",)) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mismatches = []
    for k in range(n_cases):
        q, taus, explore = random_case(rng)
        mode = modes[k % len(modes)]
        chain = ObjectiveChain(tuple(Objective(f"o{i}", t) for i, t in enumerate(taus)), mode)
        draw_seed = int(rng.integers(2**31))
        got, trace = tlo_select(q, chain, explore, np.random.default_rng(draw_seed))
        want, sets = oracle_select(q.tolist(), taus, explore, np.random.default_rng(draw_seed), mode)
        if int(got) != want or [list(s) for s in trace.sets] != sets:
            mismatches.append({"q": q.tolist(), "taus": taus, "explore": explore, "got": int(got), "want": want})
    dt = time.perf_counter() - t0
    return SuiteResult("tlo-oracle", not mismatches, f"{len(mismatches)} mismatches in {n_cases} cases", dt,
                       {"mismatches": mismatches[:10], "cases": n_cases})


def superior_suite(n_pairs=10_000, seed=1) -> SuiteResult:
    """``superior(a, b, 1)`` must equal lexicographic ``>=`` on the clamped vectors."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bad = 0
    equal_cases = 0
    for _ in range(n_pairs):
        n = int(rng.integers(1, 5))
        clamps = [float(c) if rng.random() < 0.5 else math.inf for c in rng.integers(-2, 3, size=n)]
        a = rng.integers(-3, 4, size=n).astype(float)
        b = a.copy() if rng.random() < 0.2 else rng.integers(-3, 4, size=n).astype(float)
        ta = tuple(min(x, c) for x, c in zip(a, clamps))
        tb = tuple(min(x, c) for x, c in zip(b, clamps))
        equal_cases += ta == tb
        if superior(ta, tb, 1) != (ta >= tb):
            bad += 1
    dt = time.perf_counter() - t0
    return SuiteResult("superior", bad == 0, f"{bad} mismatches in {n_pairs} pairs ({equal_cases} equal)", dt)


# -- rewards ---------------------------------------------------------------------------

def reward_cases():
    p = SafetyParams()
    prox = SafetyParams(near_collision_mode="proximity")
    e = math.e
    return [
        ("d_r(8)", lambda: dynamic_range(8.0, p), 6.4),
        ("d_r(0)", lambda: dynamic_range(0.0, p), 2.0),
        ("d_r(4)", lambda: dynamic_range(4.0, p), 2.0),
        ("r_nc(d_p=d_r)", lambda: near_collision_penalty(6.4, 6.4, p), -1.0),
        ("r_nc(d_p->0)", lambda: near_collision_penalty(1e-12, 6.4, p), -1.0 / e),
        ("r_nc proximity(d_p=d_r)", lambda: near_collision_penalty(6.4, 6.4, prox), -1.0 / e),
        ("r_safety collision", lambda: safety_reward(SafetyEvent.collision(), 8.0, p), -4.0),
        ("r_safety clear", lambda: safety_reward(SafetyEvent.clear(), 8.0, p), 0.0),
        ("r_safety near(6.4) v=8", lambda: safety_reward(SafetyEvent.near(6.4), 8.0, p), -1.0),
        ("r_speed v=v_ref", lambda: speed_reward(8.0, 8.0), 0.0),
        ("r_speed v=0", lambda: speed_reward(0.0, 8.0), -1.0),
        ("r_speed v=4", lambda: speed_reward(4.0, 8.0), 0.5),
        ("r_speed v=9", lambda: speed_reward(9.0, 8.0), -0.5),
        ("R(collision, 8)", lambda: reward_vector(SafetyEvent.collision(), 8.0).as_array().tolist(), [-4.0, 0.0]),
        ("R(clear, 0)", lambda: reward_vector(SafetyEvent.clear(), 0.0).as_array().tolist(), [0.0, -1.0]),
        ("R(clear, 8)", lambda: reward_vector(SafetyEvent.clear(), 8.0).as_array().tolist(), [0.0, 0.0]),
        ("sum[-4,0]", lambda: scalarize(RewardVector(-4.0, 0.0)), -4.0),
        ("sum[-1,0.5]", lambda: scalarize(RewardVector(-1.0, 0.5)), -0.5),
        ("sum[0,0]", lambda: scalarize(RewardVector(0.0, 0.0)), 0.0),
    ]


def reward_suite(tol=1e-9) -> SuiteResult:
    t0 = time.perf_counter()
    failures = []
    for name, fn, want in reward_cases():
        got = fn()
        if not np.allclose(got, want, rtol=0.0, atol=tol):
            failures.append(f"{name}: got {got}, want {want}")
    dt = time.perf_counter() - t0
    n = len(reward_cases())
    detail = f"{n - len(failures)}/{n} hand values within {tol:g}"
    if failures:
        detail += "; " + "; ".join(failures)
    return SuiteResult("rewards", not failures, detail, dt)


# -- gradients -------------------------------------------------------------------------

def random_grid(rng, shape=(40, 30, 4), density=0.08):
    h, w, _ = shape
    g = np.zeros(shape)
    g[..., 3] = rng.integers(0, 4, size=(h, w))
    occ = rng.random((h, w)) < density
    k = int(occ.sum())
    g[occ, 0] = 1.0
    g[occ, 1] = rng.uniform(-4.0, 10.0, size=k)
    g[occ, 2] = rng.uniform(-180.0, 180.0, size=k)
    return g


def gradient_suite(n_fixtures=50, seed=2, tol=1e-5, n_params=200, grid_shape=(40, 30, 4)) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = {"mlp": 0.0, "cnn": 0.0}
    for k in range(n_fixtures):
        mlp = MlpQ(input_scale=[1.0 / 8.0], seed=int(rng.integers(2**31)))
        obs = rng.uniform(0.0, 12.0, size=1)
        err = grad_check(mlp, obs, int(rng.integers(4)), float(rng.normal(0, 2)), n_params, rng)
        worst["mlp"] = max(worst["mlp"], err)

        extra = k % 2  # alternate between the plain network and the one with ego speed appended
        cnn = CnnQ(grid_shape, extra_inputs=extra, input_scale=[1, 1 / 8, 1 / 180, 1 / 3],
                   extra_scale=[1 / 8] if extra else None, seed=int(rng.integers(2**31)))
        grid = random_grid(rng, grid_shape)
        obs = (grid, rng.uniform(0, 12, size=1)) if extra else grid
        err = grad_check(cnn, obs, int(rng.integers(4)), float(rng.normal(0, 2)), n_params, rng)
        worst["cnn"] = max(worst["cnn"], err)
    dt = time.perf_counter() - t0
    ok = all(v < tol for v in worst.values())
    return SuiteResult("gradients", ok,
                       f"max rel err mlp {worst['mlp']:.2e}, cnn {worst['cnn']:.2e} over {n_fixtures} fixtures",
                       dt, worst)


# -- DDQN on a chain MDP -------------------------------------------------------------------

class ChainMDP:
    """Deterministic chain 0..n-1; the last state is terminal.

    Actions (same indices as the driving actions): 0 steps right, 1 steps left,
    2 stays, 3 jumps two right. Entering the last state pays +1, every other
    step costs ``step_cost``.
    """

    MOVES = (1, -1, 0, 2)

    def __init__(self, n=5, step_cost=0.05, gamma=0.9):
        self.n, self.step_cost, self.gamma = n, step_cost, gamma

    def step(self, s, a):
        s2 = min(max(s + self.MOVES[a], 0), self.n - 1)
        done = s2 == self.n - 1
        return s2, (1.0 if done else -self.step_cost), done

    def q_star(self, tol=1e-13) -> np.ndarray:
        q = np.zeros((self.n, 4))
        while True:
            v = q.max(axis=1)
            v[-1] = 0.0
            new = np.zeros_like(q)
            for s in range(self.n - 1):
                for a in range(4):
                    s2, r, done = self.step(s, a)
                    new[s, a] = r + (0.0 if done else self.gamma * v[s2])
            if np.max(np.abs(new - q)) < tol:
                return new
            q = new


def chain_convergence_suite(updates=50_000, seed=3, tol=0.05, lr=0.01, sync_every=500) -> SuiteResult:
    t0 = time.perf_counter()
    mdp = ChainMDP()
    rng = np.random.default_rng(seed)
    online = TabularQ(capacity=16)
    target = online.copy()
    opt = RmsProp(online.params, lr)
    buf = ReplayBuffer(10_000)
    for s in range(mdp.n):  # register rows in state order so the table is easy to read
        online.row(np.array([float(s)]))
    sync_target(online, target)
    s = 0
    for _ in range(5_000):  # uniformly random behaviour policy
        a = int(rng.integers(4))
        s2, r, done = mdp.step(s, a)
        buf.push(np.array([float(s)]), a, r, np.array([float(s2)]), done)
        s = int(rng.integers(mdp.n - 1)) if done else s2
    q_star = mdp.q_star()
    err = math.inf
    used = updates
    for u in range(1, updates + 1):
        train_step(online, buf.sample(32, rng), mdp.gamma, opt, target)
        if u % sync_every == 0:
            sync_target(online, target)
            learned = np.array([online.q_values(np.array([float(x)])) for x in range(mdp.n - 1)])
            err = float(np.max(np.abs(learned - q_star[:-1])))
            if err < tol / 2:
                used = u
                break
    dt = time.perf_counter() - t0
    return SuiteResult("ddqn-chain", err < tol, f"max|Q-Q*| = {err:.4f} after {used} updates", dt,
                       {"error": err, "updates": used})


# -- environment invariants ------------------------------------------------------------------

def env_invariant_suite(total_steps=1_000_000, seed=4, maps=("train", "heldout1", "heldout2"),
                        config=None) -> SuiteResult:
    """Random drivers on every map; checks the population cap, the despawn radius, the speed
    clamp after every step and trace-replay metric equivalence after every episode."""
    from .envsim.sim import EnvConfig, UrbanEnv
    from .evalkit import EpisodeAccumulator, metrics_from_trace, trace_record
    from .morl import ACCELERATIONS

    t0 = time.perf_counter()
    cfg = EnvConfig() if config is None else config
    rng = np.random.default_rng(seed)
    envs = [UrbanEnv(cfg, name) for name in maps]
    # uniform, accelerate-heavy and brake-heavy random drivers reach different speed ranges
    mixes = (np.full(4, 0.25), np.array([0.55, 0.15, 0.05, 0.25]), np.array([0.2, 0.3, 0.3, 0.2]))
    counts = dict.fromkeys(("population", "despawn", "speed", "replay"), 0)
    steps = episodes = 0
    while steps < total_steps:
        env = envs[episodes % len(envs)]
        probs = mixes[episodes % len(mixes)]
        env.reset(int(rng.integers(2**31)))
        acc = EpisodeAccumulator(cfg.dt, cfg.v_ref)
        records = []
        while not env.state.done and steps < total_steps:
            a = int(rng.choice(4, p=probs))
            v0 = env.state.ego.speed
            out = env.step(a)
            steps += 1
            ego, crowd = env.state.ego, env.state.crowd
            want = min(max(v0 + ACCELERATIONS[a] * cfg.dt, 0.0), cfg.v_hard_cap)
            if not (out.speed_after == ego.speed == want):
                counts["speed"] += 1
            d = np.hypot(*(crowd.pos - ego.position).T) if len(crowd) else np.zeros(0)
            counts["despawn"] += int(np.any(d > cfg.despawn_radius))
            counts["population"] += int(np.sum(d <= cfg.vicinity_radius) > cfg.max_pedestrians)
            acc.update(out)
            records.append(trace_record(len(records), out))
        if env.state.done:
            # round-trip through JSON like a trace file on disk
            replayed = metrics_from_trace(json.loads(json.dumps(records)), cfg.dt, cfg.v_ref)
            counts["replay"] += int(replayed != acc.result())
            episodes += 1
    dt = time.perf_counter() - t0
    bad = sum(counts.values())
    detail = (f"{bad} violations over {steps} steps / {episodes} episodes "
              f"(population {counts['population']}, despawn {counts['despawn']}, speed {counts['speed']}, "
              f"replay {counts['replay']})")
    return SuiteResult("env-invariants", bad == 0, detail, dt, {"counts": counts, "steps": steps,
                                                                 "episodes": episodes})


# -- entry point -----------------------------------------------------------------------------

def run_selftest(fast=False, fault=False):
    """Run every suite; ``fast`` skips the convergence suite, ``fault`` injects the >= -> > mutation."""
    ctx = injected_fault() if fault else contextlib.nullcontext()
    with ctx:
        results = [tlo_oracle_suite(), superior_suite(), reward_suite(),
                   gradient_suite(n_fixtures=10 if fast else 50)]
        if not fast:
            results.append(chain_convergence_suite())
    return results
