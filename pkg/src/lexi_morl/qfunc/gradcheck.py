"""Finite-difference verification of the hand-written backward passes."""
from __future__ import annotations

import numpy as np

_EPS = np.finfo(float).eps
_ROUNDOFF_ULPS = 8.0


def squared_error(f, x, action, target):
    q, cache = f.forward(x)
    err = q[0, action] - target
    return float(err * err), cache, err


def analytic_grad(f, x, action, target) -> np.ndarray:
    _, cache, err = squared_error(f, x, action, target)
    dq = np.zeros((1, f.n_actions))
    dq[0, action] = 2.0 * err
    return np.concatenate([g.ravel() for g in f.backward(cache, dq)])


def _locate(f, index):
    for p in f.params:
        if index < p.size:
            view = p.reshape(-1)
            if not np.shares_memory(view, p):
                raise RuntimeError("parameter arrays must be contiguous")
            return view, index
        index -= p.size
    raise IndexError("parameter index out of range")


def _central(f, x, action, target, flat_param, j, h):
    """Central difference and a bound on its roundoff noise."""
    base = flat_param[j]
    up, down = base + h, base - h
    flat_param[j] = up
    lp = squared_error(f, x, action, target)[0]
    flat_param[j] = down
    lm = squared_error(f, x, action, target)[0]
    flat_param[j] = base
    span = up - down  # the step actually taken after rounding
    noise = _ROUNDOFF_ULPS * _EPS * (abs(lp) + abs(lm)) / span
    return (lp - lm) / span, noise


def numeric_grad(f, x, action, target, index, steps=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7), rtol=1e-9):
    """Central difference of the squared error w.r.t. one flat parameter.

    Along a single coordinate the loss is piecewise quadratic, so the central
    difference is exact up to roundoff while ``h`` stays inside one ReLU piece.
    Steps shrink by decades, so a unit sitting close to its kink is still
    resolved by the small steps. Consecutive estimates are scored by their
    disagreement, floored at the roundoff noise of the smaller step (tiny steps
    can agree by accident once the loss difference is a few ulps). The first
    pair scoring within ``rtol`` wins, otherwise the best-scoring pair; of a pair
    the larger step is returned.
    """
    view, j = _locate(f, index)
    est = [_central(f, x, action, target, view, j, steps[0])]
    best, best_gap = est[0][0], np.inf
    for h in steps[1:]:
        est.append(_central(f, x, action, target, view, j, h))
        (a, _), (b, noise) = est[-2], est[-1]
        scale = max(abs(a), abs(b), 1e-300)
        gap = 0.0 if a == b == 0.0 else max(abs(a - b), noise) / scale
        if gap < best_gap:
            best, best_gap = a, gap
        if gap <= rtol:
            break
    return best


def grad_check(f, obs, action, target, n_params=200, rng=None, floor=1e-12) -> float:
    """Max relative error between analytic and numeric gradients of ``(Q(obs,action)-target)^2``.

    Components where both gradients are below ``floor`` in magnitude count as agreeing.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x = f.single(obs)
    ga = analytic_grad(f, x, action, target)
    n = min(n_params, ga.size)
    # bias towards parameters that actually carry gradient so the check is informative
    live = np.flatnonzero(np.abs(ga) > floor)
    dead = np.flatnonzero(np.abs(ga) <= floor)
    k_live = min(len(live), max(n - min(len(dead), n // 10), 0))
    idx = np.concatenate([rng.choice(live, k_live, replace=False),
                          rng.choice(dead, min(len(dead), n - k_live), replace=False)]).astype(int)
    worst = 0.0
    for j in idx:
        gn = numeric_grad(f, x, action, target, j)
        scale = max(abs(ga[j]), abs(gn))
        if scale < floor:
            continue
        worst = max(worst, abs(ga[j] - gn) / scale)
    return worst
