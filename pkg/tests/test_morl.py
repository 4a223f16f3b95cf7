import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexi_morl.morl import (ACCELERATIONS, Action, Objective, ObjectiveChain, SelectionTrace,
                            acceptable_actions, clamp_thresholded, superior, tlo_select, tlq_greedy)
from lexi_morl.verify import oracle_select

INF = math.inf


def chain(*taus, mode="literal", clamps=None):
    return ObjectiveChain.from_thresholds([(f"o{i}", t) for i, t in enumerate(taus)], mode, clamps)


# -- types --------------------------------------------------------------------------

def test_action_constants():
    assert len(Action) == 4
    assert [a.acceleration for a in Action] == [1.0, -1.0, -5.0, 0.0]
    for i in range(4):
        assert Action(i).value == i
    assert ACCELERATIONS.tolist() == [1.0, -1.0, -5.0, 0.0]


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.01, float("nan")])
def test_objective_rejects_bad_threshold(bad):
    with pytest.raises(ValueError):
        Objective("x", bad)


def test_chain_validation_and_roundtrip():
    with pytest.raises(ValueError):
        ObjectiveChain(())
    with pytest.raises(ValueError):
        ObjectiveChain(tuple(Objective(f"o{i}") for i in range(9)))
    with pytest.raises(ValueError):
        chain(0.9, mode="fuzzy")
    c = chain(0.95, 1.0, mode="slack", clamps=[4.0, None])
    assert ObjectiveChain.from_dict(c.to_dict()) == c
    assert c.names == ["o0", "o1"]
    assert c.clamp_levels.tolist() == [4.0, INF]


# -- clamp / superior / tlq ----------------------------------------------------------

@pytest.mark.parametrize("q,c,want", [(3.0, 5.0, 3.0), (7.0, 5.0, 5.0), (-4.0, 0.0, -4.0), (2.0, INF, 2.0)])
def test_clamp_examples(q, c, want):
    assert clamp_thresholded(q, c) == want


@pytest.mark.parametrize("q,c", [(INF, 1.0), (float("nan"), 1.0), (1.0, float("nan"))])
def test_clamp_rejects_non_finite(q, c):
    with pytest.raises(ValueError):
        clamp_thresholded(q, c)


@pytest.mark.parametrize("a,b,i,want", [
    ([5, 3], [4, 10], 1, True),
    ([5, 3], [5, 3], 1, True),
    ([4, 9], [5, 0], 1, False),
    ([5, 2], [5, 3], 1, False),
    ([5, 4], [5, 3], 2, True),
])
def test_superior_examples(a, b, i, want):
    assert superior(a, b, i) is want


@pytest.mark.parametrize("a,b,i", [([1, 2], [1], 1), ([1, 2], [1, 2], 0), ([1, 2], [1, 2], 3), ([], [], 1)])
def test_superior_argument_errors(a, b, i):
    with pytest.raises(ValueError):
        superior(a, b, i)


def test_tlq_greedy_examples():
    assert tlq_greedy([[1, 2, 3, 0]], chain(1.0)) == 2
    assert tlq_greedy([[5, 5], [1, 9]], chain(1.0, 1.0, clamps=[4.0, None])) == 1
    assert tlq_greedy([[5, 3], [0, 0]], chain(1.0, 1.0, clamps=[4.0, None])) == 0


def test_tlq_greedy_ties_go_low():
    assert tlq_greedy([[2, 2, 2, 2], [0, 1, 1, 0]], chain(1.0, 1.0)) == 1


# -- acceptable sets and selection -------------------------------------------------

def test_acceptable_examples():
    assert acceptable_actions({0, 1, 2, 3}, [10, 9.6, 5, 9.4], 0.95) == (0, 1)
    assert acceptable_actions({0, 1}, [-0.1, -0.5], 0.95) == (0,)
    assert acceptable_actions({2}, [1, 2, -7, 3], 0.3) == (2,)
    with pytest.raises(ValueError):
        acceptable_actions(set(), [1, 2, 3, 4], 0.5)


def test_slack_mode_keeps_near_best_negative_values():
    # bar = -0.1 - 0.05 * 0.1 = -0.105
    assert acceptable_actions({0, 1, 2, 3}, [-0.1, -0.104, -0.5, -0.106], 0.95, "slack") == (0, 1)
    # equals literal when the best value is positive
    q = [10, 9.6, 5, 9.4]
    assert acceptable_actions(range(4), q, 0.95, "slack") == acceptable_actions(range(4), q, 0.95)


def test_tlo_examples():
    c = chain(0.95, 1.0)
    a, tr = tlo_select([[10, 9.6, 5, 9.4], [1, 7, 9, 2]], c)
    assert a == 1
    assert tr.sets == [(0, 1, 2, 3), (0, 1), (1,)]
    assert tr.explored is None and tr.action == 1
    a, _ = tlo_select([[0.1, 0.2, 0.3, 0.9]], chain(1.0))
    assert a == 3


def test_tlo_explore_first_objective_is_uniform_over_all_actions():
    c = chain(0.95, 1.0)
    q = [[10, 9.6, 5, 9.4], [1, 7, 9, 2]]
    rng = np.random.default_rng(0)
    counts = np.zeros(4)
    for _ in range(4000):
        a, tr = tlo_select(q, c, [True, False], rng)
        assert tr.explored == 0 and tr.sets[-1] == (0, 1)
        counts[a] += 1
    assert np.all(np.abs(counts / 4000 - 0.25) < 0.03)
    a1, _ = tlo_select(q, c, [True, False], np.random.default_rng(5))
    a2, _ = tlo_select(q, c, [True, False], np.random.default_rng(5))
    assert a1 == a2


def test_tlo_explore_second_objective_stays_inside_safe_set():
    c = chain(0.95, 1.0)
    q = [[10, 9.6, 5, 9.4], [1, 7, 9, 2]]
    rng = np.random.default_rng(1)
    seen = {int(tlo_select(q, c, [False, True], rng)[0]) for _ in range(200)}
    assert seen == {0, 1}


def test_tlo_input_errors():
    c = chain(0.95, 1.0)
    with pytest.raises(ValueError):
        tlo_select([[1, 2, 3, 4]], c)
    with pytest.raises(ValueError):
        tlo_select([[1, 2, 3, 4], [1, 2, 3, float("nan")]], c)
    with pytest.raises(ValueError):
        tlo_select([[1, 2, 3, 4], [1, 2, 3, 4]], c, [True, True], np.random.default_rng(0))
    with pytest.raises(ValueError):
        tlo_select([[1, 2, 3, 4], [1, 2, 3, 4]], c, [True, False])


def test_selection_trace_roundtrip():
    _, tr = tlo_select([[10, 9.6, 5, 9.4], [1, 7, 9, 2]], chain(0.95, 1.0))
    back = SelectionTrace.from_dict(tr.to_dict())
    assert back.sets == tr.sets and back.action == tr.action and back.is_nested()
    assert not SelectionTrace([[0]], [(0, 1), (2,)]).is_nested()


# -- properties ---------------------------------------------------------------------

taus = st.sampled_from([0.05, 0.5, 0.8, 0.95, 1.0])
qvals = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
rows = st.lists(qvals, min_size=4, max_size=4)


@st.composite
def snapshots(draw, n=None):
    n = draw(st.integers(1, 3)) if n is None else n
    q = [draw(rows) for _ in range(n)]
    t = [draw(taus) for _ in range(n)]
    mode = draw(st.sampled_from(["literal", "slack"]))
    return q, chain(*t, mode=mode)


@given(snapshots())
def test_sets_are_nested_and_hold_the_argmax(case):
    q, c = case
    a, tr = tlo_select(q, c)
    assert tr.is_nested()
    assert a in tr.sets[-1]
    for i, row in enumerate(q):
        prev = tr.sets[i]
        best = max(prev, key=lambda k: (row[k], -k))
        assert best in tr.sets[i + 1]


@given(st.lists(st.floats(0.01, 50), min_size=4, max_size=4, unique=True))
def test_tau_one_gives_singleton(row):
    assert len(acceptable_actions(range(4), row, 1.0)) == 1


@given(st.lists(st.floats(0.01, 50), min_size=4, max_size=4))
def test_tiny_tau_keeps_everything_when_positive(row):
    tau = min(row) / max(row) / 2
    assert acceptable_actions(range(4), row, tau) == (0, 1, 2, 3)


@given(rows, rows)
def test_mutual_superiority_means_equal(a, b):
    a2, b2 = [min(x, 10.0) for x in a], [min(x, 10.0) for x in b]
    if superior(a2, b2, 1) and superior(b2, a2, 1):
        assert a2 == b2


@given(snapshots(), st.integers(-8, 8))
def test_positive_rescaling_keeps_choice(case, j):
    # powers of two scale exactly, so the comparisons are unaffected by rounding
    q, c = case
    k = 2.0 ** j
    assert tlo_select(np.asarray(q) * k, c)[0] == tlo_select(q, c)[0]


@given(snapshots(), st.integers(0, 2**32 - 1), st.integers(-1, 2))
@settings(max_examples=300)
def test_matches_enumeration_oracle(case, seed, explore_at):
    q, c = case
    explore = [i == explore_at for i in range(len(c))]
    got, tr = tlo_select(q, c, explore, np.random.default_rng(seed))
    want, sets = oracle_select(q, list(c.thresholds), explore, np.random.default_rng(seed), c.threshold_mode)
    assert int(got) == want
    assert [tuple(sorted(s)) for s in sets] == tr.sets
