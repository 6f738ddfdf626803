import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iupe.errors import InputError
from iupe.models import PRE, EpisodeRecord, TransitionSet
from iupe.sampler import (
    NoSuccessError,
    build_training_set,
    printed_success_distribution,
    success_action_distribution,
)


def record(actions, goal, tag=0.0):
    """Episode whose states carry ``tag`` in column 0 so rows can be traced back."""
    n = len(actions)
    states = np.column_stack([np.full(n + 1, tag), np.arange(n + 1, dtype=float)])
    return EpisodeRecord(states, np.asarray(actions), goal, 0.0, np.zeros(n, dtype=bool))


def pre_set(n, n_actions, seed=0):
    rng = np.random.default_rng(seed)
    s = np.column_stack([np.full(n, -1.0), rng.normal(size=n)])
    return TransitionSet(s, np.arange(n) % n_actions, s + 1.0, PRE)


# -- success_action_distribution -------------------------------------------------------


def test_single_episode_distribution():
    dist = success_action_distribution([record([0, 0, 1], True)], 2)
    assert dist == pytest.approx([2 / 3, 1 / 3])


def test_two_episode_mean():
    # per-episode frequencies [1,0,0,0] and [0.5,0.5,0,0]
    records = [record([0, 0], True), record([0, 1], True)]
    assert success_action_distribution(records, 4) == pytest.approx([0.75, 0.25, 0, 0])


def test_failures_do_not_change_distribution():
    wins = [record([0, 0], True), record([0, 1], True)]
    losses = [record([3, 3, 2], False), record([1], False), record([2, 2, 2, 2], False)]
    assert np.array_equal(success_action_distribution(wins + losses, 4), success_action_distribution(wins, 4))


def test_printed_variant_has_win_rate_mass():
    records = [record([0, 0], True), record([0, 1], True), record([2], False), record([3], False)]
    printed = printed_success_distribution(records, 4)
    assert printed == pytest.approx([0.375, 0.125, 0, 0])
    assert printed.sum() == pytest.approx(0.5)


def test_no_success_signal():
    with pytest.raises(NoSuccessError):
        success_action_distribution([record([0], False)], 2)


# -- build_training_set -------------------------------------------------------------------


def test_all_wins_draws_only_post():
    records = [record([0, 1, 1], True, tag=i) for i in range(4)]
    out, report = build_training_set(pre_set(100, 2), records, 50, 0, 2)
    assert len(out) == 50
    assert np.all(out.source == "post")
    assert sum(report.pre_counts) == 0


def test_zero_successes_is_pre_exactly():
    pre = pre_set(37, 3)
    out, report = build_training_set(pre, [record([0, 1], False), record([2], False)], 10, 0, 3)
    assert out is pre
    assert report.fallback and report.size == 37


def expected_split(dist, wins, episodes, budget):
    """Independent expected-count oracle for one draw."""
    n_post = (wins * budget) // episodes
    n_pre = budget - n_post
    dist = np.asarray(dist, dtype=float)
    inv = (1 - dist) / (1 - dist).sum()
    return n_post, n_post * dist, n_post * dist * (1 - dist), n_pre, n_pre * inv, n_pre * inv * (1 - inv)


def half_win_records():
    # two wins with frequencies exactly [0.8, 0.2], two losses
    wins = [record([0, 0, 0, 0, 1], True, tag=1), record([0, 0, 0, 1, 0], True, tag=2)]
    losses = [record([1, 1, 1], False, tag=3), record([0, 1], False, tag=4)]
    return wins + losses


def test_half_win_multinomial_expectation():
    records = half_win_records()
    n_post, mu_post, var_post, n_pre, mu_pre, var_pre = expected_split([0.8, 0.2], 2, 4, 1000)
    assert (n_post, n_pre) == (500, 500)
    assert mu_post == pytest.approx([400, 100])
    assert mu_pre == pytest.approx([100, 400])  # weights 0.2 and 0.8 after renormalizing 1 - P

    out, report = build_training_set(pre_set(2000, 2), records, 1000, np.random.default_rng(12), 2)
    post_counts = np.bincount(out.action[out.source == "post"], minlength=2)
    pre_counts = np.bincount(out.action[out.source == "pre"], minlength=2)
    assert post_counts.sum() == 500 and pre_counts.sum() == 500
    assert np.all(np.abs(post_counts - mu_post) <= 3 * np.sqrt(var_post))
    assert np.all(np.abs(pre_counts - mu_pre) <= 3 * np.sqrt(var_pre))
    assert report.post_counts == post_counts.tolist()
    assert report.pre_counts == pre_counts.tolist()


def test_half_win_mean_over_repeats():
    records = half_win_records()
    _, mu_post, var_post, _, mu_pre, var_pre = expected_split([0.8, 0.2], 2, 4, 1000)
    rng = np.random.default_rng(3)
    reps = 200
    post, pre = np.zeros(2), np.zeros(2)
    for _ in range(reps):
        out, _ = build_training_set(pre_set(2000, 2), records, 1000, rng, 2)
        post += np.bincount(out.action[out.source == "post"], minlength=2)
        pre += np.bincount(out.action[out.source == "pre"], minlength=2)
    assert np.all(np.abs(post / reps - mu_post) <= 3 * np.sqrt(var_post / reps))
    assert np.all(np.abs(pre / reps - mu_pre) <= 3 * np.sqrt(var_pre / reps))


def test_missing_action_weight_is_redistributed():
    pre = TransitionSet(np.zeros((5, 2)), np.zeros(5, dtype=int), np.ones((5, 2)), PRE)
    records = [record([0, 0], True), record([1], False)]
    out, report = build_training_set(pre, records, 10, 0, 2)
    assert len(out) == 10
    assert "pre:1" in report.redistributed
    assert np.all(out.action[out.source == "pre"] == 0)


def test_take_all_uses_every_successful_transition():
    records = [record([0, 1, 1], True, tag=1), record([0], False, tag=2)]
    out, _ = build_training_set(pre_set(100, 2), records, 10, 0, 2, take_all=True)
    post = out.s[out.source == "post"]
    assert len(post) == 3
    assert np.all(post[:, 0] == 1)


def test_bad_arguments():
    with pytest.raises(InputError):
        build_training_set(pre_set(0, 2), [], 10, 0, 2)
    with pytest.raises(InputError):
        build_training_set(pre_set(5, 2), [], 0, 0, 2)


# -- properties ----------------------------------------------------------------------------

episode = st.tuples(st.lists(st.integers(0, 2), min_size=1, max_size=8), st.booleans())


@settings(max_examples=60, deadline=None)
@given(st.lists(episode, min_size=1, max_size=8), st.integers(1, 300), st.integers(0, 2**32 - 1))
def test_size_and_success_filtering(episodes, budget, seed):
    records = [record(a, g, tag=i + 1) for i, (a, g) in enumerate(episodes)]
    pre = pre_set(50, 3)
    out, report = build_training_set(pre, records, budget, seed, 3)
    wins = sum(g for _, g in episodes)
    assert report.successes == wins <= report.episodes == len(records)
    if wins:
        assert len(out) == budget == report.size
        assert sum(report.post_counts) + sum(report.pre_counts) == report.size
        assert sum(report.distribution) == pytest.approx(1.0)
        assert min(report.distribution) >= 0
    else:
        assert len(out) == len(pre)
    winners = {i + 1 for i, (_, g) in enumerate(episodes) if g}
    tags = set(out.s[out.source == "post", 0].tolist())
    assert tags <= winners
    assert not set(out.s[out.source == "pre", 0].tolist()) - {-1.0}


@settings(max_examples=60, deadline=None)
@given(st.lists(episode, min_size=2, max_size=8), st.integers(1, 500))
def test_more_successes_never_shrink_post_share(episodes, budget):
    losers = [i for i, (_, g) in enumerate(episodes) if not g]
    if not losers:
        return
    records = [record(a, g) for a, g in episodes]
    better = list(records)
    flip = losers[0]
    better[flip] = record(episodes[flip][0], True)
    _, before = build_training_set(pre_set(40, 3), records, budget, 0, 3)
    _, after = build_training_set(pre_set(40, 3), better, budget, 0, 3)
    assert after.win_rate >= before.win_rate
    assert sum(after.post_counts) >= sum(before.post_counts)
