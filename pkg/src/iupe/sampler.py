"""Goal-aware assembly of the inverse dynamics training set.

Successful rollouts contribute transitions in proportion to the action
distribution they exhibit; the remainder of the budget is filled from the
random pre-demonstrations, favouring the actions successful runs used least.
The post/pre split follows the win rate of the current policy.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError
from .models import TransitionSet


class NoSuccessError(InputError):
    """Raised when no rollout reached the goal."""


def episode_action_frequencies(record, n_actions):
    counts = np.bincount(record.actions, minlength=n_actions).astype(np.float64)
    return counts / counts.sum()


def printed_success_distribution(records, n_actions):
    """Mean over *all* episodes of ``v_e * P(A|e)``; has mass equal to the win rate."""
    if not records:
        raise InputError("no episodes")
    total = np.zeros(n_actions)
    for r in records:
        if r.goal:
            total += episode_action_frequencies(r, n_actions)
    return total / len(records)


def success_action_distribution(records, n_actions):
    """Average per-episode action frequencies over the successful episodes only."""
    wins = [r for r in records if r.goal]
    if not wins:
        raise NoSuccessError("no successful episodes to derive an action distribution from")
    dist = np.mean([episode_action_frequencies(r, n_actions) for r in wins], axis=0)
    return dist / dist.sum()


@dataclass
class SamplingReport:
    successes: int
    episodes: int
    distribution: list
    printed_distribution: list
    post_counts: list
    pre_counts: list
    size: int
    fallback: bool = False
    redistributed: list = field(default_factory=list)

    @property
    def win_rate(self):
        return self.successes / self.episodes if self.episodes else 0.0

    def to_dict(self):
        return asdict(self)


def _weights_over_available(weights, available, label, notes):
    """Move weight off actions with no transitions onto the ones that have some."""
    w = np.where(available, weights, 0.0)
    for a in np.flatnonzero((weights > 0) & ~available):
        notes.append(f"{label}:{a}")
    if w.sum() <= 0:
        w = available.astype(np.float64)
    return w / w.sum()


def _draw(pool, weights, n, rng, n_actions, label, notes):
    counts = np.zeros(n_actions, dtype=np.int64)
    if n == 0:
        return pool.take(np.array([], dtype=np.int64)), counts
    by_action = [np.flatnonzero(pool.action == a) for a in range(n_actions)]
    available = np.array([len(ix) > 0 for ix in by_action])
    if not available.any():
        raise InputError(f"empty {label} pool")
    w = _weights_over_available(np.asarray(weights, dtype=np.float64), available, label, notes)
    counts = rng.multinomial(n, w)
    picks = [rng.choice(by_action[a], size=counts[a], replace=True) for a in range(n_actions) if counts[a]]
    return pool.take(np.concatenate(picks)), counts


def build_training_set(pre, records, budget, rng, n_actions, take_all=False):
    """Mix successful-rollout transitions and pre-demonstrations into one set.

    Returns ``(transitions, report)``.  With no successful episode the result
    is the whole pre-demonstration set.
    """
    if len(pre) == 0:
        raise InputError("pre-demonstrations are empty")
    if budget < 1:
        raise InputError("sampling budget must be positive")
    rng = np.random.default_rng(rng)
    wins = [r for r in records if r.goal]
    printed = printed_success_distribution(records, n_actions) if records else np.zeros(n_actions)
    pre_hist = np.bincount(pre.action, minlength=n_actions)
    if not wins:
        report = SamplingReport(
            0, len(records), [0.0] * n_actions, printed.tolist(), [0] * n_actions,
            pre_hist.tolist(), len(pre), fallback=True,
        )
        return pre, report

    dist = success_action_distribution(records, n_actions)
    n_post = int(np.floor(len(wins) / len(records) * budget))
    notes = []
    post_pool = TransitionSet.concat([r.transitions for r in wins])
    if take_all:
        post = post_pool
        post_counts = np.bincount(post.action, minlength=n_actions)
    else:
        post, post_counts = _draw(post_pool, dist, n_post, rng, n_actions, "post", notes)
    pre_part, pre_counts = _draw(pre, 1.0 - dist, budget - n_post, rng, n_actions, "pre", notes)
    out = TransitionSet.concat([post, pre_part])
    report = SamplingReport(
        len(wins), len(records), dist.tolist(), printed.tolist(), post_counts.tolist(),
        pre_counts.tolist(), len(out), redistributed=notes,
    )
    return out, report
