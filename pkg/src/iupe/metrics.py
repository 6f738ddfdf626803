"""Average episodic reward, random/expert-normalized performance and baselines."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .envs import get_spec, make_env
from .errors import ConfigError, InputError
from .experts import expert_action, run_episode
from .models import constant_policy, rollout_many
from .seeding import derive_seed

BASELINE_CACHE_VERSION = 1


def aer(episode_rewards):
    """Mean total reward per episode."""
    rewards = np.asarray(episode_rewards, dtype=np.float64)
    if rewards.size == 0:
        raise InputError("AER of an empty episode list is undefined")
    return float(rewards.mean())


@dataclass(frozen=True)
class BaselinePair:
    random: float
    expert: float
    kind: str = ""
    episodes: int = 0
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.random) or not np.isfinite(self.expert) or self.random == self.expert:
            raise ConfigError(f"degenerate baselines: random={self.random}, expert={self.expert}")


def performance(policy_aer, baselines):
    """``0`` at the random policy's AER, ``1`` at the expert's."""
    return (policy_aer - baselines.random) / (baselines.expert - baselines.random)


def eval_seeds(n, seed):
    return [derive_seed(seed, "eval", i) for i in range(n)]


def expert_rewards(spec, seeds, layouts=None):
    env_layouts = layouts if layouts is not None else [None] * len(seeds)
    out = []
    for s, layout in zip(seeds, env_layouts):
        env = make_env(spec, layout=layout) if spec.kind == "maze" else make_env(spec)
        run_episode(env, expert_action, s)
        out.append(env.total_reward)
    return out


def random_rewards(spec, seeds, layouts=None):
    uniform = constant_policy(spec, np.zeros(spec.n_actions))
    return [r.reward for r in rollout_many(uniform, spec, "explore", seeds, layouts=layouts)]


def compute_baselines(spec, n=100, seed=0, layouts=None):
    """Random and expert AER over the same ``n`` evaluation episodes."""
    if isinstance(spec, str):
        spec = get_spec(spec)
    if n < 1:
        raise InputError("need at least one baseline episode")
    seeds = eval_seeds(n, seed)
    if layouts is not None:
        layouts = [layouts[i % len(layouts)] for i in range(n)]
    return BaselinePair(
        aer(random_rewards(spec, seeds, layouts)), aer(expert_rewards(spec, seeds, layouts)), spec.name, n, seed
    )


def cached_baselines(path, spec, n=100, seed=0, layouts=None, tag="heldout"):
    """``compute_baselines`` memoized in a small JSON file keyed by env, n, seed and pool."""
    if isinstance(spec, str):
        spec = get_spec(spec)
    key = f"{spec.name}|{n}|{seed}|{tag}"
    cache = {"version": BASELINE_CACHE_VERSION, "entries": {}}
    if path and os.path.exists(path):
        with open(path) as fh:
            loaded = json.load(fh)
        if loaded.get("version") == BASELINE_CACHE_VERSION:
            cache = loaded
    if key in cache["entries"]:
        return BaselinePair(**cache["entries"][key])
    pair = compute_baselines(spec, n, seed, layouts)
    if path:
        cache["entries"][key] = asdict(pair)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(cache, fh, indent=1, sort_keys=True)
        os.replace(tmp, path)
    return pair
