"""Scripted experts and the state-only demonstration recorder.

Recorded trajectories keep states only; the expert's actions never leave
``record_demonstrations``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .envs import bfs_path, get_spec, goal_reached, make_env
from .errors import DemoFormatError, ExpertQualityError, InputError
from .seeding import derive_seed

DEMO_FORMAT = "iupe-demos"
DEMO_VERSION = 1
MAX_FAILED_ATTEMPTS = 100


def expert_action(env):
    """Action chosen by the scripted expert for the environment's current state."""
    kind = env.spec.kind
    if kind == "cartpole":
        _, _, theta, theta_dot = env.state
        return int(theta + 0.5 * theta_dot > 0)
    if kind == "mountaincar":
        return 2 if env.velocity >= 0 else 0
    if kind == "acrobot":
        # positive torque on the elbow decelerates the shoulder in this frame
        return 0 if env.state[2] >= 0 else 2
    if kind == "maze":
        return bfs_path(env.layout, env.agent)[0]
    raise InputError(f"no expert for {kind!r}")


def random_action(env, rng):
    return int(rng.integers(env.spec.n_actions))


@dataclass
class Trajectory:
    kind: str
    states: np.ndarray
    reward: float | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if len(self.states) < 2:
            raise InputError("a trajectory needs at least two states")

    @property
    def shape(self):
        return tuple(self.states.shape[1:])

    def __len__(self):
        return len(self.states)


@dataclass
class StatePairSet:
    s: np.ndarray
    s_next: np.ndarray
    trajectory: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.s)


def run_episode(env, policy, seed):
    """Roll ``policy(env)`` from ``reset(seed)``; returns the list of encoded states."""
    states = [env.reset(seed)]
    while not env.done:
        s, _, _ = env.step(policy(env))
        states.append(s)
    return states


def record_demonstrations(spec, n_episodes, seed, expert=expert_action):
    """Collect ``n_episodes`` goal-reaching expert trajectories (states only)."""
    if isinstance(spec, str):
        spec = get_spec(spec)
    env = make_env(spec)
    demos = []
    failures = 0
    attempt = 0
    while len(demos) < n_episodes:
        states = run_episode(env, expert, derive_seed(seed, "demo", attempt))
        attempt += 1
        if goal_reached(spec, env):
            demos.append(Trajectory(spec.name, np.array(states), env.total_reward))
            failures = 0
        else:
            failures += 1
            if failures >= MAX_FAILED_ATTEMPTS:
                raise ExpertQualityError(
                    f"expert failed {MAX_FAILED_ATTEMPTS} consecutive episodes on {spec.name}"
                )
    return demos


def make_pairs(demos):
    """All adjacent ``(s_t, s_t+1)`` pairs across trajectories, in order."""
    if not demos:
        raise InputError("no demonstrations to pair")
    s = np.concatenate([d.states[:-1] for d in demos])
    s_next = np.concatenate([d.states[1:] for d in demos])
    owner = np.concatenate([np.full(len(d) - 1, i) for i, d in enumerate(demos)])
    return StatePairSet(s, s_next, owner)


# -- demonstration files ----------------------------------------------------------


def demos_to_text(demos):
    lines = [json.dumps({"format": DEMO_FORMAT, "version": DEMO_VERSION, "count": len(demos)})]
    for d in demos:
        rec = {"kind": d.kind, "shape": list(d.shape), "states": [row.ravel().tolist() for row in d.states]}
        if d.reward is not None:
            rec["reward"] = d.reward
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def demos_from_text(text):
    lines = text.splitlines()
    if not lines:
        raise DemoFormatError("empty file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise DemoFormatError("header is not valid JSON", 1) from None
    if header.get("format") != DEMO_FORMAT:
        raise DemoFormatError("not a demonstration file", 1)
    if header.get("version") != DEMO_VERSION:
        raise DemoFormatError(f"unsupported version {header.get('version')}", 1)
    demos = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            kind, shape, rows = rec["kind"], tuple(rec["shape"]), rec["states"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise DemoFormatError(f"record {lineno - 1} is malformed", lineno) from None
        size = math.prod(shape)
        for t, row in enumerate(rows):
            if len(row) != size:
                raise DemoFormatError(
                    f"record {lineno - 1}, state {t}: expected {size} values, found {len(row)}", lineno
                )
        try:
            states = np.array(rows, dtype=np.float64).reshape((len(rows),) + shape)
            demos.append(Trajectory(kind, states, rec.get("reward")))
        except (InputError, ValueError) as exc:
            raise DemoFormatError(f"record {lineno - 1}: {exc}", lineno) from None
    if "count" in header and header["count"] != len(demos):
        raise DemoFormatError(f"header announces {header['count']} records, found {len(demos)}", len(lines))
    return demos


def write_demos(path, demos):
    with open(path, "w") as fh:
        fh.write(demos_to_text(demos))


def read_demos(path):
    with open(path) as fh:
        return demos_from_text(fh.read())
