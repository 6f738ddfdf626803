"""Inverse dynamics model (IDM), policy model (PM), labeling and rollouts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .envs import get_spec, make_env
from .errors import ConfigError, InputError
from .seeding import derive_rng

PRE, POST = "pre", "post"


@dataclass
class TransitionSet:
    """Column-oriented batch of ``(s_t, action, s_t+1)`` transitions.

    ``source`` tags each row as pre- or post-demonstration; a single string is
    broadcast to every row.  There is deliberately no reward column.
    """

    s: np.ndarray
    action: np.ndarray
    s_next: np.ndarray
    source: np.ndarray = PRE

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        self.s_next = np.asarray(self.s_next, dtype=np.float64)
        self.action = np.asarray(self.action, dtype=np.int64)
        if self.s.shape != self.s_next.shape or len(self.action) != len(self.s):
            raise InputError("transition columns disagree in shape")
        if isinstance(self.source, str):
            self.source = np.full(len(self.action), self.source)
        self.source = np.asarray(self.source, dtype="<U4")
        if self.source.shape != self.action.shape:
            raise InputError("source tags must match the number of transitions")

    def __len__(self):
        return len(self.action)

    def take(self, idx):
        return TransitionSet(self.s[idx], self.action[idx], self.s_next[idx], self.source[idx])

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            raise InputError("nothing to concatenate")
        return cls(
            np.concatenate([p.s for p in parts]),
            np.concatenate([p.action for p in parts]),
            np.concatenate([p.s_next for p in parts]),
            np.concatenate([p.source for p in parts]),
        )


@dataclass
class EpisodeRecord:
    """One policy episode.  ``states`` has one more row than ``actions``."""

    states: np.ndarray
    actions: np.ndarray
    goal: bool
    reward: float
    non_map: np.ndarray
    seed: int = 0

    @property
    def transitions(self):
        return TransitionSet(self.states[:-1], self.actions, self.states[1:], POST)

    def __len__(self):
        return len(self.actions)


# -- featurization -----------------------------------------------------------------


@dataclass
class Featurizer:
    """Maps raw states to network inputs.

    Vector states are standardized with statistics frozen at fit time.  Maze
    tensors have their wall-code channel unpacked into four binary planes.
    """

    kind: str
    mean: np.ndarray = None
    std: np.ndarray = None

    @classmethod
    def fit(cls, states):
        states = np.asarray(states, dtype=np.float64)
        if states.ndim == 4:
            return cls("maze")
        mean = states.mean(axis=0)
        std = states.std(axis=0)
        std = np.where(std < 1e-8, 1.0, std)
        return cls("vector", mean, std)

    def __call__(self, states):
        states = np.asarray(states, dtype=np.float64)
        if self.kind == "vector":
            if states.ndim != 2 or states.shape[1] != len(self.mean):
                raise ConfigError(f"expected vector states of width {len(self.mean)}, got {states.shape[1:]}")
            return (states - self.mean) / self.std
        if states.ndim != 4 or states.shape[1] != 3:
            raise ConfigError(f"expected maze tensors (3, N, N), got {states.shape[1:]}")
        codes = np.rint(states[:, 0] * 15).astype(np.int64)
        planes = (codes[..., None] >> np.arange(4)) & 1
        B = states.shape[0]
        return np.concatenate(
            [planes.reshape(B, -1).astype(np.float64), states[:, 1].reshape(B, -1), states[:, 2].reshape(B, -1)],
            axis=1,
        )

    def width(self, state_shape):
        if self.kind == "vector":
            return len(self.mean)
        return 6 * state_shape[-1] * state_shape[-2]

    def to_meta(self):
        if self.kind == "maze":
            return {"kind": "maze"}
        return {"kind": "vector", "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_meta(cls, meta):
        if meta["kind"] == "maze":
            return cls("maze")
        return cls("vector", np.array(meta["mean"]), np.array(meta["std"]))


@dataclass
class TrainHyper:
    hidden: tuple = (64, 64)
    attention: bool = True
    n_tokens: int = 4
    idm_epochs: int = 20
    pm_epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3


@dataclass
class Model:
    role: str
    params: nn.ParamSet
    featurizer: Featurizer
    opt: nn.AdamState = field(default=None, repr=False)

    @property
    def n_actions(self):
        return self.params.output_dim

    def inputs(self, s, s_next=None):
        if self.role == "idm":
            if s_next is None:
                raise ConfigError("the inverse dynamics model needs state pairs")
            return np.concatenate([self.featurizer(s), self.featurizer(s_next)], axis=1)
        return self.featurizer(s)

    def logits(self, s, s_next=None):
        return nn.forward(self.params, self.inputs(s, s_next))

    def probs(self, s, s_next=None):
        return nn.softmax(self.logits(s, s_next))

    def to_meta(self):
        return {"role": self.role, "featurizer": self.featurizer.to_meta()}

    def save(self, path, **extra):
        nn.save_params(path, self.params, {**self.to_meta(), **extra})

    @classmethod
    def load(cls, path):
        params, meta = nn.load_params(path)
        return cls(meta["role"], params, Featurizer.from_meta(meta["featurizer"])), meta


def _new_model(role, featurizer, in_width, n_actions, hyper, rng):
    params = nn.make_network(
        in_width, n_actions, hidden=hyper.hidden, attention=hyper.attention, n_tokens=hyper.n_tokens, rng=rng
    )
    return Model(role, params, featurizer)


def fit_supervised(model, X, y, epochs, hyper, rng):
    """Mini-batch Adam on cross-entropy; returns ``(mean last-epoch loss, accuracy)``."""
    if model.opt is None:
        model.opt = nn.AdamState.init(model.params)
    n = len(y)
    loss = float("nan")
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            batch_loss, grads = nn.cross_entropy_grad(model.params, X[idx], y[idx])
            nn.adam_step(model.params, grads, model.opt, lr=hyper.lr)
            total += batch_loss * len(idx)
        loss = total / n
    acc = float(np.mean(np.argmax(nn.forward(model.params, X), axis=1) == y)) if n else float("nan")
    return loss, acc


def train_idm(dataset, n_actions, hyper=None, warm=None, rng=None):
    """Train (or keep training) the inverse dynamics model on labeled transitions.

    Returns ``(model, stats)``; ``stats`` holds the final epoch's loss and the
    training accuracy.
    """
    hyper = hyper or TrainHyper()
    rng = np.random.default_rng(rng)
    if len(dataset) == 0:
        raise InputError("cannot train the inverse dynamics model on an empty dataset")
    if dataset.action.min() < 0 or dataset.action.max() >= n_actions:
        raise InputError(f"action labels must lie in [0, {n_actions})")
    if warm is None:
        feat = Featurizer.fit(np.concatenate([dataset.s, dataset.s_next]))
        model = _new_model("idm", feat, 2 * feat.width(dataset.s.shape[1:]), n_actions, hyper, rng)
    else:
        model = warm
    X = model.inputs(dataset.s, dataset.s_next)
    loss, acc = fit_supervised(model, X, dataset.action, hyper.idm_epochs, hyper, rng)
    return model, {"loss": loss, "accuracy": acc}


def choose(probs, mode, rng):
    """MAP (lowest index on ties) or sampled actions, one per row of ``probs``."""
    map_actions = np.argmax(probs, axis=1)
    if mode == "map":
        return map_actions
    if mode != "explore":
        raise ConfigError(f"unknown action-selection mode {mode!r}")
    return nn.sample_rows(probs, rng)


def label_pairs(idm, pairs, mode="explore", rng=None):
    """Predict the action behind every expert state pair."""
    if len(pairs) == 0:
        raise InputError("no state pairs to label")
    rng = np.random.default_rng(rng)
    return choose(idm.probs(pairs.s, pairs.s_next), mode, rng)


def train_policy(pairs, labels, n_actions, hyper=None, warm=None, rng=None):
    """Behavioral cloning of ``labels`` from the first state of each pair."""
    hyper = hyper or TrainHyper()
    rng = np.random.default_rng(rng)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(pairs):
        raise InputError(f"{len(labels)} labels for {len(pairs)} state pairs")
    if len(labels) == 0:
        raise InputError("cannot clone an empty dataset")
    if warm is None:
        feat = Featurizer.fit(pairs.s)
        model = _new_model("pm", feat, feat.width(pairs.s.shape[1:]), n_actions, hyper, rng)
    else:
        model = warm
    loss, acc = fit_supervised(model, model.inputs(pairs.s), labels, hyper.pm_epochs, hyper, rng)
    return model, {"loss": loss, "accuracy": acc}


# -- rollouts ----------------------------------------------------------------------


def rollout_many(policy, spec, mode, seeds, max_steps=None, layouts=None):
    """Run one episode per seed in lockstep, batching the policy forward passes.

    ``policy`` is a PM ``Model``.  Each episode draws its actions from its own
    rng stream, so results do not depend on how episodes are batched.  For
    mazes, ``layouts`` pins the layout of each episode instead of drawing one
    from its seed.
    """
    if isinstance(spec, str):
        spec = get_spec(spec)
    if policy.n_actions != spec.n_actions:
        raise ConfigError(f"policy has {policy.n_actions} actions, {spec.name} needs {spec.n_actions}")
    cap = spec.max_steps if max_steps is None else min(max_steps, spec.max_steps)
    if layouts is None:
        envs = [make_env(spec) for _ in seeds]
    else:
        if len(layouts) != len(seeds):
            raise ConfigError("need one layout per seed")
        envs = [make_env(spec, layout=layout) for layout in layouts]
    rngs = [derive_rng(seed, "act") for seed in seeds]
    states = [[env.reset(seed)] for env, seed in zip(envs, seeds)]
    actions = [[] for _ in seeds]
    flags = [[] for _ in seeds]
    active = list(range(len(seeds)))
    while active:
        probs = policy.probs(np.stack([states[i][-1] for i in active]))
        greedy = np.argmax(probs, axis=1)
        still = []
        for row, i in enumerate(active):
            a = int(greedy[row]) if mode == "map" else nn.sample_categorical(probs[row], rngs[i])
            s, _, done = envs[i].step(a)
            states[i].append(s)
            actions[i].append(a)
            flags[i].append(a != greedy[row])
            if not done and envs[i].steps < cap:
                still.append(i)
        active = still
    return [
        EpisodeRecord(
            np.array(states[i]),
            np.array(actions[i], dtype=np.int64),
            bool(envs[i].goal_reached()),
            float(envs[i].total_reward),
            np.array(flags[i], dtype=bool),
            int(seed),
        )
        for i, seed in enumerate(seeds)
    ]


def rollout(policy, spec, mode, seed, max_steps=None, layout=None):
    return rollout_many(policy, spec, mode, [seed], max_steps, None if layout is None else [layout])[0]


def constant_policy(spec, logits):
    """A PM whose output ignores the state (zero weights, fixed bias)."""
    if isinstance(spec, str):
        spec = get_spec(spec)
    width = 6 * spec.maze_size**2 if spec.kind == "maze" else spec.state_size
    params = nn.make_network(width, spec.n_actions, hidden=(), attention=False)
    params.layers[-1].W[:] = 0.0
    params.layers[-1].b[:] = np.asarray(logits, dtype=np.float64)
    if spec.kind == "maze":
        feat = Featurizer("maze")
    else:
        feat = Featurizer("vector", np.zeros(spec.state_size), np.ones(spec.state_size))
    return Model("pm", params, feat)

