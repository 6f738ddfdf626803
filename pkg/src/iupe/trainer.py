"""The improvement-cycle driver, its BCO(alpha) special case, and the ablation grid."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .envs import get_spec, make_env, maze_layout_from_state
from .errors import ConfigError, IupeError
from .experts import make_pairs
from .metrics import aer, compute_baselines, eval_seeds, performance
from .models import PRE, TrainHyper, TransitionSet, label_pairs, rollout_many, train_idm, train_policy
from .sampler import SamplingReport, build_training_set
from .seeding import derive_rng, derive_seed

log = logging.getLogger(__name__)

# (label, attention, sampling, exploration) in reporting order
COMBINATIONS = (
    ("BCO", False, False, False),
    ("Attention", True, False, False),
    ("Sampling", False, True, False),
    ("Exploration", False, False, True),
    ("Attention+Sampling", True, True, False),
    ("Attention+Exploration", True, False, True),
    ("Sampling+Exploration", False, True, True),
    ("IUPE", True, True, True),
)


def combination_label(attention, sampling, exploration):
    for label, a, s, e in COMBINATIONS:
        if (a, s, e) == (attention, sampling, exploration):
            return label
    raise AssertionError("unreachable")


@dataclass
class RunConfig:
    env: str
    alpha: int = 20
    episodes: int | None = None
    pre_size: int | None = None
    budget: int | None = None
    hyper: TrainHyper = field(default_factory=TrainHyper)
    attention: bool = True
    sampling: bool = True
    exploration: bool = True
    seed: int = 0
    eval_episodes: int = 100
    eval_seed: int = 0
    eval_pool: str = "heldout"
    eval_every: int = 1
    warm_start: bool = True
    accumulate_post: bool = False
    take_all: bool = False

    def __post_init__(self):
        if isinstance(self.hyper, dict):
            h = dict(self.hyper)
            if "hidden" in h:
                h["hidden"] = tuple(h["hidden"])
            self.hyper = TrainHyper(**h)
        self.hyper = replace(self.hyper, attention=self.attention)
        spec = get_spec(self.env)
        maze = spec.kind == "maze"
        if self.episodes is None:
            self.episodes = 64 if maze else 32
        if self.pre_size is None:
            self.pre_size = 10000 if maze else 5000
        if self.budget is None:
            self.budget = self.pre_size
        if self.alpha < 1 or self.episodes < 1 or self.pre_size < 1 or self.budget < 1:
            raise ConfigError("alpha, episodes, pre_size and budget must all be positive")
        if self.eval_episodes < 1 or self.eval_every < 1:
            raise ConfigError("eval_episodes and eval_every must be positive")
        if self.eval_pool not in ("heldout", "demo"):
            raise ConfigError(f"eval_pool must be 'heldout' or 'demo', not {self.eval_pool!r}")

    @property
    def spec(self):
        return get_spec(self.env)

    @property
    def label(self):
        return combination_label(self.attention, self.sampling, self.exploration)

    def with_flags(self, attention, sampling, exploration):
        return replace(self, attention=attention, sampling=sampling, exploration=exploration)

    def to_dict(self):
        d = asdict(self)
        d["hyper"]["hidden"] = list(d["hyper"]["hidden"])
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class IterationReport:
    cycle: int
    idm_loss: float
    idm_accuracy: float
    pm_loss: float
    pm_accuracy: float
    success_rate: float
    successes: int
    non_map_fraction: float
    eval_aer: float | None
    eval_performance: float | None
    eval_success: float | None
    sampling: dict

    def to_dict(self):
        return asdict(self)


@dataclass
class RunResult:
    config: RunConfig
    reports: list
    idm: object
    pm: object
    baselines: object

    @property
    def final(self):
        return self.reports[-1]


def generate_pre_demos(spec, size, seed, layouts=None):
    """Transitions from a uniformly random policy, episodes cut at the env cap."""
    if isinstance(spec, str):
        spec = get_spec(spec)
    if size < 1:
        raise ConfigError("pre-demonstration size must be positive")
    rng = np.random.default_rng(seed)
    s, a, s_next = [], [], []
    episode = 0
    while len(a) < size:
        layout = None if layouts is None else layouts[episode % len(layouts)]
        env = make_env(spec, layout=layout) if spec.kind == "maze" else make_env(spec)
        state = env.reset(derive_seed(seed, "pre-episode", episode))
        episode += 1
        while not env.done and len(a) < size:
            action = int(rng.integers(spec.n_actions))
            nxt, _, _ = env.step(action)
            s.append(state)
            a.append(action)
            s_next.append(nxt)
            state = nxt
    return TransitionSet(np.array(s), np.array(a), np.array(s_next), PRE)


def check_demos(spec, demos):
    if not demos:
        raise ConfigError("no demonstrations supplied")
    for i, d in enumerate(demos):
        if d.shape != tuple(spec.state_shape):
            raise ConfigError(
                f"demonstration {i} has state shape {d.shape}, but {spec.name} states are {tuple(spec.state_shape)}"
            )


def _bco_report(records, n_actions, data):
    wins = sum(r.goal for r in records)
    counts = np.bincount(data.action, minlength=n_actions).tolist()
    return SamplingReport(wins, len(records), [], [], counts, [0] * n_actions, len(data))


def run(config, demos, baselines=None, progress=None):
    """Execute ``config.alpha`` improvement cycles and return a ``RunResult``.

    Each cycle trains the IDM on the current set, labels the expert pairs,
    clones them into the PM, rolls the PM out ``config.episodes`` times and
    rebuilds the IDM set from those rollouts.
    """
    spec = config.spec
    check_demos(spec, demos)
    n_actions = spec.n_actions
    hyper = replace(config.hyper, attention=config.attention)
    mode = "explore" if config.exploration else "map"
    seed = config.seed

    pairs = make_pairs(demos)
    pool = [maze_layout_from_state(d.states[0]) for d in demos] if spec.kind == "maze" else None
    pre = generate_pre_demos(spec, config.pre_size, derive_seed(seed, "pre"))

    eval_layouts = None
    if pool is not None and config.eval_pool == "demo":
        eval_layouts = [pool[i % len(pool)] for i in range(config.eval_episodes)]
    if baselines is None:
        baselines = compute_baselines(spec, config.eval_episodes, config.eval_seed, eval_layouts)
    test_seeds = eval_seeds(config.eval_episodes, config.eval_seed)

    training_set = pre
    idm = pm = None
    history = []
    reports = []
    for cycle in range(config.alpha):
        try:
            idm, idm_stats = train_idm(
                training_set, n_actions, hyper, warm=idm if config.warm_start else None,
                rng=derive_rng(seed, "idm", cycle),
            )
            labels = label_pairs(idm, pairs, mode, rng=derive_rng(seed, "label", cycle))
            pm, pm_stats = train_policy(
                pairs, labels, n_actions, hyper, warm=pm if config.warm_start else None,
                rng=derive_rng(seed, "pm", cycle),
            )
            roll_seeds = [derive_seed(seed, "rollout", cycle, e) for e in range(config.episodes)]
            roll_layouts = None
            if pool is not None:
                pick = derive_rng(seed, "rollout-layouts", cycle).integers(len(pool), size=config.episodes)
                roll_layouts = [pool[i] for i in pick]
            records = rollout_many(pm, spec, mode, roll_seeds, layouts=roll_layouts)

            eval_aer = eval_p = eval_success = None
            if (cycle + 1) % config.eval_every == 0 or cycle == config.alpha - 1:
                evals = rollout_many(pm, spec, "map", test_seeds, layouts=eval_layouts)
                eval_aer = aer([r.reward for r in evals])
                eval_p = performance(eval_aer, baselines)
                eval_success = float(np.mean([r.goal for r in evals]))

            history = history + records if config.accumulate_post else records
            if config.sampling:
                training_set, sampling = build_training_set(
                    pre, history, config.budget, derive_rng(seed, "sample", cycle), n_actions, config.take_all
                )
            else:
                training_set = TransitionSet.concat([r.transitions for r in history])
                sampling = _bco_report(history, n_actions, training_set)
        except IupeError as exc:
            raise type(exc)(f"cycle {cycle}: {exc}") from exc

        steps = sum(len(r) for r in records)
        wins = sum(r.goal for r in records)
        report = IterationReport(
            cycle=cycle,
            idm_loss=idm_stats["loss"],
            idm_accuracy=idm_stats["accuracy"],
            pm_loss=pm_stats["loss"],
            pm_accuracy=pm_stats["accuracy"],
            success_rate=wins / len(records),
            successes=int(wins),
            non_map_fraction=float(sum(r.non_map.sum() for r in records) / steps),
            eval_aer=eval_aer,
            eval_performance=eval_p,
            eval_success=eval_success,
            sampling=sampling.to_dict(),
        )
        reports.append(report)
        log.info(
            "%s seed=%d cycle=%d idm_acc=%.3f win=%.2f non_map=%.3f aer=%s",
            config.env, seed, cycle, report.idm_accuracy, report.success_rate,
            report.non_map_fraction, eval_aer,
        )
        if progress is not None:
            progress(report)
    return RunResult(config, reports, idm, pm, baselines)


def ablate(base, demos, seeds, baselines=None, progress=None):
    """Run every attention/sampling/exploration combination for every seed.

    Returns rows ``{"combination", "seed", "P", "AER"}`` ordered by seed, then
    combination.
    """
    rows = []
    for seed in seeds:
        for label, a, s, e in COMBINATIONS:
            cfg = replace(base.with_flags(a, s, e), seed=seed)
            result = run(cfg, demos, baselines=baselines)
            baselines = result.baselines
            rows.append(
                {"combination": label, "seed": seed, "P": result.final.eval_performance, "AER": result.final.eval_aer}
            )
            if progress is not None:
                progress(rows[-1])
    return rows


def mean_rows(rows):
    """Per-combination means across seeds, in reporting order."""
    out = []
    for label, *_ in COMBINATIONS:
        mine = [r for r in rows if r["combination"] == label]
        if mine:
            out.append(
                {
                    "combination": label,
                    "seed": "mean",
                    "P": float(np.mean([r["P"] for r in mine])),
                    "AER": float(np.mean([r["AER"] for r in mine])),
                }
            )
    return out
