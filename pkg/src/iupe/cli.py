"""Command-line front end: gen-demos, train, evaluate, ablate, report.

Exit codes: 0 success, 1 usage error, 2 data/config error, 3 runtime or
numerical error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import fields

import numpy as np

from .envs import ENV_NAMES, get_spec
from .errors import ConfigError, ExpertQualityError, InputError, IupeError, UsageError
from .experts import demos_to_text, read_demos, record_demonstrations
from .metrics import aer, cached_baselines, eval_seeds, performance
from .models import Model, TrainHyper, constant_policy, rollout_many
from .trainer import COMBINATIONS, RunConfig, ablate, mean_rows, run

log = logging.getLogger("iupe")

RUN_FORMAT = "iupe-run"
RUN_VERSION = 1
EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 1, 2, 3


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def write_atomic(path, data):
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def default_demo_count(spec):
    return 100 if spec.kind == "maze" else 10


# -- config assembly ------------------------------------------------------------------

RUN_KEYS = {f.name for f in fields(RunConfig)}
HYPER_KEYS = {f.name for f in fields(TrainHyper)}


def load_config_file(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    unknown = set(data) - RUN_KEYS - {"demos", "seeds", "demo_seed", "n_demos"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def build_run_config(args, file_cfg, seed):
    """Flags override the config file, which overrides built-in defaults."""
    cfg = {k: v for k, v in file_cfg.items() if k in RUN_KEYS}
    hyper = dict(cfg.pop("hyper", {}) or {})
    unknown = set(hyper) - HYPER_KEYS
    if unknown:
        raise ConfigError(f"unknown hyperparameters: {', '.join(sorted(unknown))}")
    for key in ("alpha", "episodes", "pre_size", "budget", "eval_episodes", "eval_seed", "eval_pool", "eval_every"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    for key in ("idm_epochs", "pm_epochs", "batch_size", "lr"):
        value = getattr(args, key, None)
        if value is not None:
            hyper[key] = value
    if getattr(args, "hidden", None):
        hyper["hidden"] = tuple(args.hidden)
    if "hidden" in hyper:
        hyper["hidden"] = tuple(hyper["hidden"])
    for flag in ("attention", "sampling", "exploration"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[flag] = value
    if getattr(args, "cold_start", False):
        cfg["warm_start"] = False
    cfg["env"] = args.env
    cfg["seed"] = seed
    cfg["hyper"] = TrainHyper(**hyper)
    try:
        return RunConfig(**cfg)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def resolve_demos(args, file_cfg, spec):
    """Load demonstrations from a file, or record fresh ones from the expert."""
    path = args.demos or file_cfg.get("demos")
    if path:
        demos = read_demos(path)
        with open(path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        source = {"path": os.path.abspath(path), "sha256": digest}
    else:
        n = args.n_demos or file_cfg.get("n_demos") or default_demo_count(spec)
        demo_seed = args.demo_seed if args.demo_seed is not None else file_cfg.get("demo_seed", 0)
        demos = record_demonstrations(spec, n, demo_seed)
        source = {"generated": True, "n": n, "seed": demo_seed}
    for i, d in enumerate(demos):
        if d.kind != spec.name or d.shape != tuple(spec.state_shape):
            raise ConfigError(
                f"demonstration {i} is {d.kind} with state shape {d.shape}; "
                f"{spec.name} needs shape {tuple(spec.state_shape)}"
            )
    return demos, source


def _seeds(args, file_cfg):
    if args.seeds:
        return list(args.seeds)
    if args.seed is not None:
        return [args.seed]
    return list(file_cfg.get("seeds", [0]))


# -- report files -------------------------------------------------------------------------


def run_report_text(result, demo_source, wall_clock):
    cfg = result.config
    header = {
        "format": RUN_FORMAT,
        "version": RUN_VERSION,
        "method": cfg.label,
        "baseline": "BCO" if cfg.label == "BCO" else None,
        "env": cfg.env,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "demos": demo_source,
        "baselines": {"random": result.baselines.random, "expert": result.baselines.expert},
    }
    lines = [json.dumps(header, sort_keys=True)]
    for rep in result.reports:
        lines.append(json.dumps({"type": "cycle", **rep.to_dict()}, sort_keys=True))
    final = result.final
    lines.append(
        json.dumps(
            {
                "type": "final",
                "eval_aer": final.eval_aer,
                "eval_performance": final.eval_performance,
                "eval_success": final.eval_success,
                "wall_clock_s": wall_clock,
            },
            sort_keys=True,
        )
    )
    return "\n".join(lines) + "\n"


def read_run_report(path):
    with open(path) as fh:
        try:
            lines = [json.loads(line) for line in fh if line.strip()]
        except json.JSONDecodeError as exc:
            raise InputError(f"{path} is not a run report: {exc}") from None
    if not lines or lines[0].get("format") != RUN_FORMAT:
        raise InputError(f"{path} is not a run report")
    cycles = [line for line in lines[1:] if line.get("type") == "cycle"]
    final = next((line for line in lines if line.get("type") == "final"), None)
    if final is None:
        raise InputError(f"{path} has no final record")
    return lines[0], cycles, final


# -- commands -----------------------------------------------------------------------------


def cmd_gen_demos(args):
    spec = get_spec(args.env)
    n = args.n if args.n is not None else default_demo_count(spec)
    if n < 0:
        raise UsageError("--n must be non-negative")
    seed = args.seed if args.seed is not None else 0
    demos = record_demonstrations(spec, n, seed)
    out = args.out or "."
    path = out if os.path.splitext(out)[1] else os.path.join(out, f"demos_{spec.name}_s{seed}.jsonl")
    write_atomic(path, demos_to_text(demos))
    print(f"wrote {len(demos)} trajectories to {path}")
    return 0


def cmd_train(args):
    spec = get_spec(args.env)
    file_cfg = load_config_file(args.config)
    demos, source = resolve_demos(args, file_cfg, spec)
    out = args.out or "runs"
    for seed in _seeds(args, file_cfg):
        cfg = build_run_config(args, file_cfg, seed)
        baselines = cached_baselines(
            os.path.join(out, "baselines.json"), spec, cfg.eval_episodes, cfg.eval_seed,
            layouts=_eval_layouts(cfg, demos), tag=_pool_tag(cfg, source),
        )
        start = time.time()
        result = run(cfg, demos, baselines=baselines)
        stem = f"{spec.name}_{cfg.label}_s{seed}"
        write_atomic(os.path.join(out, f"run_{stem}.jsonl"), run_report_text(result, source, time.time() - start))
        result.pm.save(os.path.join(out, f"pm_{stem}.npz"), env=spec.name, eval_mode="map")
        result.idm.save(os.path.join(out, f"idm_{stem}.npz"), env=spec.name)
        f = result.final
        print(f"{stem}: AER={f.eval_aer:.3f} P={f.eval_performance:.3f} solved={f.eval_success:.2f}")
    return 0


def _eval_layouts(cfg, demos):
    from .envs import maze_layout_from_state

    if cfg.spec.kind != "maze" or cfg.eval_pool != "demo":
        return None
    pool = [maze_layout_from_state(d.states[0]) for d in demos]
    return [pool[i % len(pool)] for i in range(cfg.eval_episodes)]


def _pool_tag(cfg, source):
    if cfg.spec.kind != "maze" or cfg.eval_pool != "demo":
        return "heldout"
    return "demo:" + (source.get("sha256") or f"gen-{source['n']}-{source['seed']}")


def cmd_evaluate(args):
    if args.n is None:
        args.n = 100
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    spec = get_spec(args.env)
    if args.checkpoint == "random":
        model, meta = constant_policy(spec, np.zeros(spec.n_actions)), {"eval_mode": "explore"}
    else:
        model, meta = Model.load(args.checkpoint)
    if meta.get("env") not in (None, spec.name):
        raise ConfigError(f"checkpoint was trained on {meta['env']}, not {spec.name}")
    mode = args.mode or meta.get("eval_mode", "map")
    seed = args.seed if args.seed is not None else 0
    cache = os.path.join(args.out, "baselines.json") if args.out else None
    baselines = cached_baselines(cache, spec, args.n, seed)
    records = rollout_many(model, spec, mode, eval_seeds(args.n, seed))
    value = aer([r.reward for r in records])
    record = {
        "env": spec.name,
        "checkpoint": args.checkpoint,
        "mode": mode,
        "n": args.n,
        "seed": seed,
        "AER": value,
        "P": performance(value, baselines),
        "success": float(np.mean([r.goal for r in records])),
        "baselines": {"random": baselines.random, "expert": baselines.expert},
    }
    print(f"{spec.name} AER={record['AER']:.3f} P={record['P']:.3f} success={record['success']:.2f}")
    print(json.dumps(record, sort_keys=True))
    if args.out:
        write_atomic(os.path.join(args.out, f"eval_{spec.name}_s{seed}.json"), json.dumps(record, sort_keys=True) + "\n")
    return 0


def ablation_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["combination", "seed", "P", "AER"], lineterminator="\n")
    writer.writeheader()
    for row in rows + mean_rows(rows):
        writer.writerow({k: (repr(float(v)) if k in ("P", "AER") else v) for k, v in row.items()})
    return buf.getvalue()


def cmd_ablate(args):
    spec = get_spec(args.env)
    file_cfg = load_config_file(args.config)
    demos, source = resolve_demos(args, file_cfg, spec)
    seeds = _seeds(args, file_cfg)
    base = build_run_config(args, file_cfg, seeds[0])
    out = args.out or "."
    path = out if out.endswith(".csv") else os.path.join(out, f"ablation_{spec.name}.csv")
    baselines = cached_baselines(
        os.path.join(os.path.dirname(path) or ".", "baselines.json"), spec, base.eval_episodes, base.eval_seed,
        layouts=_eval_layouts(base, demos), tag=_pool_tag(base, source),
    )
    rows = ablate(
        base, demos, seeds, baselines=baselines,
        progress=lambda r: log.info("%s seed=%s P=%.3f AER=%.3f", r["combination"], r["seed"], r["P"], r["AER"]),
    )
    text = ablation_csv(rows)
    write_atomic(path, text)
    print(text, end="")
    return 0


def cmd_report(args):
    runs = [read_run_report(p) for p in args.files]
    groups = {}
    series = []
    for header, cycles, final in runs:
        key = (header["env"], header["method"])
        groups.setdefault(key, []).append(final)
        for c in cycles:
            series.append(
                {
                    "env": header["env"],
                    "method": header["method"],
                    "seed": header["seed"],
                    "cycle": c["cycle"],
                    "non_map_fraction": c["non_map_fraction"],
                    "success_rate": c["success_rate"],
                }
            )
    table = []
    for (env, method), finals in sorted(groups.items()):
        table.append(
            {
                "env": env,
                "method": method,
                "runs": len(finals),
                "P": float(np.mean([f["eval_performance"] for f in finals])),
                "AER": float(np.mean([f["eval_aer"] for f in finals])),
            }
        )
    print(f"{'env':<12} {'method':<24} {'runs':>4} {'P':>8} {'AER':>10}")
    for row in table:
        print(f"{row['env']:<12} {row['method']:<24} {row['runs']:>4} {row['P']:>8.3f} {row['AER']:>10.3f}")
    if args.out:
        for name, rows, cols in (
            ("report.csv", table, ["env", "method", "runs", "P", "AER"]),
            ("series.csv", series, ["env", "method", "seed", "cycle", "non_map_fraction", "success_rate"]),
        ):
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
            write_atomic(os.path.join(args.out, name), buf.getvalue())
    return 0


# -- parser -----------------------------------------------------------------------------


def _add_run_options(p):
    p.add_argument("--demos", help="demonstration file (default: record fresh expert demos)")
    p.add_argument("--n-demos", type=int, help="expert episodes to record when --demos is absent")
    p.add_argument("--demo-seed", type=int)
    p.add_argument("--seeds", type=int, nargs="+", help="master seeds (one run each)")
    p.add_argument("--alpha", type=int, help="improvement cycles")
    p.add_argument("--episodes", type=int, help="policy rollouts per cycle")
    p.add_argument("--pre-size", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--eval-episodes", type=int)
    p.add_argument("--eval-seed", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--eval-pool", choices=["heldout", "demo"])
    p.add_argument("--idm-epochs", type=int)
    p.add_argument("--pm-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--cold-start", action="store_true", help="reinitialize both models every cycle")


def build_parser():
    # SUPPRESS lets the flags appear before or after the subcommand without the
    # subparser's defaults clobbering a value given up front
    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config file", default=argparse.SUPPRESS)
    common.add_argument("--out", help="output directory (or file for gen-demos / ablate)", default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = ArgumentParser(prog="iupe", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("gen-demos", parents=[common], help="record expert demonstrations")
    p.add_argument("--env", required=True, choices=ENV_NAMES)
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("train", parents=[common], help="run the improvement cycles")
    p.add_argument("--env", required=True, choices=ENV_NAMES)
    _add_run_options(p)
    feats = p.add_argument_group("features")
    feats.add_argument("--all-features", action="store_true", help="attention, sampling and exploration on")
    for flag in ("attention", "sampling", "exploration"):
        feats.add_argument(f"--{flag}", dest=flag, action="store_true", default=None)
        feats.add_argument(f"--no-{flag}", dest=flag, action="store_false")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a policy checkpoint")
    p.add_argument("--checkpoint", required=True, help="PM checkpoint, or 'random'")
    p.add_argument("--env", required=True, choices=ENV_NAMES)
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=["map", "explore"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common], help="all eight feature combinations")
    p.add_argument("--env", required=True, choices=ENV_NAMES)
    _add_run_options(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", parents=[common], help="aggregate run reports")
    p.add_argument("files", nargs="+")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("seed", None), ("config", None), ("out", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    if getattr(args, "all_features", False):
        args.attention = args.sampling = args.exploration = True
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InputError, ExpertQualityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IupeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
