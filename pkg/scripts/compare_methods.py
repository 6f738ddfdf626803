"""Train IUPE and the BCO baseline on several environments and tabulate them.

Writes one run report and checkpoint per (env, method, seed) under --out, then
prints the aggregated table and writes report.csv / series.csv next to them.

    python3 scripts/compare_methods.py --envs cartpole mountaincar maze3 --seeds 0 1 2
"""

import argparse
import glob
import os
import sys

from iupe.cli import main as cli

METHOD_FLAGS = {
    "IUPE": ["--all-features"],
    "BCO": ["--no-attention", "--no-sampling", "--no-exploration"],
}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--envs", nargs="+", default=["cartpole", "mountaincar", "acrobot", "maze3", "maze5"])
    parser.add_argument("--seeds", nargs="+", default=["0", "1", "2"])
    parser.add_argument("--alpha", default="20")
    parser.add_argument("--demo-seed", default="7")
    parser.add_argument("--out", default="runs/compare")
    args = parser.parse_args()

    for env in args.envs:
        demos = os.path.join(args.out, f"demos_{env}.jsonl")
        if not os.path.exists(demos):
            code = cli(["gen-demos", "--env", env, "--seed", args.demo_seed, "--out", demos])
            if code:
                return code
        extra = ["--eval-pool", "demo"] if env in ("maze5", "maze10") else []
        for method, flags in METHOD_FLAGS.items():
            code = cli([
                "train", "--env", env, "--demos", demos, "--alpha", args.alpha,
                "--seeds", *args.seeds, "--out", args.out, *flags, *extra,
            ])
            if code:
                return code
    reports = sorted(glob.glob(os.path.join(args.out, "run_*.jsonl")))
    return cli(["report", *reports, "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
