"""All eight attention/sampling/exploration combinations on a maze.

Defaults reproduce the 5x5 ablation used for the ordering check: 100
demonstrated mazes, three master seeds, evaluation on the demonstrated pool.
The CSV has one row per (combination, seed) plus per-combination means.

    python3 scripts/maze_ablation.py --env maze5 --seeds 0 1 2
"""

import argparse
import os
import sys

from iupe.cli import main as cli


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--env", default="maze5")
    parser.add_argument("--seeds", nargs="+", default=["0", "1", "2"])
    parser.add_argument("--alpha", default="20")
    parser.add_argument("--demo-seed", default="7")
    parser.add_argument("--eval-pool", default="demo", choices=["demo", "heldout"])
    parser.add_argument("--out", default="runs/ablation")
    args = parser.parse_args()

    demos = os.path.join(args.out, f"demos_{args.env}.jsonl")
    if not os.path.exists(demos):
        code = cli(["gen-demos", "--env", args.env, "--seed", args.demo_seed, "--out", demos])
        if code:
            return code
    return cli([
        "ablate", "--env", args.env, "--demos", demos, "--seeds", *args.seeds, "--alpha", args.alpha,
        "--eval-pool", args.eval_pool, "--out", os.path.join(args.out, f"ablation_{args.env}.csv"),
    ])


if __name__ == "__main__":
    sys.exit(main())
