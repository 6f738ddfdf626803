"""Print the per-cycle non-MAP fraction and success rate of a full run.

    python3 scripts/exploration_decay.py --env cartpole --seed 0
"""

import argparse

from iupe.envs import get_spec
from iupe.experts import record_demonstrations
from iupe.trainer import RunConfig, run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--env", default="cartpole")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--alpha", type=int, default=20)
    parser.add_argument("--demo-seed", type=int, default=7)
    args = parser.parse_args()

    spec = get_spec(args.env)
    demos = record_demonstrations(spec, 100 if spec.kind == "maze" else 10, args.demo_seed)
    result = run(RunConfig(args.env, alpha=args.alpha, seed=args.seed), demos)
    print("cycle  non_map  success  eval_aer")
    for r in result.reports:
        print(f"{r.cycle + 1:5d}  {r.non_map_fraction:7.4f}  {r.success_rate:7.3f}  {r.eval_aer:8.3f}")


if __name__ == "__main__":
    main()
