"""Write the uniform-random policy checkpoints shipped in checkpoints/.

The policy has zero weights and zero bias, so in explore mode every action is
equally likely regardless of the state.
"""

import argparse
import os

import numpy as np

from iupe.envs import ENV_NAMES, get_spec
from iupe.models import constant_policy


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "checkpoints"))
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name in ENV_NAMES:
        spec = get_spec(name)
        path = os.path.join(args.out, f"random_{name}.npz")
        constant_policy(spec, np.zeros(spec.n_actions)).save(path, env=name, eval_mode="explore")
        print(path)


if __name__ == "__main__":
    main()
