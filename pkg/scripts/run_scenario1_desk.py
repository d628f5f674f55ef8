#!/usr/bin/env python3
"""Desk-scale scenario-1 experiment: train 3 seeds with the baseline warm
start and 3 without, then evaluate each against the baseline-only rollout.

Writes everything under runs/scenario1_desk (or $ASVRL_OUT).
"""

import json
import sys
from pathlib import Path

from asvrl import cli
from asvrl.config import default_out_root

SEEDS = ["--seed", "0", "--seed", "1", "--seed", "2"]


def main() -> int:
    out = default_out_root() / "scenario1_desk"
    warm = out / "warm"
    cold = out / "cold"
    cli.main(["train", "--scenario", "1", "--desk-scale", *SEEDS,
              "--out", str(warm)])
    cli.main(["train", "--scenario", "1", "--desk-scale", "--no-baseline",
              *SEEDS, "--out", str(cold)])
    cli.main(["eval", "--scenario", "1", "--desk-scale",
              "--out", str(out / "eval_baseline")])
    for seed in (0, 1, 2):
        ckpt = warm / f"seed_{seed}" / "ckpt_final.bin"
        cli.main(["eval", "--scenario", "1", "--desk-scale",
                  "--out", str(out / f"eval_seed{seed}"),
                  "--checkpoint", str(ckpt)])
    print(json.dumps({"out": str(out)}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
