#!/usr/bin/env python3
"""Desk-scale sensitivity sweep over the collision-reward steepness c:
trains and evaluates the obstacle scenario per value and reports the median
minimum clearance for each (smaller c should avoid earlier and clear wider).
"""

import sys

from asvrl import cli
from asvrl.config import default_out_root


def main() -> int:
    out = default_out_root() / "c_sweep_desk"
    return cli.main(["sweep", "--desk-scale", "--seed", "0", "--seed", "1",
                     "--seed", "2", "--out", str(out)])


if __name__ == "__main__":
    sys.exit(main())
