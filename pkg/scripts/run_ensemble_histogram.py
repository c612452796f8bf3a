#!/usr/bin/env python3
"""Final-negativity distributions for a five-atom chain, with and without
the upper decay channel. Two ensemble runs; each writes ensemble.csv and
summary.json with the histogram and the average marker value."""

import sys

from rydosc.cli import main

BASE = ["ensemble", "--initial", "all_up", "--traj", "2000",
        "--workers", "1", "--seed", "55",
        "--set", "n_atoms=5", "--set", "interaction_v=2",
        "--set", "gamma_down=0.2"]


def run(out_root: str) -> int:
    for label, gamma_up in (("with_up_decay", 0.2), ("no_up_decay", 0.0)):
        code = main(BASE + ["--set", f"gamma_up={gamma_up}",
                            "--out", f"{out_root}/{label}"])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "runs/histogram"))
