#!/usr/bin/env python3
"""Coherent benchmark run: two atoms at V = 10 J from each of the two
analytically solvable initial states. Writes coherent.csv (full model,
effective model and closed forms side by side) per initial state."""

import sys

from rydosc.cli import main

BASE = ["coherent", "--set", "n_atoms=2", "--set", "interaction_v=10",
        "--points", "600"]


def run(out_root: str) -> int:
    for initial in ("psi1", "psi2"):
        code = main(BASE + ["--initial", initial,
                            "--out", f"{out_root}/coherent_{initial}"])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "runs"))
