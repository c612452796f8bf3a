#!/usr/bin/env python3
"""Post-selected ensemble with oscillator decay: keep only trajectories
whose chain fully decayed within 0.3 of the oscillator lifetime. Writes
ensemble.csv and summary.json with both the unselected and the
post-selected statistics."""

import sys

from rydosc.cli import main

KAPPA = 0.001
CUTOFF = 0.3 / KAPPA


def run(out_dir: str, n_traj: int) -> int:
    return main([
        "ensemble", "--out", out_dir, "--initial", "all_up",
        "--traj", str(n_traj), "--workers", "1", "--seed", "77",
        "--cutoff", str(CUTOFF),
        "--set", "n_atoms=5", "--set", "interaction_v=2",
        "--set", "gamma_up=0.001", "--set", "gamma_down=0.02",
        "--set", f"kappa={KAPPA}", "--set", "t_max=4000",
    ])


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/post_selection"
    n = int(sys.argv[2]) if len(sys.argv) > 2 else 3000
    sys.exit(run(out, n))
