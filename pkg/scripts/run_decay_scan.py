#!/usr/bin/env python3
"""Average final negativity against the lower decay rate for a three-atom
chain, followed by the log-normal fit of the resulting curve."""

import sys

import numpy as np

from rydosc.cli import main


def run(out_dir: str) -> int:
    gammas = ",".join(f"{g:.6g}" for g in np.logspace(np.log10(0.003), 0.0, 8))
    code = main([
        "scan", "--out", out_dir, "--initial", "all_up",
        "--gammas", gammas, "--traj", "500", "--workers", "1", "--seed", "21",
        "--set", "n_atoms=3", "--set", "interaction_v=2",
        "--set", "gamma_up=0.001",
    ])
    if code != 0:
        return code
    return main(["fit", "--scan", f"{out_dir}/scan.csv", "--out", out_dir])


if __name__ == "__main__":
    sys.exit(run(sys.argv[1] if len(sys.argv) > 1 else "runs/scan"))
