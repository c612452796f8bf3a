#!/usr/bin/env python3
"""One showcase quantum-jump trajectory for a five-atom chain at V = 3 J.

The default master seed below was found by scanning seed indices for a
trajectory in which every atom leaves the chain through the lower decay
channel, so all five spin excitations end up as oscillator photons and the
final negativity approaches the 2.5 bound. Pass a different seed to see a
typical (less lucky) trajectory.
"""

import sys

from rydosc.cli import main

# master seed whose trajectory has an all-lower-channel decay sequence
# (five down decays, no up or oscillator decays, final negativity ~1.8)
LUCKY_SEED = 154


def run(out_dir: str, seed: int) -> int:
    return main([
        "trajectory", "--out", out_dir, "--initial", "all_up",
        "--seed", str(seed),
        "--set", "n_atoms=5",
        "--set", "interaction_v=3",
        "--set", "gamma_up=0.2",
        "--set", "gamma_down=0.2",
    ])


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "runs/trajectory"
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else LUCKY_SEED
    sys.exit(run(out, seed))
