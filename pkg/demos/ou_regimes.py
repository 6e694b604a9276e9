"""Velocity-jump (OU) pair collisions: fast vs slow radius regimes.

The position of each particle integrates a stiff Ornstein-Uhlenbeck velocity;
with stiffness N and collision radius r_N ~ N^-alpha the collision rate scales
like r_N^(d-1) for alpha > 1/2 (ballistic, "fast" regime) and like r_N^(d-2)
for alpha < 1/2 (diffusive, "slow" regime).  This demo measures both doubling
exponents at a small budget and prints the comparison table.

Usage: python demos/ou_regimes.py [--paths 20000] [--stiffness 400]
"""

import argparse

import numpy as np

from coagmc.experiments import (
    OUPairConfig,
    experiment_ou_fast,
    experiment_ou_slow,
    time_window_indicator,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=20000)
    ap.add_argument("--stiffness", type=float, default=400.0)
    args = ap.parse_args()

    N = args.stiffness
    g = time_window_indicator(0.1, 1.0)
    rng = np.random.default_rng(7)

    fast = OUPairConfig(d=3, x1=np.zeros(3), x2=np.r_[0.5, 0, 0], N=N,
                        r_N=0.49 * N ** -0.55, t0=0.1, t1=1.0, alpha=0.55)
    slow = OUPairConfig(d=3, x1=np.zeros(3), x2=np.r_[1.0, 0, 0], N=N,
                        r_N=2.0 * N ** -0.40, t0=0.1, t1=1.0, alpha=0.40)

    for name, rows in (("fast", experiment_ou_fast(fast, g, args.paths, rng=rng)),
                       ("slow", experiment_ou_slow(slow, g, args.paths, rng=rng))):
        print(f"-- {name} regime --")
        for row in rows:
            if row["regime"].endswith("doubling"):
                print(f"  doubling ratio {row['estimate']:.2f} "
                      f"(prediction {row['reference']:.0f})")
            else:
                ref = f"  reference {row['reference']:.4g}" if row["reference"] else ""
                print(f"  r_N={row['params'].split('r_N=')[1].split(';')[0]}: "
                      f"scaled estimate {row['estimate']:.4g} "
                      f"+- {row['se']:.2g}{ref}")


if __name__ == "__main__":
    main()
