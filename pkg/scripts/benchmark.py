"""Six-method positioning table on a reference scenario over several seeds.

    python3 scripts/benchmark.py --scenario C --seeds 10
"""

import argparse

import numpy as np

from gncfgo.diagnostics import enu_error_stats, improvement
from gncfgo.errors import GnssError
from gncfgo.pipeline import METHODS, RunConfig, run_method
from gncfgo.sim import reference_scenario, simulate

KEYS = ("mean_2d_m", "std_2d_m", "max_2d_m", "mean_3d_m", "std_3d_m", "max_3d_m")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="C")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--baseline", default="fgo", choices=METHODS)
    args = ap.parse_args()

    table = {m: {k: [] for k in KEYS} for m in METHODS}
    failures = {m: 0 for m in METHODS}
    for seed in range(args.seeds):
        truth, epochs, _ = simulate(reference_scenario(args.scenario, seed=seed))
        for m in METHODS:
            try:
                stats = enu_error_stats(run_method(epochs, RunConfig(method=m)).states,
                                        truth).stats()
            except GnssError:
                failures[m] += 1
                continue
            for k in KEYS:
                table[m][k].append(stats[k])

    base = np.mean(table[args.baseline]["mean_2d_m"])
    base3 = np.mean(table[args.baseline]["mean_3d_m"])
    print(f"scenario {args.scenario}, {args.seeds} seeds, averages of per-seed statistics")
    print(f"{'method':<11}" + "".join(f"{k:>11}" for k in KEYS) + f"{'impr 2D %':>11}"
          + f"{'impr 3D %':>11}{'fail':>6}")
    for m in METHODS:
        if not table[m]["mean_2d_m"]:
            print(f"{m:<11}{'Fail':>11}")
            continue
        row = [np.mean(table[m][k]) for k in KEYS]
        print(f"{m:<11}" + "".join(f"{v:11.2f}" for v in row)
              + f"{improvement(base, row[0]):11.2f}{improvement(base3, row[3]):11.2f}"
              + f"{failures[m]:6d}")


if __name__ == "__main__":
    main()
