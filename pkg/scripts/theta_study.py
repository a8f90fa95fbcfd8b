"""Positioning error, objective and down-weighted count after each GNC round.

    python3 scripts/theta_study.py --scenario C --seed 0
"""

import argparse

import numpy as np

from gncfgo.diagnostics import enu_error_stats
from gncfgo.gnc import GncSchedule, run_gnc
from gncfgo.graph import build_graph, solve
from gncfgo.sim import reference_scenario, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="C")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--decay", type=float, default=1.4)
    ap.add_argument("--c", type=float, default=2.0)
    ap.add_argument("--threshold", type=float, default=0.4)
    args = ap.parse_args()

    truth, epochs, _ = simulate(reference_scenario(args.scenario, seed=args.seed))
    g = build_graph(epochs)
    fgo, _ = solve(g)
    fgo_err = enu_error_stats(fgo, truth).stats()["mean_2d_m"]
    _, _, trace = run_gnc(g, schedule=GncSchedule(c_gm=args.c, decay=args.decay))
    outlier = np.isin(g.pr_labels, ("NLOS", "MP"))

    print(f"plain FGO mean 2D error {fgo_err:.3f} m; theta0 = {trace.theta0:.3f}")
    print(f"{'round':>5}{'theta':>12}{'objective':>14}{'mean 2D m':>11}"
          f"{'w<thr':>7}{'outliers':>9}")
    for i, r in enumerate(trace.rounds, start=1):
        err = enu_error_stats(r.states, truth).stats()["mean_2d_m"]
        low = r.weights < args.threshold
        print(f"{i:5d}{r.theta:12.4f}{r.objective_final:14.3f}{err:11.3f}"
              f"{int(low.sum()):7d}{int((low & outlier).sum()):9d}")


if __name__ == "__main__":
    main()
