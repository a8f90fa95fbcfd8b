"""Compare elevation/C/N0 screening with GNC re-weighting.

Screening removes observations at or below the thresholds before building
the graph; the table reports FGO and FGO-GNC errors for each threshold pair.

    python3 scripts/elevation_snr_filter.py --scenario D --seeds 5
"""

import argparse
import itertools

import numpy as np

from gncfgo.diagnostics import enu_error_stats
from gncfgo.errors import GnssError
from gncfgo.pipeline import RunConfig, run_method
from gncfgo.sim import reference_scenario, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="D")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--elevations", default="0,15,25", help="degrees, comma separated")
    ap.add_argument("--cn0", default="0,35,40", help="dB-Hz, comma separated")
    args = ap.parse_args()
    elevations = [float(v) for v in args.elevations.split(",")]
    cn0s = [float(v) for v in args.cn0.split(",")]

    data = [simulate(reference_scenario(args.scenario, seed=s)) for s in range(args.seeds)]
    print(f"scenario {args.scenario}, {args.seeds} seeds, mean 2D error (m)")
    print(f"{'elev deg':>9}{'cn0':>6}{'FGO':>9}{'FGO-GNC':>9}{'kept %':>8}")
    for el, cn0 in itertools.product(elevations, cn0s):
        errs = {"fgo": [], "fgo-gnc": []}
        kept = []
        for truth, epochs, _ in data:
            for m in errs:
                cfg = RunConfig(method=m, min_elevation_deg=el, min_cn0=cn0)
                try:
                    res = run_method(epochs, cfg)
                except GnssError:
                    errs[m].append(np.nan)
                    continue
                errs[m].append(enu_error_stats(res.states, truth).stats()["mean_2d_m"])
                if m == "fgo":
                    kept.append(res.graph.n_pr / sum(len(ep) for ep in epochs))
        print(f"{el:9.0f}{cn0:6.0f}{np.nanmean(errs['fgo']):9.2f}"
              f"{np.nanmean(errs['fgo-gnc']):9.2f}{100 * np.mean(kept):8.1f}")


if __name__ == "__main__":
    main()
