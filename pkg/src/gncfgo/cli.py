"""Command-line front end.

Exit status: 0 success, 2 solver divergence or singular geometry, 3 input error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .diagnostics import enu_error_stats, gmm_fit, improvement, residual_histogram, weight_histogram
from .errors import DivergenceError, GeometryError
from .formats import InputError
from .pipeline import METHODS, RunConfig, run_method
from .sim import REFERENCE_SCENARIOS, Scenario, generate_scenario, synthesize_observations

log = logging.getLogger("gncfgo")

EXIT_OK = 0
EXIT_DIVERGENCE = 2
EXIT_INPUT = 3

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
               "debug": logging.DEBUG}


def cmd_simulate(args) -> int:
    if args.config:
        scenario = formats.parse_config(args.config, Scenario)
    else:
        scenario = REFERENCE_SCENARIOS[args.scenario]
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    try:
        geom = generate_scenario(scenario)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    epochs, budget = synthesize_observations(geom)
    formats.write_observations(args.obs_out, epochs)
    formats.write_truth(args.truth_out, geom.truth)
    labels = [b.label for b in budget]
    print(f"epochs={len(epochs)} observations={len(budget)} satellites={scenario.n_sats} "
          f"nlos={labels.count('NLOS')} mp={labels.count('MP')} seed={scenario.seed}")
    return EXIT_OK


def _run_config(args) -> RunConfig:
    base = formats.parse_config(args.config, RunConfig) if args.config else RunConfig()
    flags = {
        "method": args.method, "c": args.c, "decay": args.decay,
        "init_multiplier": args.init_multiplier, "sigma0": args.sigma0,
        "dv_sigma": args.dv_sigma, "min_elevation_deg": args.min_elevation,
        "min_cn0": args.min_cn0,
    }
    flags = {k: v for k, v in flags.items() if v is not None}
    if args.paper_literal_weights:
        flags["paper_literal_weights"] = True
    try:
        return replace(base, **flags)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def cmd_solve(args) -> int:
    cfg = _run_config(args)
    epochs = formats.read_observations(args.obs)
    res = run_method(epochs, cfg)

    # everything is rendered before any file is written
    outputs = [(args.out, formats.solution_csv(res.states, res.method))]
    if res.weights is not None and args.weights_out:
        rounds = res.rounds if args.all_rounds else res.rounds[-1:]
        outputs.append((args.weights_out, formats.weights_csv(
            [(i, res.keys, w, r) for i, w, r in rounds])))
    if res.residuals is not None and args.residuals_out:
        outputs.append((args.residuals_out, formats.residuals_csv(
            res.keys, res.residuals_m, res.residuals, res.labels)))
    if res.trace is not None and args.trace_out:
        outputs.append((args.trace_out, formats.trace_csv(res.trace)))
    for path, text in outputs:
        formats.atomic_write(path, text)
    log.info("%s: %d epochs written to %s", res.method, len(res.states), args.out)
    return EXIT_OK


def evaluation_report(solution, truth, method, baseline=None, baseline_method=None) -> dict:
    rep = enu_error_stats(solution, truth)
    items = {"method": method, **rep.stats()}
    if baseline is not None:
        base = enu_error_stats(baseline, truth).stats()
        items["baseline_method"] = baseline_method
        items["improvement_2d_pct"] = improvement(base["mean_2d_m"], items["mean_2d_m"])
        items["improvement_3d_pct"] = improvement(base["mean_3d_m"], items["mean_3d_m"])
    return items


def cmd_eval(args) -> int:
    solution, method = formats.read_solution(args.solution)
    truth = formats.read_truth(args.truth)
    baseline, base_method = (formats.read_solution(args.baseline) if args.baseline
                             else (None, None))
    try:
        items = evaluation_report(solution, truth, method, baseline, base_method)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    formats.atomic_write(args.out, formats.report_text(items))
    return EXIT_OK


def _hist_rows(counts, edges):
    return [[formats.fmt(lo), formats.fmt(hi), int(c)]
            for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def cmd_diagnose(args) -> int:
    if not (args.weights or args.residuals or args.trace):
        raise InputError("diagnose needs at least one of --weights, --residuals, --trace")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []
    residuals = None
    if args.weights:
        rounds = formats.read_weights(args.weights)
        rows = []
        for idx, (_, w, _) in rounds.items():
            counts, edges = weight_histogram(w, args.bins)
            rows.extend([idx] + r for r in _hist_rows(counts, edges))
        outputs.append(("weight_histogram.csv",
                        formats.to_csv(["round", "bin_lo", "bin_hi", "count"], rows)))
        residuals = rounds[max(rounds)][2]
    if args.residuals:
        residuals, _ = formats.read_residuals(args.residuals)
    if residuals is not None:
        counts, edges = residual_histogram(residuals, args.bins)
        outputs.append(("residual_histogram.csv",
                        formats.to_csv(["bin_lo", "bin_hi", "count"], _hist_rows(counts, edges))))
        try:
            fit = gmm_fit(residuals, args.components, seed=args.seed)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        order = np.argsort(fit.means)
        rows = [[i, formats.fmt(fit.weights[j]), formats.fmt(fit.means[j]),
                 formats.fmt(fit.variances[j]), formats.fmt(fit.log_likelihood), fit.iterations]
                for i, j in enumerate(order, start=1)]
        outputs.append(("gmm.csv", formats.to_csv(
            ["component", "weight", "mean", "variance", "log_likelihood", "iterations"], rows)))
    if args.trace:
        trace = formats.read_trace(args.trace)
        thetas = [row[1] for row in trace]
        if any(b >= a for a, b in zip(thetas, thetas[1:])):
            raise InputError(f"{args.trace}: thetas are not strictly decreasing")
        rows = [[int(row[0])] + [formats.fmt(v) for v in row[1:]] for row in trace]
        outputs.append(("trace.csv", formats.to_csv(formats.TRACE_HEADER, rows)))
    for name, text in outputs:
        formats.atomic_write(out / name, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gncfgo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scenario")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="scenario key=value file")
    src.add_argument("--scenario", choices=sorted(REFERENCE_SCENARIOS), help="reference scenario")
    s.add_argument("--obs-out", required=True)
    s.add_argument("--truth-out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("solve", help="run a positioning method")
    s.add_argument("--method", choices=METHODS)
    s.add_argument("--obs", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="run configuration key=value file")
    s.add_argument("--weights-out")
    s.add_argument("--residuals-out")
    s.add_argument("--trace-out")
    s.add_argument("--all-rounds", action="store_true", help="write weights of every GNC round")
    s.add_argument("--c", type=float, help="kernel width")
    s.add_argument("--decay", type=float)
    s.add_argument("--init-multiplier", type=float)
    s.add_argument("--paper-literal-weights", action="store_true")
    s.add_argument("--sigma0", type=float)
    s.add_argument("--dv-sigma", type=float)
    s.add_argument("--min-elevation", type=float, help="degrees")
    s.add_argument("--min-cn0", type=float, help="dB-Hz")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eval", help="ENU error report against truth")
    s.add_argument("--solution", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--baseline")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("diagnose", help="histograms, GMM fit and GNC trace tables")
    s.add_argument("--weights")
    s.add_argument("--residuals")
    s.add_argument("--trace")
    s.add_argument("--components", type=int, default=3)
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    level = os.environ.get("LOG_LEVEL", "warn").lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.command == "solve" and args.method is None and args.config is None:
        args.method = "fgo-gnc"
    try:
        return args.func(args)
    except (DivergenceError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
