"""Run any of the six positioning schemes on epoch-grouped observations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import EkfConfig, ekf_run, wls_position
from .errors import DivergenceError, GeometryError, InsufficientObservationsError
from .gnc import GncSchedule, irls_solve, run_gnc
from .graph import DopplerFactorConfig, SolveOptions, build_graph, pr_residuals, solve
from .obs_model import EpochState, SigmaModelConfig, doppler_wls_velocity, filter_observations

log = logging.getLogger(__name__)

METHODS = ("wls", "ekf", "fgo", "fgo-cauchy", "fgo-gm", "fgo-gnc")


@dataclass(frozen=True)
class RunConfig:
    method: str = "fgo-gnc"
    c: float = 2.0
    decay: float = 1.4
    init_multiplier: float = 3.0
    paper_literal_weights: bool = False
    sigma0: float = 1.0
    snr_threshold: float = 45.0
    snr_scale: float = 30.0
    dv_sigma: float = 0.1
    min_elevation_deg: float = 0.0
    min_cn0: float = 0.0
    ekf_vel_psd: float = 1.0
    ekf_clk_bias_psd: float = 1.0
    ekf_clk_drift_psd: float = 0.1
    ekf_range_rate_sigma: float = 0.1
    max_outer_iterations: int = 50
    cost_tolerance: float = 1e-8
    initial_damping: float = 1e-4
    irls_max_rounds: int = 30
    seed: int = 0  # solvers are deterministic; kept so run configs can pin it

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")

    @property
    def sigma_cfg(self) -> SigmaModelConfig:
        return SigmaModelConfig(self.sigma0, self.snr_threshold, self.snr_scale)

    @property
    def solve_options(self) -> SolveOptions:
        return SolveOptions(self.max_outer_iterations, self.cost_tolerance, self.initial_damping)

    @property
    def schedule(self) -> GncSchedule:
        return GncSchedule(c_gm=self.c, decay=self.decay, init_multiplier=self.init_multiplier,
                           paper_literal_weights=self.paper_literal_weights)

    @property
    def ekf_config(self) -> EkfConfig:
        return EkfConfig(vel_psd=self.ekf_vel_psd, clk_bias_psd=self.ekf_clk_bias_psd,
                         clk_drift_psd=self.ekf_clk_drift_psd,
                         range_rate_sigma=self.ekf_range_rate_sigma)


@dataclass
class MethodResult:
    method: str
    states: list
    keys: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    residuals: np.ndarray | None = None    # whitened, final states
    residuals_m: np.ndarray | None = None
    weights: np.ndarray | None = None
    rounds: list = field(default_factory=list)  # (index, weights, residuals_m)
    trace: object = None
    graph: object = None


def screen_epochs(epochs, cfg: RunConfig):
    """Apply the elevation/C/N0 thresholds using each epoch's WLS fix."""
    if cfg.min_elevation_deg <= 0 and cfg.min_cn0 <= 0:
        return epochs
    out, removed, prev = [], 0, None
    for ep in epochs:
        try:
            prev = wls_position(ep, cfg.sigma_cfg, init=prev).pos
        except (InsufficientObservationsError, GeometryError, DivergenceError):
            if prev is None:
                out.append(ep)
                continue
        kept, n = filter_observations(ep, prev, math.radians(cfg.min_elevation_deg), cfg.min_cn0)
        removed += n
        if kept:
            out.append(kept)
    log.info("screening removed %d observations", removed)
    return out


def _run_wls(epochs, cfg):
    states, prev = [], None
    for k, ep in enumerate(epochs):
        try:
            fix = wls_position(ep, cfg.sigma_cfg, init=prev)
        except (InsufficientObservationsError, GeometryError, DivergenceError) as exc:
            log.warning("epoch %d skipped: %s", k, exc)
            continue
        prev = fix.pos
        try:
            vel, drift = doppler_wls_velocity(ep, fix.pos)
        except (InsufficientObservationsError, GeometryError):
            vel, drift = np.zeros(3), 0.0
        states.append(EpochState(ep[0].t, fix.pos, vel, fix.clk_bias, drift))
    if not states:
        raise GeometryError("no epoch admits a WLS fix")
    return MethodResult("wls", states)


def run_method(epochs, cfg: RunConfig = RunConfig(), method: str | None = None) -> MethodResult:
    method = cfg.method if method is None else method
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    epochs = screen_epochs(epochs, cfg)
    if method == "wls":
        return _run_wls(epochs, cfg)
    if method == "ekf":
        states, _ = ekf_run(epochs, cfg.ekf_config, cfg.sigma_cfg)
        return MethodResult("ekf", states)

    graph = build_graph(epochs, cfg.sigma_cfg, DopplerFactorConfig(cfg.dv_sigma))
    res = MethodResult(method, [], keys=graph.pr_keys, labels=list(graph.pr_labels), graph=graph)
    if method == "fgo":
        res.states, rep = solve(graph, None, None, cfg.solve_options)
        res.residuals, res.residuals_m = rep.residuals, rep.residuals_m
    elif method == "fgo-gnc":
        res.states, w, trace = run_gnc(graph, cfg.solve_options, cfg.schedule)
        last = trace.rounds[-1]
        res.weights, res.trace = w.values, trace
        res.residuals, res.residuals_m = last.residuals, last.residuals_m
        res.rounds = [(i, r.weights, r.residuals_m) for i, r in enumerate(trace.rounds, start=1)]
    else:
        kernel = "cauchy" if method == "fgo-cauchy" else "gm"
        res.states, w, itrace = irls_solve(graph, cfg.solve_options, kernel, cfg.c,
                                           max_rounds=cfg.irls_max_rounds)
        res.residuals, res.residuals_m = pr_residuals(graph, res.states)
        res.weights = w.values
        res.rounds = [(itrace.rounds, w.values, res.residuals_m)]
    return res
