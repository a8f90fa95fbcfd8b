"""Robust kernels and graduated non-convexity over the factor graph.

The Geman-McClure kernel is handled through its outlier-process form: each
pseudorange factor carries a weight ``w`` and a penalty
``theta * c^2 * (sqrt(w) - 1)^2``. Minimising ``w * r^2 + penalty`` over
``w`` recovers the surrogate ``theta c^2 r^2 / (theta c^2 + r^2)``, and the
minimiser is ``(theta c^2 / (theta c^2 + r^2))^2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .graph import FactorGraph, SolveOptions, WeightSet, evaluate_objective, pr_residuals, solve

log = logging.getLogger(__name__)

W_MIN = 1e-6


def gm_loss(r, c_gm):
    r2 = np.square(r)
    return c_gm**2 * r2 / (c_gm**2 + r2)


def cauchy_loss(r, c):
    return 0.5 * c**2 * np.log1p(np.square(r) / c**2)


def cauchy_weight(r, c):
    return 1.0 / (1.0 + np.square(r) / c**2)


def gm_weight(r, c_gm):
    """IRLS weight of the Geman-McClure kernel (squared-ratio form)."""
    return (c_gm**2 / (c_gm**2 + np.square(r))) ** 2


def surrogate_loss(r, c_gm, theta):
    r2 = np.square(r)
    mu = theta * c_gm**2
    return mu * r2 / (mu + r2)


def penalty(omega, c_gm, theta):
    omega = np.asarray(omega, dtype=float)
    if np.any(~(omega > 0)) or np.any(omega > 1):
        raise ValueError("omega must lie in (0, 1]")
    return theta * c_gm**2 * (np.sqrt(omega) - 1.0) ** 2


def weight_gradient(omega, r, c_gm, theta):
    """Derivative of ``omega r^2 + penalty(omega)`` with respect to omega."""
    return np.square(r) + theta * c_gm**2 * (1.0 - 1.0 / np.sqrt(omega))


def update_weights(residuals, c_gm, theta, paper_literal=False, w_min=W_MIN):
    """Closed-form weight minimiser at fixed residuals.

    ``paper_literal`` switches to the unsquared ratio, which is not the
    stationary point of the penalised objective; kept for comparison runs.
    """
    if theta < 1:
        raise ValueError(f"theta must be >= 1, got {theta}")
    mu = theta * c_gm**2
    ratio = mu / (mu + np.square(residuals))
    w = ratio if paper_literal else ratio**2
    return np.clip(w, w_min, 1.0)


def initial_theta(e_max, c_gm, multiplier=3.0):
    if e_max < 0:
        raise ValueError("e_max must be non-negative")
    return max(multiplier * e_max**2 / c_gm**2, 1.0)


def theta_schedule(theta0, decay=1.4, theta_floor=1.0):
    """Decaying control parameters ending with one round at exactly 1."""
    if decay <= 1:
        raise ValueError("decay must exceed 1")
    out = []
    theta = float(theta0)
    while theta > theta_floor * (1 + 1e-12):
        out.append(theta)
        theta /= decay
    out.append(1.0)
    return out


@dataclass(frozen=True)
class GncSchedule:
    c_gm: float = 2.0
    decay: float = 1.4
    theta_floor: float = 1.0
    init_multiplier: float = 3.0
    theta_init: float | None = None  # overrides the max-residual rule
    paper_literal_weights: bool = False
    w_min: float = W_MIN

    def __post_init__(self):
        if self.c_gm <= 0:
            raise ValueError("c_gm must be positive")
        if self.decay <= 1:
            raise ValueError("decay must exceed 1")


def gnc_objective(graph, weights, states, c_gm, theta) -> float:
    """Data cost plus outlier-process penalty for the given weights."""
    w = weights.values if isinstance(weights, WeightSet) else np.asarray(weights)
    obj = evaluate_objective(graph, w, states)
    return obj.total + float(np.sum(penalty(w, c_gm, theta)))


@dataclass
class GncRound:
    theta: float
    objective_start: float
    objective_solved: float
    objective_final: float
    weights: np.ndarray
    residuals: np.ndarray
    residuals_m: np.ndarray
    states: list
    solver_iterations: int


@dataclass
class GncTrace:
    theta0: float
    rounds: list = field(default_factory=list)

    @property
    def thetas(self) -> list[float]:
        return [r.theta for r in self.rounds]

    def __len__(self):
        return len(self.rounds)


def run_gnc(graph: FactorGraph, opts: SolveOptions = SolveOptions(),
            schedule: GncSchedule = GncSchedule(), init=None):
    """Alternate weighted solves and closed-form weight updates.

    Starts from the WLS states (or ``init``) with unit weights. Each round
    solves the weighted graph, then re-weights every pseudorange factor at
    the round's theta. Returns ``(states, WeightSet, GncTrace)``.
    """
    states = graph.init_states if init is None else init
    if schedule.theta_init is not None:
        theta0 = float(schedule.theta_init)
    else:
        e0, _ = pr_residuals(graph, states)
        theta0 = initial_theta(float(np.max(np.abs(e0))), schedule.c_gm, schedule.init_multiplier)
    trace = GncTrace(theta0)
    w = np.ones(graph.n_pr)
    for theta in theta_schedule(theta0, schedule.decay, schedule.theta_floor):
        start = gnc_objective(graph, w, states, schedule.c_gm, theta)
        try:
            states, report = solve(graph, w, states, opts)
        except DivergenceError as exc:
            raise DivergenceError(f"GNC solve diverged at theta={theta:.6g}: {exc}",
                                  theta=theta) from exc
        solved = gnc_objective(graph, w, states, schedule.c_gm, theta)
        w = update_weights(report.residuals, schedule.c_gm, theta,
                           schedule.paper_literal_weights, schedule.w_min)
        final = gnc_objective(graph, w, states, schedule.c_gm, theta)
        trace.rounds.append(GncRound(theta, start, solved, final, w.copy(), report.residuals,
                                     report.residuals_m, states, report.iterations))
        log.debug("GNC theta=%.4g objective %.6g -> %.6g -> %.6g", theta, start, solved, final)
    return states, WeightSet(graph.pr_keys, w), trace


KERNELS = ("gm", "cauchy")


def robust_cost(graph, states, kernel, c) -> float:
    obj = evaluate_objective(graph, None, states)
    loss = gm_loss if kernel == "gm" else cauchy_loss
    return obj.dv_cost + float(np.sum(loss(obj.residuals, c)))


@dataclass
class IrlsTrace:
    costs: list = field(default_factory=list)
    converged: bool = False

    @property
    def rounds(self) -> int:
        return len(self.costs)


def irls_solve(graph: FactorGraph, opts: SolveOptions = SolveOptions(), kernel: str = "gm",
               c: float = 2.0, init=None, max_rounds: int = 30, tol: float = 1e-8):
    """Fixed-kernel iteratively reweighted least squares.

    Weights are computed from the residuals of the current states before
    each solve, so a poor initial guess directly shapes the first weights.
    The returned weights are those of the final states.
    Returns ``(states, WeightSet, IrlsTrace)``.
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    weight_fn = gm_weight if kernel == "gm" else cauchy_weight
    states = graph.init_states if init is None else init
    trace = IrlsTrace()
    prev = robust_cost(graph, states, kernel, c)
    r, _ = pr_residuals(graph, states)
    w = np.ones(graph.n_pr)
    for _ in range(max_rounds):
        w = np.clip(weight_fn(r, c), 0.0, 1.0)
        try:
            states, report = solve(graph, w, states, opts)
        except DivergenceError as exc:
            raise DivergenceError(f"{kernel} IRLS diverged: {exc}") from exc
        r = report.residuals
        cost = robust_cost(graph, states, kernel, c)
        if not math.isfinite(cost):
            raise DivergenceError(f"{kernel} IRLS produced a non-finite cost")
        trace.costs.append(cost)
        if abs(prev - cost) <= tol * max(abs(prev), 1e-300):
            trace.converged = True
            break
        prev = cost
    w = np.clip(weight_fn(r, c), 0.0, 1.0)
    return states, WeightSet(graph.pr_keys, w), trace
