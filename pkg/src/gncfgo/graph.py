"""Pseudorange/Doppler factor graph over a chain of receiver states.

Each epoch contributes four unknowns ``[x, y, z, clk_bias]``. Pseudorange
factors touch one epoch; Doppler-velocity factors tie the positions of
consecutive epochs. The normal equations are therefore block tridiagonal
with 4x4 blocks and are solved with a banded Cholesky factorisation.

Receiver velocity is not observable from these factors alone, so the
velocity reported on output states is the Doppler WLS estimate of that
epoch (falling back to a finite difference of solved positions).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from .baselines import wls_position
from .errors import (
    DivergenceError,
    GeometryError,
    GraphConstructionError,
    InsufficientObservationsError,
)
from .geo import elevation_azimuth
from .obs_model import EpochState, SigmaModelConfig, doppler_wls_velocity, measurement_sigma

log = logging.getLogger(__name__)

NV = 4  # unknowns per epoch
_BAND = 2 * NV - 1


@dataclass(frozen=True)
class DopplerFactorConfig:
    sigma: float = 0.1  # m/s per axis

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Doppler-velocity sigma must be positive")


@dataclass(frozen=True)
class SolveOptions:
    max_outer_iterations: int = 50
    cost_tolerance: float = 1e-8
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 0.1
    max_rejections: int = 12

    def __post_init__(self):
        if self.cost_tolerance <= 0 or self.initial_damping <= 0:
            raise ValueError("tolerances must be positive")
        if self.damping_up <= 1 or not 0 < self.damping_down < 1:
            raise ValueError("damping factors must satisfy up > 1 > down > 0")


@dataclass
class FactorGraph:
    """Factor arrays plus the Step-1 WLS initial states.

    ``pr_*`` arrays have one row per pseudorange factor; ``dv_epoch[k]`` is
    the earlier epoch of the k-th Doppler-velocity factor.
    """

    times: np.ndarray
    observations: list
    pr_epoch: np.ndarray
    pr_sat_id: np.ndarray
    pr_sat_pos: np.ndarray
    pr_range: np.ndarray
    pr_sigma: np.ndarray
    dv_epoch: np.ndarray
    dv_vel: np.ndarray
    dv_sigma: np.ndarray
    velocities: np.ndarray
    drifts: np.ndarray
    init_states: list

    @property
    def n_epochs(self) -> int:
        return len(self.times)

    @property
    def n_pr(self) -> int:
        return len(self.pr_range)

    @property
    def n_dv(self) -> int:
        return len(self.dv_epoch)

    @property
    def pr_keys(self) -> list[tuple[float, int]]:
        return [(float(self.times[e]), int(s)) for e, s in zip(self.pr_epoch, self.pr_sat_id)]

    @property
    def pr_labels(self) -> np.ndarray:
        return np.array([o.label for o in self.observations])


@dataclass
class WeightSet:
    """Per-pseudorange-factor weights keyed by ``(t, sat_id)``."""

    keys: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if len(self.keys) != len(self.values):
            raise ValueError("weight keys and values differ in length")
        if np.any(~(self.values >= 0)) or np.any(self.values > 1):
            raise ValueError("weights must lie in [0, 1]")

    @classmethod
    def ones(cls, graph: FactorGraph) -> "WeightSet":
        return cls(graph.pr_keys, np.ones(graph.n_pr))

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict:
        return dict(zip(self.keys, self.values.tolist()))


@dataclass
class SolveReport:
    cost: float
    initial_cost: float
    iterations: int
    converged: bool
    residuals: np.ndarray  # whitened pseudorange residuals, factor order
    residuals_m: np.ndarray
    cost_history: list = field(default_factory=list)


def _weights_array(graph, weights):
    if weights is None:
        return np.ones(graph.n_pr)
    w = weights.values if isinstance(weights, WeightSet) else np.asarray(weights, dtype=float)
    if w.shape != (graph.n_pr,):
        raise ValueError(f"expected {graph.n_pr} weights, got {w.shape}")
    return w


def _check_observable(n_epochs, pr_epoch, dv_epoch):
    counts = np.bincount(pr_epoch, minlength=n_epochs)
    if np.any(counts == 0):
        raise GraphConstructionError(f"epochs without pseudoranges: {np.flatnonzero(counts == 0)}")
    linked = np.zeros(n_epochs, dtype=bool)
    linked[dv_epoch] = True
    start = 0
    for e in range(n_epochs):
        if e == n_epochs - 1 or not linked[e]:
            n_seg = e - start + 1
            # one shared translation plus one clock per epoch
            if counts[start:e + 1].sum() < 3 + n_seg:
                raise GraphConstructionError(
                    f"epochs {start}..{e} are unobservable: too few pseudoranges "
                    "and no Doppler link to anchored epochs")
            start = e + 1


def build_graph(epochs, sigma_cfg: SigmaModelConfig = SigmaModelConfig(),
                dv_cfg: DopplerFactorConfig = DopplerFactorConfig()) -> FactorGraph:
    """Assemble factors from epoch-grouped observations.

    Every observation becomes a pseudorange factor whose sigma is evaluated
    at the epoch's WLS fix. A Doppler-velocity factor links epochs t and t+1
    when the Doppler velocity of epoch t could be solved.
    """
    if not epochs:
        raise GraphConstructionError("no epochs")
    if any(len(ep) == 0 for ep in epochs):
        raise GraphConstructionError("epoch with zero observations")
    times = np.array([ep[0].t for ep in epochs], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise GraphConstructionError("epoch timestamps must be strictly increasing")

    n = len(epochs)
    # necessary condition even if every Doppler link ends up present
    _check_observable(n, np.repeat(np.arange(n), [len(ep) for ep in epochs]),
                      np.arange(n - 1, dtype=int))
    fixes = [None] * n
    prev = None
    for k, ep in enumerate(epochs):
        try:
            fixes[k] = wls_position(ep, sigma_cfg, init=None if prev is None else prev.pos)
            prev = fixes[k]
        except (InsufficientObservationsError, GeometryError, DivergenceError) as exc:
            log.info("epoch %d: WLS initialisation failed (%s)", k, exc)
    if all(f is None for f in fixes):
        raise GeometryError("no epoch admits a WLS fix")

    # failed epochs copy the previous fix; leading failures take the first one
    first = next(f for f in fixes if f is not None)
    filled, last = [], first
    for f in fixes:
        last = f if f is not None else last
        filled.append(last)

    sigmas = []
    vel = np.full((n, 3), np.nan)
    drift = np.full(n, np.nan)
    for k, ep in enumerate(epochs):
        if fixes[k] is not None:
            sigmas.extend(fixes[k].sigmas)
        else:
            sigmas.extend(measurement_sigma(elevation_azimuth(o.sat_pos, filled[k].pos)[0], o.cn0,
                                            sigma_cfg) for o in ep)
        try:
            vel[k], drift[k] = doppler_wls_velocity(ep, filled[k].pos)
        except (InsufficientObservationsError, GeometryError) as exc:
            log.info("epoch %d: Doppler velocity unavailable (%s)", k, exc)

    obs = [o for ep in epochs for o in ep]
    pr_epoch = np.repeat(np.arange(n), [len(ep) for ep in epochs])
    dv_epoch = np.array([k for k in range(n - 1) if np.all(np.isfinite(vel[k]))], dtype=int)
    _check_observable(n, pr_epoch, dv_epoch)

    init = []
    for k in range(n):
        v = vel[k] if np.all(np.isfinite(vel[k])) else np.zeros(3)
        d = drift[k] if np.isfinite(drift[k]) else 0.0
        init.append(EpochState(times[k], filled[k].pos.copy(), v.copy(), filled[k].clk_bias, d))

    return FactorGraph(
        times=times,
        observations=obs,
        pr_epoch=pr_epoch,
        pr_sat_id=np.array([o.sat_id for o in obs], dtype=int),
        pr_sat_pos=np.array([o.sat_pos for o in obs]),
        pr_range=np.array([o.pseudorange for o in obs]),
        pr_sigma=np.array(sigmas, dtype=float),
        dv_epoch=dv_epoch,
        dv_vel=vel[dv_epoch] if len(dv_epoch) else np.zeros((0, 3)),
        dv_sigma=np.full((len(dv_epoch), 3), dv_cfg.sigma),
        velocities=vel,
        drifts=drift,
        init_states=init,
    )


def remove_factors(graph: FactorGraph, keep: np.ndarray) -> FactorGraph:
    """Copy of ``graph`` with only the pseudorange factors selected by ``keep``."""
    keep = np.asarray(keep, dtype=bool)
    return FactorGraph(
        times=graph.times,
        observations=[o for o, k in zip(graph.observations, keep) if k],
        pr_epoch=graph.pr_epoch[keep],
        pr_sat_id=graph.pr_sat_id[keep],
        pr_sat_pos=graph.pr_sat_pos[keep],
        pr_range=graph.pr_range[keep],
        pr_sigma=graph.pr_sigma[keep],
        dv_epoch=graph.dv_epoch,
        dv_vel=graph.dv_vel,
        dv_sigma=graph.dv_sigma,
        velocities=graph.velocities,
        drifts=graph.drifts,
        init_states=graph.init_states,
    )


def states_to_array(states) -> np.ndarray:
    x = np.empty((len(states), NV))
    for k, s in enumerate(states):
        x[k, :3] = s.pos
        x[k, 3] = s.clk_bias
    return x


def array_to_states(graph: FactorGraph, x: np.ndarray) -> list:
    n = graph.n_epochs
    out = []
    for k in range(n):
        v = graph.velocities[k]
        if not np.all(np.isfinite(v)):
            if n == 1:
                v = np.zeros(3)
            else:
                a, b = (k, k + 1) if k + 1 < n else (k - 1, k)
                v = (x[b, :3] - x[a, :3]) / (graph.times[b] - graph.times[a])
        d = graph.drifts[k] if np.isfinite(graph.drifts[k]) else 0.0
        out.append(EpochState(float(graph.times[k]), x[k, :3].copy(), np.array(v, dtype=float),
                              float(x[k, 3]), float(d)))
    return out


def _pr_terms(graph, x):
    d = graph.pr_sat_pos - x[graph.pr_epoch, :3]
    r = np.linalg.norm(d, axis=1)
    res_m = graph.pr_range - (r + x[graph.pr_epoch, 3])
    sig = graph.pr_sigma
    jac = np.empty((graph.n_pr, NV))
    jac[:, :3] = d / (r * sig)[:, None]
    jac[:, 3] = -1.0 / sig
    return res_m / sig, res_m, jac


def _dv_terms(graph, x):
    k = graph.dv_epoch
    dt = graph.times[k + 1] - graph.times[k]
    scale = 1.0 / (dt[:, None] * graph.dv_sigma)  # d(res)/d(pos_t), per axis
    res = (graph.dv_vel - (x[k + 1, :3] - x[k, :3]) / dt[:, None]) / graph.dv_sigma
    return res, scale


def pr_residuals(graph: FactorGraph, states) -> tuple[np.ndarray, np.ndarray]:
    """Whitened and metric pseudorange residuals in factor order."""
    x = states if isinstance(states, np.ndarray) else states_to_array(states)
    white, metric, _ = _pr_terms(graph, x)
    return white, metric


def _cost_parts(graph, x, w):
    e_pr, _, _ = _pr_terms(graph, x)
    e_dv, _ = _dv_terms(graph, x)
    return float(np.sum(w * e_pr**2)), float(np.sum(e_dv**2))


@dataclass
class Objective:
    total: float
    pr_cost: float
    dv_cost: float
    residuals: np.ndarray
    residuals_m: np.ndarray


def evaluate_objective(graph: FactorGraph, weights, states) -> Objective:
    """Weighted data cost ``sum ||e_dv||^2 + sum w ||e_pr||^2`` and its parts."""
    w = _weights_array(graph, weights)
    x = states if isinstance(states, np.ndarray) else states_to_array(states)
    pr, dv = _cost_parts(graph, x, w)
    white, metric = pr_residuals(graph, x)
    return Objective(pr + dv, pr, dv, white, metric)


def normal_equations(graph: FactorGraph, weights, x: np.ndarray):
    """Blocks of ``J^T W J`` and the gradient ``J^T W e``.

    Returns ``(diag, off, g)`` where ``diag[t]`` is block (t, t) and
    ``off[t]`` block (t, t+1); all other blocks are zero.
    """
    w = _weights_array(graph, weights)
    n = graph.n_epochs
    diag = np.zeros((n, NV, NV))
    off = np.zeros((max(n - 1, 0), NV, NV))
    g = np.zeros((n, NV))

    e_pr, _, J = _pr_terms(graph, x)
    np.add.at(diag, graph.pr_epoch, w[:, None, None] * J[:, :, None] * J[:, None, :])
    np.add.at(g, graph.pr_epoch, (w * e_pr)[:, None] * J)

    e_dv, s = _dv_terms(graph, x)
    k = graph.dv_epoch
    idx = np.arange(3)
    # J_t = diag(s), J_{t+1} = -diag(s)
    np.add.at(diag, (k[:, None], idx, idx), s**2)
    np.add.at(diag, (k[:, None] + 1, idx, idx), s**2)
    np.add.at(off, (k[:, None], idx, idx), -s**2)
    np.add.at(g[:, :3], k, e_dv * s)
    np.add.at(g[:, :3], k + 1, -e_dv * s)
    return diag, off, g


def to_dense(diag, off) -> np.ndarray:
    n = len(diag)
    A = np.zeros((n * NV, n * NV))
    for t in range(n):
        A[t * NV:(t + 1) * NV, t * NV:(t + 1) * NV] = diag[t]
    for t in range(len(off)):
        A[t * NV:(t + 1) * NV, (t + 1) * NV:(t + 2) * NV] = off[t]
        A[(t + 1) * NV:(t + 2) * NV, t * NV:(t + 1) * NV] = off[t].T
    return A


def _banded(diag, off, damping):
    n = len(diag)
    N = n * NV
    ab = np.zeros((_BAND + 1, N))
    a, b = np.triu_indices(NV)
    cols = (np.arange(n)[:, None] * NV + b).ravel()
    ab[(_BAND + a - b)[None, :].repeat(n, 0).ravel(), cols] = diag[:, a, b].ravel()
    if len(off):
        a, b = np.indices((NV, NV)).reshape(2, -1)
        cols = (np.arange(1, n)[:, None] * NV + b).ravel()
        rows = np.tile(_BAND + a - NV - b, n - 1)
        ab[rows, cols] = off[:, a, b].ravel()
    ab[_BAND] += damping
    return ab


def solve(graph: FactorGraph, weights=None, init=None,
          opts: SolveOptions = SolveOptions()) -> tuple[list, SolveReport]:
    """Minimise the weighted factor-graph cost by damped Gauss-Newton.

    A step is accepted only when it lowers the total cost, so the returned
    cost never exceeds the initial one. Zero weights are allowed and are
    equivalent to removing the factor.
    """
    w = _weights_array(graph, weights)
    x = states_to_array(graph.init_states if init is None else init)
    if x.shape[0] != graph.n_epochs:
        raise ValueError("initial states do not match the graph's epochs")
    cost = sum(_cost_parts(graph, x, w))
    if not np.isfinite(cost):
        raise DivergenceError("non-finite initial cost")
    initial_cost = cost
    history = [cost]
    lam = opts.initial_damping
    converged = False
    it = 0
    while it < opts.max_outer_iterations and not converged:
        it += 1
        diag, off, g = normal_equations(graph, w, x)
        rejections = 0
        while True:
            try:
                step = solveh_banded(_banded(diag, off, lam), -g.ravel())
            except LinAlgError:
                step = None
            if step is not None:
                x_new = x + step.reshape(-1, NV)
                c_new = sum(_cost_parts(graph, x_new, w))
            if step is not None and np.isfinite(c_new) and c_new < cost:
                rel = (cost - c_new) / cost
                x, cost = x_new, c_new
                history.append(cost)
                lam = max(lam * opts.damping_down, 1e-15)
                if rel < opts.cost_tolerance or cost == 0.0:
                    converged = True
                break
            if step is None and rejections >= opts.max_rejections:
                raise DivergenceError("normal equations singular after maximum damping")
            rejections += 1
            lam *= opts.damping_up
            if rejections > opts.max_rejections:
                # no descent direction left at working precision
                converged = True
                break
    if not np.isfinite(cost):
        raise DivergenceError("non-finite final cost")
    white, metric = pr_residuals(graph, x)
    report = SolveReport(cost, initial_cost, it, converged, white, metric, history)
    return array_to_states(graph, x), report
