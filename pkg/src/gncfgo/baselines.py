"""Snapshot WLS positioning and a pseudorange/Doppler EKF."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, GeometryError, InsufficientObservationsError
from .geo import elevation_azimuth
from .obs_model import (
    EpochState,
    SigmaModelConfig,
    doppler_wls_velocity,
    measurement_sigma,
    range_rate_expected,
    range_rate_jacobian,
)

log = logging.getLogger(__name__)

WLS_TOL = 1e-4
WLS_MAX_ITER = 10


@dataclass
class WlsFix:
    pos: np.ndarray
    clk_bias: float
    cov: np.ndarray
    sigmas: np.ndarray
    iterations: int
    cost: float


def _gauss_newton_position(sat_pos, rho, sigmas, x0):
    x = x0.copy()
    H = np.empty((len(rho), 4))
    H[:, 3] = 1.0
    for it in range(1, WLS_MAX_ITER + 1):
        d = sat_pos - x[:3]
        r = np.linalg.norm(d, axis=1)
        H[:, :3] = -d / r[:, None]
        Hw = H / sigmas[:, None]
        if np.linalg.matrix_rank(Hw) < 4:
            raise GeometryError("rank-deficient pseudorange geometry")
        dy = (rho - (r + x[3])) / sigmas
        dx = np.linalg.lstsq(Hw, dy, rcond=None)[0]
        x += dx
        if not np.all(np.isfinite(x)):
            raise DivergenceError("WLS position diverged")
        if np.linalg.norm(dx[:3]) < WLS_TOL:
            return x, Hw, it
    raise DivergenceError(f"WLS position did not converge in {WLS_MAX_ITER} iterations")


def wls_position(obs_list, sigma_cfg: SigmaModelConfig | None = SigmaModelConfig(),
                 init=None, sigmas=None) -> WlsFix:
    """Iterated weighted least-squares fix from one epoch of pseudoranges.

    Sigmas come from ``sigma_cfg`` evaluated at the unweighted fix, or are
    taken verbatim from ``sigmas``. With ``sigma_cfg=None`` and no ``sigmas``
    every measurement gets unit weight.
    """
    if len(obs_list) < 4:
        raise InsufficientObservationsError(
            f"WLS needs at least 4 pseudoranges, got {len(obs_list)}")
    sat_pos = np.array([o.sat_pos for o in obs_list])
    rho = np.array([o.pseudorange for o in obs_list])
    x = np.zeros(4)
    if init is not None:
        x[:3] = np.asarray(init, dtype=float)[:3]
    n_it = 0
    if sigmas is None:
        sigmas = np.ones(len(rho))
        if sigma_cfg is not None:
            # elevations need a position, so weight after an unweighted fix
            x, _, n_it = _gauss_newton_position(sat_pos, rho, sigmas, x)
            sigmas = np.array([
                measurement_sigma(elevation_azimuth(o.sat_pos, x[:3])[0], o.cn0, sigma_cfg)
                for o in obs_list
            ])
    else:
        sigmas = np.asarray(sigmas, dtype=float)
    x, Hw, extra = _gauss_newton_position(sat_pos, rho, sigmas, x)
    d = np.linalg.norm(sat_pos - x[:3], axis=1)
    cost = float(np.sum(((rho - d - x[3]) / sigmas) ** 2))
    return WlsFix(x[:3].copy(), float(x[3]), np.linalg.inv(Hw.T @ Hw), sigmas, n_it + extra, cost)


@dataclass(frozen=True)
class EkfConfig:
    vel_psd: float = 1.0          # m^2/s^3, per axis
    clk_bias_psd: float = 1.0     # m^2/s
    clk_drift_psd: float = 0.1    # m^2/s^3
    init_pos_var: float = 100.0
    init_vel_var: float = 10.0
    init_clk_bias_var: float = 100.0
    init_clk_drift_var: float = 10.0
    range_rate_sigma: float = 0.1  # m/s
    gate: float = math.inf         # innovation gate in sigmas; inf disables

    def __post_init__(self):
        vals = (self.vel_psd, self.clk_bias_psd, self.clk_drift_psd, self.init_pos_var,
                self.init_vel_var, self.init_clk_bias_var, self.init_clk_drift_var,
                self.range_rate_sigma, self.gate)
        if min(vals) <= 0:
            raise ValueError("EKF noise densities and variances must be positive")


def _process_noise(dt, cfg):
    Q = np.zeros((8, 8))
    q = cfg.vel_psd
    for i in range(3):
        Q[i, i] = q * dt**3 / 3
        Q[i, i + 3] = Q[i + 3, i] = q * dt**2 / 2
        Q[i + 3, i + 3] = q * dt
    qd = cfg.clk_drift_psd
    Q[6, 6] = cfg.clk_bias_psd * dt + qd * dt**3 / 3
    Q[6, 7] = Q[7, 6] = qd * dt**2 / 2
    Q[7, 7] = qd * dt
    return Q


def _scalar_update(x, P, h, innov, R, gate):
    S = float(h @ P @ h) + R
    if abs(innov) > gate * math.sqrt(S):
        return x, P
    K = P @ h / S
    x = x + K * innov
    A = np.eye(len(x)) - np.outer(K, h)
    P = A @ P @ A.T + R * np.outer(K, K)
    return x, 0.5 * (P + P.T)


def ekf_run(epochs, cfg: EkfConfig = EkfConfig(), sigma_cfg: SigmaModelConfig = SigmaModelConfig()):
    """Constant-velocity EKF over all epochs.

    State is ``[pos(3), vel(3), clk_bias, clk_drift]``. Measurements are
    applied as sequential scalar updates with the Joseph form. Returns
    ``(states, covariances)``, one entry per epoch.
    """
    if not epochs:
        raise InsufficientObservationsError("no epochs")
    try:
        fix = wls_position(epochs[0], sigma_cfg)
    except (InsufficientObservationsError, GeometryError, DivergenceError) as exc:
        raise InsufficientObservationsError(f"EKF initialisation failed: {exc}") from exc
    x = np.zeros(8)
    x[:3] = fix.pos
    x[6] = fix.clk_bias
    try:
        x[3:6], x[7] = doppler_wls_velocity(epochs[0], fix.pos)
    except (InsufficientObservationsError, GeometryError):
        pass
    P = np.diag([cfg.init_pos_var] * 3 + [cfg.init_vel_var] * 3
                + [cfg.init_clk_bias_var, cfg.init_clk_drift_var])

    states, covs = [], []
    t_prev = epochs[0][0].t
    for k, obs_list in enumerate(epochs):
        t = obs_list[0].t
        dt = t - t_prev
        if dt > 0:
            F = np.eye(8)
            F[0:3, 3:6] = np.eye(3) * dt
            F[6, 7] = dt
            x = F @ x
            P = F @ P @ F.T + _process_noise(dt, cfg)
        t_prev = t

        for o in obs_list:
            d = o.sat_pos - x[:3]
            r = np.linalg.norm(d)
            el = elevation_azimuth(o.sat_pos, x[:3])[0]
            if el <= 0:
                continue
            h = np.zeros(8)
            h[:3] = -d / r
            h[6] = 1.0
            sigma = measurement_sigma(el, o.cn0, sigma_cfg)
            x, P = _scalar_update(x, P, h, o.pseudorange - (r + x[6]), sigma**2, cfg.gate)
        for o in obs_list:
            if not np.isfinite(o.doppler):
                continue
            st = EpochState(t, x[:3], x[3:6])
            h = np.zeros(8)
            h[:6] = range_rate_jacobian(st, o.sat_pos, o.sat_vel)
            h[7] = 1.0
            pred = range_rate_expected(st, o.sat_pos, o.sat_vel) + x[7]
            x, P = _scalar_update(x, P, h, o.range_rate - pred, cfg.range_rate_sigma**2, cfg.gate)

        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(P))):
            raise DivergenceError(f"EKF diverged at epoch {k}", epoch=k)
        states.append(EpochState(t, x[:3].copy(), x[3:6].copy(), float(x[6]), float(x[7])))
        covs.append(P.copy())
    return states, covs
