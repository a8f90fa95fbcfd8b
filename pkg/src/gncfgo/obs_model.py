"""Pseudorange and Doppler measurement models.

Conventions used throughout the package:

* clock bias and drift are carried in meters and m/s;
* pseudoranges arrive with satellite clock and atmospheric corrections applied;
* ``wavelength * doppler`` equals the expected range rate plus receiver drift;
* residuals are ``(measured - predicted) / sigma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, InsufficientObservationsError
from .geo import C_LIGHT, OMEGA_EARTH, elevation_azimuth, los_unit_vector

LABELS = ("LOS", "NLOS", "MP", "UNK")
SYSTEMS = ("GPS", "BeiDou")

GPS_L1_WAVELENGTH = C_LIGHT / 1575.42e6
BDS_B1_WAVELENGTH = C_LIGHT / 1561.098e6

DOPPLER_TOL = 1e-6
DOPPLER_MAX_ITER = 10


@dataclass(frozen=True, eq=False)
class SatelliteObservation:
    t: float
    sat_id: int
    system: str
    sat_pos: np.ndarray
    sat_vel: np.ndarray
    pseudorange: float
    doppler: float
    wavelength: float
    cn0: float
    label: str = "UNK"

    def __post_init__(self):
        object.__setattr__(self, "sat_pos", np.asarray(self.sat_pos, dtype=float))
        object.__setattr__(self, "sat_vel", np.asarray(self.sat_vel, dtype=float))
        if not self.pseudorange > 0:
            raise ValueError(f"pseudorange must be positive, got {self.pseudorange}")
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not 0.0 <= self.cn0 <= 60.0:
            raise ValueError(f"cn0 outside [0, 60] dB-Hz: {self.cn0}")
        if not np.all(np.isfinite(self.sat_pos)):
            raise ValueError("satellite position is not finite")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}")

    @property
    def range_rate(self) -> float:
        return self.wavelength * self.doppler


@dataclass
class EpochState:
    t: float
    pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    clk_bias: float = 0.0
    clk_drift: float = 0.0

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)

    def copy(self) -> "EpochState":
        return EpochState(self.t, self.pos.copy(), self.vel.copy(), self.clk_bias, self.clk_drift)


@dataclass(frozen=True)
class SigmaModelConfig:
    sigma0: float = 1.0
    snr_threshold: float = 45.0
    snr_scale: float = 30.0

    def __post_init__(self):
        if min(self.sigma0, self.snr_threshold, self.snr_scale) <= 0:
            raise ValueError("sigma model parameters must be positive")


def pseudorange_predict(state: EpochState, sat_pos) -> float:
    d = np.asarray(sat_pos, dtype=float) - state.pos
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise ValueError("satellite and receiver positions coincide")
    return r + state.clk_bias


def pseudorange_residual(obs: SatelliteObservation, state: EpochState, sigma: float):
    """Whitened residual and its gradient over ``[x, y, z, clk_bias]``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    res = (obs.pseudorange - pseudorange_predict(state, obs.sat_pos)) / sigma
    jac = np.empty(4)
    jac[:3] = los_unit_vector(obs.sat_pos, state.pos) / sigma
    jac[3] = -1.0 / sigma
    return res, jac


def measurement_sigma(elevation: float, cn0: float, cfg: SigmaModelConfig = SigmaModelConfig()) -> float:
    """Pseudorange standard deviation (m) from elevation and C/N0.

    sigma^2 = sigma0^2 / sin^2(el) * 10^((S1 - min(cn0, S1)) / A)
    """
    if not elevation > 0:
        raise ValueError(f"elevation must be above the horizon, got {elevation}")
    snr_term = 10.0 ** ((cfg.snr_threshold - min(cn0, cfg.snr_threshold)) / cfg.snr_scale)
    return cfg.sigma0 * math.sqrt(snr_term) / math.sin(min(elevation, math.pi / 2))


def _sagnac_rate(rcv_pos, rcv_vel, sat_pos, sat_vel) -> float:
    return OMEGA_EARTH / C_LIGHT * (
        sat_vel[1] * rcv_pos[0] + sat_pos[1] * rcv_vel[0]
        - sat_pos[0] * rcv_vel[1] - sat_vel[0] * rcv_pos[1]
    )


def range_rate_expected(state: EpochState, sat_pos, sat_vel) -> float:
    """Line-of-sight range rate including the earth-rotation correction."""
    sat_pos = np.asarray(sat_pos, dtype=float)
    sat_vel = np.asarray(sat_vel, dtype=float)
    e = los_unit_vector(sat_pos, state.pos)
    return float(e @ (sat_vel - state.vel)) + _sagnac_rate(state.pos, state.vel, sat_pos, sat_vel)


def range_rate_jacobian(state: EpochState, sat_pos, sat_vel) -> np.ndarray:
    """Gradient of :func:`range_rate_expected` over ``[pos (3), vel (3)]``."""
    sat_pos = np.asarray(sat_pos, dtype=float)
    sat_vel = np.asarray(sat_vel, dtype=float)
    d = sat_pos - state.pos
    r = np.linalg.norm(d)
    e = d / r
    w = sat_vel - state.vel
    k = OMEGA_EARTH / C_LIGHT
    jac = np.empty(6)
    jac[:3] = -(w - e * (e @ w)) / r + k * np.array([sat_vel[1], -sat_vel[0], 0.0])
    jac[3:] = -e + k * np.array([sat_pos[1], -sat_pos[0], 0.0])
    return jac


def doppler_wls_velocity(obs_list, pos_estimate) -> tuple[np.ndarray, float]:
    """Receiver velocity and clock drift from one epoch of Doppler measurements.

    Gauss-Newton on ``lambda * d = rr(v) + drift``; the model is linear in the
    unknowns so this normally stops after the second iteration.
    """
    obs_list = [o for o in obs_list if np.isfinite(o.doppler)]
    if len(obs_list) < 4:
        raise InsufficientObservationsError(
            f"Doppler velocity needs at least 4 observations, got {len(obs_list)}")
    y = np.array([o.range_rate for o in obs_list])
    state = EpochState(obs_list[0].t, np.asarray(pos_estimate, dtype=float))
    H = np.empty((len(obs_list), 4))
    H[:, 3] = 1.0
    for _ in range(DOPPLER_MAX_ITER):
        pred = np.empty(len(obs_list))
        for i, o in enumerate(obs_list):
            pred[i] = range_rate_expected(state, o.sat_pos, o.sat_vel) + state.clk_drift
            H[i, :3] = range_rate_jacobian(state, o.sat_pos, o.sat_vel)[3:]
        if np.linalg.matrix_rank(H) < 4:
            raise GeometryError("rank-deficient Doppler geometry")
        dx = np.linalg.lstsq(H, y - pred, rcond=None)[0]
        state.vel = state.vel + dx[:3]
        state.clk_drift += dx[3]
        if np.linalg.norm(dx[:3]) < DOPPLER_TOL:
            break
    return state.vel, state.clk_drift


def doppler_velocity_residual(v_meas, state_t: EpochState, state_t1: EpochState, sigma=0.1):
    """Whitened Doppler-velocity residual and its position Jacobians.

    Returns ``(res, jac_t, jac_t1)`` with 3x3 blocks for the two epochs.
    ``sigma`` is the per-axis standard deviation (scalar or 3-vector).
    """
    dt = state_t1.t - state_t.t
    if not dt > 0:
        raise ValueError("Doppler-velocity factor needs increasing timestamps")
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (3,))
    res = (np.asarray(v_meas, dtype=float) - (state_t1.pos - state_t.pos) / dt) / sigma
    jac_t = np.diag(1.0 / (dt * sigma))
    return res, jac_t, -jac_t


def filter_observations(obs_list, rcv_pos, min_elevation: float = 0.0, min_cn0: float = 0.0):
    """Drop observations at or below either threshold.

    Returns ``(kept, n_removed)``; order is preserved.
    """
    kept = [o for o in obs_list
            if elevation_azimuth(o.sat_pos, rcv_pos)[0] > min_elevation and o.cn0 > min_cn0]
    return kept, len(obs_list) - len(kept)
