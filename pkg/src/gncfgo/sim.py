"""Synthetic GNSS scenarios with labelled NLOS/multipath outliers.

Satellites move on circular arcs of a 26 560 km shell expressed directly in
ECEF; the receiver follows a static, straight or polyline trajectory around a
geodetic origin. Truth velocity at epoch k is the forward difference
``(p[k+1] - p[k]) / dt`` so the Doppler-velocity model is exact on clean data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .geo import elevation_azimuth, enu_rotation, geodetic_to_ecef
from .obs_model import (
    BDS_B1_WAVELENGTH,
    GPS_L1_WAVELENGTH,
    EpochState,
    SatelliteObservation,
    SigmaModelConfig,
    measurement_sigma,
    range_rate_expected,
)

log = logging.getLogger(__name__)

SAT_RADIUS = 26.56e6
SAT_SPEED = 3874.0
ELEVATION_MASK = math.radians(5.0)
NLOS_THRESHOLD = 10.0  # m; smaller injected biases are labelled multipath
TRAJECTORIES = ("static", "straight", "polyline")
SIGNS = ("positive", "both")


@dataclass(frozen=True)
class Scenario:
    duration: float = 100.0
    rate: float = 1.0
    n_sats: int = 10
    geometry_seed: int = 0
    lat_deg: float = 22.3
    lon_deg: float = 114.17
    height: float = 10.0
    trajectory: str = "static"
    speed: float = 10.0
    heading_deg: float = 45.0
    waypoints: str = ""           # "e,n;e,n;..." in meters from the origin
    clk_bias0: float = 1000.0     # m
    clk_drift0: float = 0.5       # m/s
    clk_bias_psd: float = 0.0     # m^2/s
    clk_drift_psd: float = 0.0    # m^2/s^3
    pr_noise: float = 0.0         # m, scaled by the elevation/C/N0 model
    doppler_noise: float = 0.0    # m/s range-rate equivalent
    atmo_bias_max: float = 0.0    # m, per-satellite offset bound
    atmo_rate_max: float = 0.0    # m/s, per-satellite ramp bound
    outlier_fraction: float = 0.0
    outlier_bias_min: float = 20.0
    outlier_bias_max: float = 100.0
    outlier_persistence: int = 1
    outlier_sign: str = "positive"
    nlos_cn0_drop: float = 6.0    # dB-Hz
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0 or not self.rate > 0:
            raise ValueError("duration and rate must be positive")
        if not 0 <= self.outlier_fraction < 1:
            raise ValueError("outlier fraction must lie in [0, 1)")
        if not 0 < self.outlier_bias_min <= self.outlier_bias_max:
            raise ValueError("outlier bias range must be positive and ordered")
        if self.outlier_persistence < 1:
            raise ValueError("outlier persistence must be at least 1")
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"trajectory must be one of {TRAJECTORIES}")
        if self.outlier_sign not in SIGNS:
            raise ValueError(f"outlier_sign must be one of {SIGNS}")
        if self.n_sats < 4:
            raise ValueError("at least 4 satellites are required")

    @property
    def n_epochs(self) -> int:
        return int(round(self.duration * self.rate))

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}


REFERENCE_SCENARIOS = {
    "A": Scenario(trajectory="static"),
    "B": Scenario(trajectory="polyline", speed=8.0,
                  waypoints="0,0;300,0;300,250;100,400", geometry_seed=1),
    "C": Scenario(trajectory="polyline", speed=8.0,
                  waypoints="0,0;300,0;300,250;100,400", geometry_seed=2,
                  clk_bias_psd=0.1, clk_drift_psd=0.01,
                  pr_noise=0.5, doppler_noise=0.05, atmo_bias_max=1.0, atmo_rate_max=0.005,
                  outlier_fraction=0.3, outlier_bias_min=20.0, outlier_bias_max=100.0,
                  outlier_persistence=5),
    "D": Scenario(trajectory="polyline", speed=6.0,
                  waypoints="0,0;0,300;200,300", geometry_seed=3,
                  clk_bias_psd=0.1, clk_drift_psd=0.01,
                  pr_noise=0.7, doppler_noise=0.08, atmo_bias_max=1.5, atmo_rate_max=0.005,
                  outlier_fraction=0.5, outlier_bias_min=10.0, outlier_bias_max=100.0,
                  outlier_persistence=8),
}


def reference_scenario(name: str, **overrides) -> Scenario:
    return replace(REFERENCE_SCENARIOS[name.upper()], **overrides)


@dataclass
class ScenarioGeometry:
    scenario: Scenario
    truth: list            # EpochState per epoch
    sat_ids: np.ndarray    # (n_sats,)
    systems: list
    sat_pos: np.ndarray    # (n_epochs, n_sats, 3)
    sat_vel: np.ndarray
    visible: np.ndarray    # (n_epochs, n_sats) bool
    elevation: np.ndarray  # (n_epochs, n_sats) rad


@dataclass(frozen=True)
class ErrorBudgetRecord:
    t: float
    sat_id: int
    geometric_range: float
    clk_bias: float
    atmosphere: float
    noise: float
    outlier_bias: float
    label: str

    def reconstruct(self) -> float:
        return self.geometric_range + self.clk_bias + self.atmosphere + self.noise + self.outlier_bias


def _parse_waypoints(text):
    pts = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        e, n = item.split(",")
        pts.append((float(e), float(n)))
    return np.array(pts)


def _trajectory_enu(scenario, times):
    if scenario.trajectory == "static":
        return np.zeros((len(times), 3))
    if scenario.trajectory == "straight":
        hd = math.radians(scenario.heading_deg)
        direction = np.array([math.sin(hd), math.cos(hd), 0.0])
        return times[:, None] * scenario.speed * direction
    pts = _parse_waypoints(scenario.waypoints)
    if len(pts) < 2:
        raise ValueError("polyline trajectory needs at least two waypoints")
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.minimum(times * scenario.speed, cum[-1])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = (s - cum[i]) / seg_len[i]
    en = pts[i] + frac[:, None] * seg[i]
    return np.column_stack([en, np.zeros(len(times))])


def _place_satellites(scenario, origin, rng):
    """Initial positions and velocities for satellites seen from ``origin``."""
    lat, lon = math.radians(scenario.lat_deg), math.radians(scenario.lon_deg)
    R = enu_rotation(lat, lon)
    n = scenario.n_sats
    az = (2 * math.pi * np.arange(n) / n + rng.uniform(0, 2 * math.pi)
          + rng.uniform(-0.2, 0.2, n)) % (2 * math.pi)
    # stratified elevations keep the snapshot geometry well conditioned
    el = np.radians(15.0 + (np.arange(n) + rng.uniform(0.1, 0.9, n)) * 70.0 / n)
    el = rng.permutation(el)
    pos, vel = [], []
    for a, e in zip(az, el):
        u = R.T @ np.array([math.cos(e) * math.sin(a), math.cos(e) * math.cos(a), math.sin(e)])
        b = origin @ u
        rho = -b + math.sqrt(b * b - (origin @ origin - SAT_RADIUS**2))
        p = origin + rho * u
        tangent = np.cross(p, rng.normal(size=3))
        tangent /= np.linalg.norm(tangent)
        pos.append(p)
        vel.append(SAT_SPEED * tangent)
    return np.array(pos), np.array(vel)


def generate_scenario(scenario: Scenario) -> ScenarioGeometry:
    """Truth trajectory and satellite states for every epoch."""
    n_ep = scenario.n_epochs
    dt = 1.0 / scenario.rate
    times = np.arange(n_ep) * dt
    lat, lon = math.radians(scenario.lat_deg), math.radians(scenario.lon_deg)
    origin = geodetic_to_ecef(lat, lon, scenario.height)

    geo_rng = np.random.default_rng(scenario.geometry_seed)
    p0, v0 = _place_satellites(scenario, origin, geo_rng)
    radius = np.linalg.norm(p0, axis=1)
    omega = SAT_SPEED / radius
    p_hat = p0 / radius[:, None]
    v_hat = v0 / SAT_SPEED
    ang = times[:, None] * omega[None, :]
    sat_pos = radius[None, :, None] * (np.cos(ang)[..., None] * p_hat + np.sin(ang)[..., None] * v_hat)
    sat_vel = SAT_SPEED * (-np.sin(ang)[..., None] * p_hat + np.cos(ang)[..., None] * v_hat)

    # one extra sample so the last epoch also has a forward-difference velocity
    enu = _trajectory_enu(scenario, np.append(times, times[-1] + dt))
    ecef = origin + enu @ enu_rotation(lat, lon)
    vel = np.diff(ecef, axis=0) / dt
    pos = ecef[:-1]

    rng = np.random.default_rng(scenario.seed)
    bias = np.empty(n_ep)
    drift = np.empty(n_ep)
    bias[0], drift[0] = scenario.clk_bias0, scenario.clk_drift0
    for k in range(1, n_ep):
        bias[k] = bias[k - 1] + drift[k - 1] * dt + math.sqrt(scenario.clk_bias_psd * dt) * rng.normal()
        drift[k] = drift[k - 1] + math.sqrt(scenario.clk_drift_psd * dt) * rng.normal()
    truth = [EpochState(float(times[k]), pos[k], vel[k], float(bias[k]), float(drift[k]))
             for k in range(n_ep)]

    elevation = np.empty((n_ep, scenario.n_sats))
    for k in range(n_ep):
        for s in range(scenario.n_sats):
            elevation[k, s] = elevation_azimuth(sat_pos[k, s], pos[k])[0]
    visible = elevation > ELEVATION_MASK
    n_vis = visible.sum(axis=1)
    if np.any(n_vis < 4):
        raise ValueError(f"scenario leaves fewer than 4 visible satellites at epoch "
                         f"{int(np.argmax(n_vis < 4))}")
    sat_ids = np.arange(1, scenario.n_sats + 1)
    systems = ["GPS" if i % 2 == 0 else "BeiDou" for i in range(scenario.n_sats)]
    return ScenarioGeometry(scenario, truth, sat_ids, systems, sat_pos, sat_vel, visible, elevation)


def _cells(geom):
    """Visible (epoch, satellite-index) cells in satellite-major order."""
    return [(k, s) for s in range(geom.sat_pos.shape[1]) for k in range(geom.sat_pos.shape[0])
            if geom.visible[k, s]]


def select_outlier_cells(geom: ScenarioGeometry, scenario: Scenario, rng):
    """Exactly ``floor(fraction * n_cells)`` cells in per-satellite runs.

    Returns a dict ``(epoch, sat_index) -> bias``; each run shares one bias.
    """
    cells = _cells(geom)
    n_flag = math.floor(scenario.outlier_fraction * len(cells) + 1e-9)
    if n_flag == 0:
        return {}
    P = scenario.outlier_persistence
    blocks = []
    for s in range(geom.sat_pos.shape[1]):
        ks = [k for k, ss in cells if ss == s]
        blocks.extend([(s, ks[i:i + P]) for i in range(0, len(ks), P)])
    chosen = {}
    for b in rng.permutation(len(blocks)):
        s, ks = blocks[b]
        ks = ks[:n_flag - len(chosen)]
        mag = rng.uniform(scenario.outlier_bias_min, scenario.outlier_bias_max)
        if scenario.outlier_sign == "both" and rng.random() < 0.5:
            mag = -mag
        for k in ks:
            chosen[(k, s)] = mag
        if len(chosen) >= n_flag:
            break
    return chosen


def label_for_bias(bias: float) -> str:
    if bias == 0.0:
        return "LOS"
    return "NLOS" if abs(bias) >= NLOS_THRESHOLD else "MP"


def inject_outliers(epochs, scenario: Scenario, seed, geom: ScenarioGeometry | None = None):
    """Add outlier biases to a clean observation set.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.

    ``epochs`` must be the epoch-grouped observations of ``geom`` (or of a
    grid where every epoch lists the same satellites). Doppler is left
    untouched. Returns ``(new_epochs, injected)`` where ``injected`` maps
    ``(t, sat_id) -> (bias, label)``.
    """
    rng = np.random.default_rng(seed)
    if geom is None:
        sats = sorted({o.sat_id for ep in epochs for o in ep})
        vis = np.array([[any(o.sat_id == s for o in ep) for s in sats] for ep in epochs])
        geom = ScenarioGeometry(scenario, [], np.array(sats), [], np.zeros(vis.shape + (3,)),
                                None, vis, None)
    chosen = select_outlier_cells(geom, scenario, rng)
    index = {int(sid): i for i, sid in enumerate(geom.sat_ids)}
    injected = {}
    out = []
    for k, ep in enumerate(epochs):
        new_ep = []
        for o in ep:
            b = chosen.get((k, index[o.sat_id]), 0.0)
            if b != 0.0:
                lab = label_for_bias(b)
                injected[(o.t, o.sat_id)] = (b, lab)
                o = SatelliteObservation(o.t, o.sat_id, o.system, o.sat_pos, o.sat_vel,
                                         o.pseudorange + b, o.doppler, o.wavelength,
                                         max(o.cn0 - scenario.nlos_cn0_drop, 0.0), lab)
            new_ep.append(o)
        out.append(new_ep)
    clean = [sum(1 for o in ep if o.label == "LOS") for ep in out]
    if clean and min(clean) < 4:
        log.warning("%d epochs keep fewer than 4 clean satellites",
                    sum(1 for c in clean if c < 4))
    return out, injected


def synthesize_observations(geom: ScenarioGeometry, scenario: Scenario | None = None):
    """Pseudorange and Doppler observations with their error budget.

    Returns ``(epochs, budget)``: epoch-grouped observations and one
    :class:`ErrorBudgetRecord` per observation, in the same order.
    """
    scenario = geom.scenario if scenario is None else scenario
    rng = np.random.default_rng([scenario.seed, 1])
    n_ep, n_sat = geom.visible.shape
    atmo0 = rng.uniform(-scenario.atmo_bias_max, scenario.atmo_bias_max, n_sat)
    atmo_rate = rng.uniform(-scenario.atmo_rate_max, scenario.atmo_rate_max, n_sat)
    cn0_offset = rng.normal(0.0, 1.5, (n_ep, n_sat))
    pr_z = rng.normal(size=(n_ep, n_sat))
    dop_z = rng.normal(size=(n_ep, n_sat))
    noise_model = SigmaModelConfig()

    epochs, budget = [], []
    for k in range(n_ep):
        st = geom.truth[k]
        ep = []
        for s in range(n_sat):
            if not geom.visible[k, s]:
                continue
            sid = int(geom.sat_ids[s])
            sp, sv = geom.sat_pos[k, s], geom.sat_vel[k, s]
            el = geom.elevation[k, s]
            cn0 = float(np.clip(32.0 + 14.0 * math.sin(el) + cn0_offset[k, s], 0.0, 60.0))
            rec = ErrorBudgetRecord(
                st.t, sid, float(np.linalg.norm(sp - st.pos)), st.clk_bias,
                float(atmo0[s] + atmo_rate[s] * st.t),
                float(scenario.pr_noise * measurement_sigma(el, cn0, noise_model) * pr_z[k, s]),
                0.0, "LOS")
            wavelength = GPS_L1_WAVELENGTH if geom.systems[s] == "GPS" else BDS_B1_WAVELENGTH
            rr = range_rate_expected(st, sp, sv) + st.clk_drift + scenario.doppler_noise * dop_z[k, s]
            ep.append(SatelliteObservation(st.t, sid, geom.systems[s], sp, sv, rec.reconstruct(),
                                           rr / wavelength, wavelength, cn0, "LOS"))
            budget.append(rec)
        epochs.append(ep)

    epochs, injected = inject_outliers(epochs, scenario, [scenario.seed, 2], geom)
    budget = [replace(r, outlier_bias=injected[(r.t, r.sat_id)][0],
                      label=injected[(r.t, r.sat_id)][1])
              if (r.t, r.sat_id) in injected else r for r in budget]
    return epochs, budget


def simulate(scenario: Scenario):
    """Convenience wrapper: ``(truth, epochs, budget)``."""
    geom = generate_scenario(scenario)
    epochs, budget = synthesize_observations(geom)
    return geom.truth, epochs, budget
