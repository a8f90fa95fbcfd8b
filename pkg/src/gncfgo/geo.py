"""WGS-84 frames and satellite/receiver geometry."""

from __future__ import annotations

import math

import numpy as np

C_LIGHT = 299792458.0
OMEGA_EARTH = 7.2921151467e-5
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

_LAT_TOL = 1e-12
_LAT_MAX_ITER = 10


def geodetic_to_ecef(lat: float, lon: float, h: float) -> np.ndarray:
    """Geodetic latitude/longitude (rad) and ellipsoid height (m) to ECEF (m)."""
    if not abs(lat) <= math.pi / 2:
        raise ValueError(f"latitude out of range: {lat}")
    slat, clat = math.sin(lat), math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * slat * slat)
    return np.array([
        (n + h) * clat * math.cos(lon),
        (n + h) * clat * math.sin(lon),
        (n * (1.0 - WGS84_E2) + h) * slat,
    ])


def ecef_to_geodetic(p) -> tuple[float, float, float]:
    """Inverse of :func:`geodetic_to_ecef` by fixed-point iteration on latitude.

    Returns ``(lat, lon, h)``.
    """
    x, y, z = (float(v) for v in p)
    rho = math.hypot(x, y)
    if rho == 0.0 and z == 0.0:
        raise ValueError("cannot convert the earth center to geodetic coordinates")
    lon = math.atan2(y, x)
    lat = math.atan2(z, rho * (1.0 - WGS84_E2))
    for _ in range(_LAT_MAX_ITER):
        slat = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * slat * slat)
        new_lat = math.atan2(z + WGS84_E2 * n * slat, rho)
        done = abs(new_lat - lat) < _LAT_TOL
        lat = new_lat
        if done:
            break
    slat, clat = math.sin(lat), math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * slat * slat)
    # valid at the poles, unlike rho / cos(lat) - n
    h = rho * clat + (z + WGS84_E2 * n * slat) * slat - n
    return lat, lon, h


def enu_rotation(lat: float, lon: float) -> np.ndarray:
    """Rows are the east, north and up unit vectors at (lat, lon)."""
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def ecef_to_enu(p, ref) -> np.ndarray:
    """Express ``p - ref`` in the local east/north/up frame at ``ref``.

    ``p`` may be a single point or an ``(n, 3)`` array.
    """
    ref = np.asarray(ref, dtype=float)
    if not np.any(ref):
        raise ValueError("ENU reference point is the earth center")
    lat, lon, _ = ecef_to_geodetic(ref)
    d = np.asarray(p, dtype=float) - ref
    return d @ enu_rotation(lat, lon).T


def los_unit_vector(sat, rcv) -> np.ndarray:
    d = np.asarray(sat, dtype=float) - np.asarray(rcv, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise ValueError("satellite and receiver positions coincide")
    return d / r


def elevation_azimuth(sat, rcv) -> tuple[float, float]:
    """Elevation in [-pi/2, pi/2] and azimuth in [0, 2pi) clockwise from north."""
    e, n, u = ecef_to_enu(np.asarray(sat, dtype=float), rcv)
    horiz = math.hypot(e, n)
    if horiz == 0.0 and u == 0.0:
        raise ValueError("satellite and receiver positions coincide")
    el = math.atan2(u, horiz)
    az = math.atan2(e, n) % (2.0 * math.pi)
    if az >= 2.0 * math.pi:
        az = 0.0
    return el, az
