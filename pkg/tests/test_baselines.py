import numpy as np
import pytest

from gncfgo.baselines import EkfConfig, ekf_run, wls_position
from gncfgo.diagnostics import enu_error_stats
from gncfgo.errors import GeometryError, InsufficientObservationsError
from gncfgo.obs_model import SatelliteObservation
from gncfgo.pipeline import RunConfig, run_method
from gncfgo.sim import reference_scenario, simulate


def test_wls_zero_noise_recovers_truth():
    truth, epochs, _ = simulate(reference_scenario("A", n_sats=8, duration=3.0))
    for ep, t in zip(epochs, truth):
        fix = wls_position(ep)
        assert np.linalg.norm(fix.pos - t.pos) < 1e-6
        assert fix.clk_bias == pytest.approx(t.clk_bias, abs=1e-6)
        assert fix.cost < 1e-12


def test_wls_needs_four():
    _, epochs, _ = simulate(reference_scenario("A", duration=1.0))
    with pytest.raises(InsufficientObservationsError):
        wls_position(epochs[0][:3])


def test_wls_equal_sigmas_match_unweighted():
    _, epochs, _ = simulate(reference_scenario("C", duration=1.0, outlier_fraction=0.0))
    a = wls_position(epochs[0], None)
    b = wls_position(epochs[0], sigmas=np.full(len(epochs[0]), 2.5))
    # ECEF coordinates near 6e6 m are only resolved to ~1e-9 m in float64
    ulp = np.spacing(np.abs(a.pos))
    assert np.all(np.abs(a.pos - b.pos) <= 1e-9 + 4 * ulp)
    assert a.clk_bias == pytest.approx(b.clk_bias, abs=1e-9)


def test_wls_collinear_geometry():
    base = np.array([6378137.0, 0.0, 0.0])
    ep = [SatelliteObservation(0.0, i, "GPS", base + [2e7 * (i + 1), 0, 0], [0, 0, 0],
                               2e7 * (i + 1), 0.0, 0.19, 45.0) for i in range(5)]
    with pytest.raises(GeometryError):
        wls_position(ep, None)


def test_ekf_static_zero_noise_converges():
    truth, epochs, _ = simulate(reference_scenario("A", duration=20.0))
    states, _ = ekf_run(epochs)
    for s, t in list(zip(states, truth))[10:]:
        assert np.linalg.norm(s.pos - t.pos) < 1e-3


def test_ekf_covariance_symmetric_psd():
    _, epochs, _ = simulate(reference_scenario("C", duration=40.0))
    _, covs = ekf_run(epochs)
    for P in covs:
        np.testing.assert_allclose(P, P.T, atol=0)
        assert np.linalg.eigvalsh(P).min() >= -1e-9


def test_ekf_not_worse_than_wls_on_noisy_reference():
    truth, epochs, _ = simulate(reference_scenario("C"))
    wls = run_method(epochs, RunConfig(method="wls")).states
    ekf = run_method(epochs, RunConfig(method="ekf")).states
    assert (enu_error_stats(ekf, truth).stats()["mean_2d_m"]
            <= enu_error_stats(wls, truth).stats()["mean_2d_m"])


def test_ekf_config_validation():
    with pytest.raises(ValueError):
        EkfConfig(vel_psd=0.0)
    with pytest.raises(InsufficientObservationsError):
        ekf_run([])
