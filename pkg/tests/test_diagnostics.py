import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gncfgo.diagnostics import (
    ErrorReport,
    align_epochs,
    enu_error_stats,
    gmm_fit,
    improvement,
    outlier_detection_score,
    residual_histogram,
    weight_histogram,
)
from gncfgo.geo import enu_rotation, geodetic_to_ecef
from gncfgo.obs_model import EpochState


def _track(offset_enu, n=10):
    lat, lon = 0.39, 1.99
    ref = geodetic_to_ecef(lat, lon, 5.0)
    R = enu_rotation(lat, lon)
    truth = [EpochState(float(k), ref + R.T @ [k * 1.0, 0, 0]) for k in range(n)]
    sol = [EpochState(s.t, s.pos + R.T @ np.asarray(offset_enu, dtype=float)) for s in truth]
    return sol, truth


def test_constant_offset_345():
    sol, truth = _track([3.0, 4.0, 0.0])
    s = enu_error_stats(sol, truth).stats()
    assert s["mean_2d_m"] == pytest.approx(5.0, abs=1e-6)
    assert s["std_2d_m"] == pytest.approx(0.0, abs=1e-6)
    assert s["max_2d_m"] == pytest.approx(5.0, abs=1e-6)
    assert s["n_epochs"] == 10


def test_identical_solution_gives_zero_errors():
    sol, truth = _track([0.0, 0.0, 0.0])
    s = enu_error_stats(truth, truth).stats()
    assert all(s[k] == 0.0 for k in s if k != "n_epochs")


def test_improvement_table_values():
    assert round(improvement(9.45, 6.65), 2) == 29.63
    assert round(improvement(20.32, 14.72), 2) == 27.56


def test_improvement_over_reports():
    a = ErrorReport(np.arange(2.0), np.array([[2.0, 0, 0], [2.0, 0, 0]]))
    b = ErrorReport(np.arange(2.0), np.array([[1.0, 0, 0], [1.0, 0, 0]]))
    assert b.improvement_over(a) == (50.0, 50.0)


def test_align_epochs():
    i, j = align_epochs([0.0, 1.0, 2.02, 7.0], [0.0, 1.0, 2.0, 3.0])
    assert list(i) == [0, 1, 2] and list(j) == [0, 1, 2]
    with pytest.raises(ValueError):
        align_epochs([10.0], [0.0, 1.0])


def test_gmm_two_component_recovery():
    rng = np.random.default_rng(42)
    n = 10_000
    z = rng.random(n) < 0.7
    x = np.where(z, rng.normal(0.0, 1.0, n), rng.normal(-20.0, 2.0, n))
    fit = gmm_fit(x, k=2, seed=0)
    order = np.argsort(fit.means)
    assert np.allclose(fit.means[order], [-20.0, 0.0], atol=0.3)
    assert np.allclose(fit.weights[order], [0.3, 0.7], atol=0.05)
    assert np.all(np.diff(fit.history) >= -1e-9 * np.abs(fit.history[:-1]))


def test_gmm_single_component_moments():
    x = np.random.default_rng(1).normal(3.0, 2.0, 2000)
    fit = gmm_fit(x, k=1)
    assert fit.means[0] == pytest.approx(x.mean(), abs=1e-6)
    assert fit.variances[0] == pytest.approx(x.var(), abs=1e-6)
    assert fit.weights[0] == pytest.approx(1.0)


def test_gmm_rejects_too_few_distinct():
    with pytest.raises(ValueError):
        gmm_fit([1.0, 1.0, 1.0, 2.0], k=3)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.integers(10, 300), elements=st.floats(-1e3, 1e3)),
       st.integers(1, 4), st.integers(0, 10))
def test_gmm_log_likelihood_monotone(x, k, seed):
    if len(np.unique(x)) < k:
        return
    fit = gmm_fit(x, k=k, seed=seed, max_iter=200)
    h = np.array(fit.history)
    assert np.all(np.diff(h) >= -1e-7 * np.maximum(1.0, np.abs(h[:-1])))
    assert fit.weights.sum() == pytest.approx(1.0)


def test_weight_histogram():
    counts, edges = weight_histogram(np.ones(37))
    assert len(counts) == 20 and counts[-1] == 37 and counts.sum() == 37
    assert edges[0] == 0.0 and edges[-1] == 1.0
    w = np.random.default_rng(0).random(500)
    assert weight_histogram(w)[0].sum() == 500
    with pytest.raises(ValueError):
        weight_histogram([])


def test_residual_histogram_conserves_counts():
    r = np.random.default_rng(0).normal(0, 5, 321)
    counts, _ = residual_histogram(r)
    assert counts.sum() == 321 and len(counts) == 20


def test_outlier_scores():
    labels = ["LOS", "NLOS", "MP", "LOS"]
    assert outlier_detection_score([1.0, 0.1, 0.2, 0.9], labels) == (1.0, 1.0)
    p, r = outlier_detection_score([1.0, 1.0, 1.0, 1.0], labels)
    assert r == 0.0
    p, r = outlier_detection_score([0.1, 0.1, 1.0, 1.0], labels)
    assert (p, r) == (0.5, 0.5)
    p, r = outlier_detection_score([0.1, 0.1, 1.0, 1.0], labels, recall_mask=[0, 1, 0, 0])
    assert r == 1.0
    with pytest.raises(ValueError):
        outlier_detection_score([], [])
