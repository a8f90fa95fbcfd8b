"""Error statistics, histograms, GMM residual fits and outlier scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .geo import ecef_to_enu

OUTLIER_LABELS = ("NLOS", "MP")


def improvement(baseline_mean: float, method_mean: float) -> float:
    """Percentage reduction of the mean error relative to a baseline."""
    return (baseline_mean - method_mean) / baseline_mean * 100.0


@dataclass
class ErrorReport:
    times: np.ndarray
    enu: np.ndarray  # (n, 3) per-epoch errors

    @property
    def err_2d(self) -> np.ndarray:
        return np.linalg.norm(self.enu[:, :2], axis=1)

    @property
    def err_3d(self) -> np.ndarray:
        return np.linalg.norm(self.enu, axis=1)

    def stats(self) -> dict:
        e2, e3 = self.err_2d, self.err_3d
        return {
            "n_epochs": len(e2),
            "mean_2d_m": float(np.mean(e2)),
            "std_2d_m": float(np.std(e2)),
            "max_2d_m": float(np.max(e2)),
            "mean_3d_m": float(np.mean(e3)),
            "std_3d_m": float(np.std(e3)),
            "max_3d_m": float(np.max(e3)),
        }

    def improvement_over(self, baseline: "ErrorReport") -> tuple[float, float]:
        """(2D, 3D) mean-error improvement in percent."""
        a, b = baseline.stats(), self.stats()
        return (improvement(a["mean_2d_m"], b["mean_2d_m"]),
                improvement(a["mean_3d_m"], b["mean_3d_m"]))


def align_epochs(sol_times, truth_times, tol=None) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs matching each solution epoch to its nearest truth epoch.

    ``tol`` defaults to half the median truth sampling period.
    """
    sol_times = np.asarray(sol_times, dtype=float)
    truth_times = np.asarray(truth_times, dtype=float)
    if tol is None:
        tol = 0.5 * float(np.median(np.diff(truth_times))) if len(truth_times) > 1 else 0.5
    j = np.clip(np.searchsorted(truth_times, sol_times), 1, max(len(truth_times) - 1, 1))
    if len(truth_times) > 1:
        left = j - 1
        j = np.where(np.abs(truth_times[left] - sol_times) <= np.abs(truth_times[j] - sol_times),
                     left, j)
    else:
        j = np.zeros(len(sol_times), dtype=int)
    ok = np.abs(truth_times[j] - sol_times) <= tol
    if not np.any(ok):
        raise ValueError("solution and truth share no epochs")
    return np.flatnonzero(ok), j[ok]


def enu_error_stats(solution, truth) -> ErrorReport:
    """ENU errors of ``solution`` against ``truth`` (sequences of EpochState)."""
    i, j = align_epochs([s.t for s in solution], [s.t for s in truth])
    enu = np.array([ecef_to_enu(solution[a].pos, truth[b].pos) for a, b in zip(i, j)])
    return ErrorReport(np.array([solution[a].t for a in i]), enu)


@dataclass
class GmmFit:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    degenerate: bool = False


def _kmeanspp_1d(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        if d2.sum() == 0:
            centers.append(x[rng.integers(len(x))])
        else:
            centers.append(x[rng.choice(len(x), p=d2 / d2.sum())])
    return np.array(centers)


def _log_joint(x, w, mu, var):
    return (np.log(w)[None, :] - 0.5 * np.log(2 * np.pi * var)[None, :]
            - 0.5 * (x[:, None] - mu[None, :]) ** 2 / var[None, :])


def gmm_fit(samples, k=3, seed=0, max_iter=500, tol=1e-8, var_floor=1e-6) -> GmmFit:
    """One-dimensional Gaussian mixture fitted by EM from k-means++ seeds."""
    x = np.asarray(samples, dtype=float).ravel()
    if len(np.unique(x)) < k:
        raise ValueError(f"need at least {k} distinct samples, got {len(np.unique(x))}")
    rng = np.random.default_rng(seed)
    mu = _kmeanspp_1d(x, k, rng)
    var = np.full(k, max(np.var(x), var_floor))
    w = np.full(k, 1.0 / k)
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        lj = _log_joint(x, w, mu, var)
        norm = logsumexp(lj, axis=1)
        history.append(float(norm.sum()))
        if len(history) > 1 and abs(history[-1] - history[-2]) < tol:
            converged = True
            break
        resp = np.exp(lj - norm[:, None])
        nk = resp.sum(axis=0)
        # components that lost all mass keep their parameters
        alive = nk > 1e-12
        w = nk / len(x)
        mu = np.where(alive, (resp * x[:, None]).sum(axis=0) / np.where(alive, nk, 1.0), mu)
        var = np.where(alive, (resp * (x[:, None] - mu[None, :]) ** 2).sum(axis=0)
                       / np.where(alive, nk, 1.0), var)
        var = np.maximum(var, var_floor)
        w = np.maximum(w, 1e-300)
        w /= w.sum()
    if not converged:
        history.append(float(logsumexp(_log_joint(x, w, mu, var), axis=1).sum()))
    return GmmFit(w, mu, var, history[-1], it, converged, history,
                  degenerate=bool(np.any(var <= var_floor)))


def weight_histogram(weights, bins=20) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(getattr(weights, "values", weights), dtype=float)
    if w.size == 0:
        raise ValueError("empty weight set")
    return np.histogram(w, bins=bins, range=(0.0, 1.0))


def residual_histogram(residuals, bins=20) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise ValueError("empty residual set")
    return np.histogram(r, bins=bins)


def outlier_detection_score(weights, labels, threshold=0.4, recall_mask=None):
    """Precision and recall of ``weight < threshold`` as an outlier detector.

    Positives are NLOS and multipath labels. ``recall_mask`` restricts the
    recall denominator (e.g. to large injected biases). An empty prediction
    set has precision 1; an empty positive set has recall 1.
    """
    w = np.asarray(getattr(weights, "values", weights), dtype=float)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("no labels")
    if labels.shape != w.shape:
        raise ValueError("labels and weights differ in length")
    pred = w < threshold
    truth = np.isin(labels, OUTLIER_LABELS)
    precision = float((pred & truth).sum() / pred.sum()) if pred.any() else 1.0
    target = truth if recall_mask is None else truth & np.asarray(recall_mask, dtype=bool)
    recall = float((pred & target).sum() / target.sum()) if target.any() else 1.0
    return precision, recall
