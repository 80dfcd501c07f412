"""Uncertainty-quality measures.

Point-wise scores (NLL, absolute normalised residual) and set-level
figures (mean NLL, regression and classification ECE, expected tail
loss, quantiles, the local Wasserstein sum, RMSE, sigma width statistics).
Everything is a pure function of numpy arrays or
:class:`~uqtest.estimators.UncertaintyPrediction` objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import CapabilityError, ConfigurationError, DomainError
from .nn import HALF_LOG_2PI

SCORE_KINDS = ("nll", "abs_normalized_residual")
DEFAULT_ECE_LEVELS = 9
DEFAULT_ECE_BINS = 10
QUANTILE_METHOD = "linear"


def _sigma(pred):
    return pred.sigma


def normalized_residual(pred, y):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    return (y - pred.mu) / _sigma(pred)


def nll(pred, y):
    """Point-wise Gaussian negative log-likelihood."""
    sigma = _sigma(pred)
    r = normalized_residual(pred, y)
    return np.log(sigma) + 0.5 * r * r + HALF_LOG_2PI


def point_scores(pred, y, kind):
    """Point-wise score where larger means worse."""
    if kind == "nll":
        return nll(pred, y)
    if kind == "abs_normalized_residual":
        return np.abs(normalized_residual(pred, y))
    raise ConfigurationError(f"unknown score kind {kind!r}")


def _nonempty(n):
    if n == 0:
        raise DomainError("empty input")


def nll_mean(pred, y):
    _nonempty(len(pred))
    return float(np.mean(nll(pred, y)))


def regression_coverage(pred, y, levels=DEFAULT_ECE_LEVELS):
    """Expected vs empirical coverage of central Gaussian intervals.

    Expected levels are ``j / (levels + 1)`` for ``j = 1..levels``.
    """
    if levels < 2:
        raise ConfigurationError("levels must be >= 2")
    _nonempty(len(pred))
    p = np.arange(1, levels + 1) / (levels + 1)
    z = norm.ppf(0.5 * (1.0 + p))
    r = np.abs(normalized_residual(pred, y))
    covered = (r[:, None] <= z[None, :]).mean(axis=0)
    return p, covered


def ece_regression(pred, y, levels=DEFAULT_ECE_LEVELS):
    p, c = regression_coverage(pred, y, levels)
    return float(np.mean(np.abs(c - p)))


def mce_regression(pred, y, levels=DEFAULT_ECE_LEVELS):
    """Largest per-level coverage gap, reported alongside the ECE."""
    p, c = regression_coverage(pred, y, levels)
    return float(np.max(np.abs(c - p)))


def ece_classification(confidences, correct, bins=DEFAULT_ECE_BINS):
    """Equal-width binned ECE; a confidence of exactly 1 falls in the last bin."""
    if bins < 2:
        raise ConfigurationError("bins must be >= 2")
    conf = np.asarray(confidences, dtype=np.float64).reshape(-1)
    acc = np.asarray(correct, dtype=np.float64).reshape(-1)
    _nonempty(conf.size)
    if conf.shape != acc.shape:
        raise DomainError("confidences and correctness flags differ in length")
    if np.any(~((conf >= 0) & (conf <= 1))):
        raise DomainError("confidences must lie in [0, 1]")
    idx = np.minimum((conf * bins).astype(int), bins - 1)
    total = 0.0
    for b in range(bins):
        sel = idx == b
        if sel.any():
            total += sel.sum() * abs(acc[sel].mean() - conf[sel].mean())
    return float(total / conf.size)


def tail_count(n, alpha):
    """Number of worst elements in the ``(1 - alpha)`` tail, at least one."""
    # round first so e.g. (1 - 0.95) * 1000 counts 50, not 51
    return max(1, math.ceil(round((1.0 - alpha) * n, 9)))


def etl(scores, alpha):
    """Expected tail loss: mean of the ``ceil((1-alpha) n)`` largest scores."""
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha must lie in [0, 1), got {alpha}")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    _nonempty(s.size)
    k = tail_count(s.size, alpha)
    # correctly rounded sum: the value does not depend on summation order
    return math.fsum(np.sort(s)[::-1][:k].tolist()) / k


def quantile(scores, q):
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q}")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    _nonempty(s.size)
    return float(np.quantile(s, q, method=QUANTILE_METHOD))


def local_wasserstein(pred, gt_means, gt_sigmas):
    """Sum over points of squared mean and sigma differences to ground truth."""
    if gt_sigmas is None or gt_means is None:
        raise CapabilityError("local calibration needs ground-truth means and sigmas")
    mu_gt = np.asarray(gt_means, dtype=np.float64).reshape(-1)
    s_gt = np.asarray(gt_sigmas, dtype=np.float64).reshape(-1)
    sigma = _sigma(pred)
    if mu_gt.shape != pred.mu.shape or s_gt.shape != sigma.shape:
        raise DomainError("predictions and ground truth differ in length")
    return float(np.sum((pred.mu - mu_gt) ** 2 + (sigma - s_gt) ** 2))


def rmse(mu, y):
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    _nonempty(mu.size)
    return float(np.sqrt(np.mean((mu - np.asarray(y, dtype=np.float64).reshape(-1)) ** 2)))


def width_stats(pred, quantiles=(0.01, 0.5, 0.99)):
    sigma = _sigma(pred)
    _nonempty(sigma.size)
    out = {"mean": float(sigma.mean()), "var": float(sigma.var())}
    for q in quantiles:
        out[f"q{q:g}"] = float(np.quantile(sigma, q, method=QUANTILE_METHOD))
    return out


@dataclass(frozen=True)
class MetricKind:
    """A named set-level measure plus its parameters."""

    name: str
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params)}


def _score_kind(params):
    kind = params.get("score", "nll")
    if kind not in SCORE_KINDS:
        raise ConfigurationError(f"unknown score kind {kind!r}")
    return kind


def compute(kind, pred, data):
    """Evaluate a :class:`MetricKind` on predictions for ``data``."""
    p = kind.params
    if kind.name == "nll_mean":
        return nll_mean(pred, data.y)
    if kind.name == "ece_regression":
        return ece_regression(pred, data.y, int(p.get("levels", DEFAULT_ECE_LEVELS)))
    if kind.name == "mce_regression":
        return mce_regression(pred, data.y, int(p.get("levels", DEFAULT_ECE_LEVELS)))
    if kind.name == "etl":
        return etl(point_scores(pred, data.y, _score_kind(p)), float(p.get("alpha", 0.95)))
    if kind.name == "quantile":
        return quantile(point_scores(pred, data.y, _score_kind(p)), float(p.get("q", 0.99)))
    if kind.name == "local_wasserstein":
        value = local_wasserstein(pred, data.mu_gt, data.sigma_gt)
        return value / len(pred) if p.get("normalize", False) else value
    if kind.name == "rmse":
        return rmse(pred.mu, data.y)
    if kind.name == "width_stats":
        stat = p.get("stat", "mean")
        stats = width_stats(pred, (float(p.get("q", 0.99)),))
        if stat == "q":
            stat = f"q{float(p.get('q', 0.99)):g}"
        if stat not in stats:
            raise ConfigurationError(f"unknown width statistic {stat!r}")
        return stats[stat]
    if kind.name == "ece_classification":
        raise CapabilityError("ece_classification needs confidence/correctness arrays, "
                              "not regression predictions")
    raise ConfigurationError(f"unknown metric {kind.name!r}")
