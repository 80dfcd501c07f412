"""Uncertainty estimators built on :mod:`uqtest.nn` models.

All estimators work on batches: ``predict(x, seed)`` takes an ``(N, d)``
array (or one ``(d,)`` point) and returns an :class:`UncertaintyPrediction`
of length ``N``. Sampling estimators derive every random draw from the
``seed`` argument, so repeated calls with equal seeds are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import CapabilityError, ConfigurationError, DomainError, EstimatorFault, InvalidInputError
from .nn import Mlp, forward

DEFAULT_DROPOUT_SAMPLES = 50
DEFAULT_MEMBERS = 5
DEFAULT_CHAIN_SAMPLES = 100
CONSISTENCY_RTOL = 1e-9


def _column(v):
    if v is None:
        return None
    return np.atleast_1d(np.asarray(v, dtype=np.float64)).reshape(-1)


@dataclass(frozen=True, eq=False)
class UncertaintyPrediction:
    """Predictive mean and standard deviations for a batch of points.

    ``sigma_total`` is None only for predictions of internal chain stages,
    whose uncertainty is consumed inside the model and never emitted.
    When both components are present,
    ``sigma_total**2 == sigma_aleatoric**2 + sigma_epistemic**2``.
    """

    mu: np.ndarray
    sigma_total: np.ndarray | None
    sigma_aleatoric: np.ndarray | None = None
    sigma_epistemic: np.ndarray | None = None

    def __post_init__(self):
        mu = _column(self.mu)
        object.__setattr__(self, "mu", mu)
        for name in ("sigma_total", "sigma_aleatoric", "sigma_epistemic"):
            col = _column(getattr(self, name))
            if col is not None and col.shape != mu.shape:
                raise EstimatorFault(f"{name} has shape {col.shape}, mu has {mu.shape}")
            object.__setattr__(self, name, col)
        if not np.all(np.isfinite(mu)):
            raise EstimatorFault(f"non-finite mean at index {int(np.flatnonzero(~np.isfinite(mu))[0])}")
        tot = self.sigma_total
        if tot is not None:
            bad = np.flatnonzero(~(np.isfinite(tot) & (tot > 0)))
            if bad.size:
                i = int(bad[0])
                raise EstimatorFault(f"sigma_total must be finite and > 0, got {tot[i]} at index {i}")
        for name in ("sigma_aleatoric", "sigma_epistemic"):
            col = getattr(self, name)
            if col is not None and not np.all(np.isfinite(col) & (col >= 0)):
                raise EstimatorFault(f"{name} must be finite and >= 0")
        if self.has_decomposition and tot is not None:
            parts = self.sigma_aleatoric**2 + self.sigma_epistemic**2
            gap = np.abs(tot**2 - parts)
            if np.any(gap > CONSISTENCY_RTOL * tot**2):
                i = int(np.argmax(gap - CONSISTENCY_RTOL * tot**2))
                raise EstimatorFault(
                    f"inconsistent decomposition at index {i}: total^2={tot[i]**2:.6g}, "
                    f"aleatoric^2+epistemic^2={parts[i]:.6g}")

    def __len__(self):
        return self.mu.shape[0]

    @property
    def has_decomposition(self):
        return self.sigma_aleatoric is not None and self.sigma_epistemic is not None

    @property
    def sigma(self):
        if self.sigma_total is None:
            raise CapabilityError("prediction carries no emitted sigma (internal stage)")
        return self.sigma_total

    def take(self, idx):
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return UncertaintyPrediction(self.mu[idx], pick(self.sigma_total),
                                     pick(self.sigma_aleatoric), pick(self.sigma_epistemic))

    def arrays(self):
        """All present columns stacked, for bit-level comparisons."""
        cols = [c for c in (self.mu, self.sigma_total, self.sigma_aleatoric, self.sigma_epistemic)
                if c is not None]
        return np.stack(cols)


def decompose(p):
    """Return ``(sigma_aleatoric, sigma_epistemic)``, re-checking consistency."""
    if not p.has_decomposition:
        raise CapabilityError("estimator does not attribute uncertainty to aleatoric/epistemic sources")
    if p.sigma_total is not None:
        UncertaintyPrediction(p.mu, p.sigma_total, p.sigma_aleatoric, p.sigma_epistemic)
    return p.sigma_aleatoric, p.sigma_epistemic


def _check_input(x, n_inputs):
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != n_inputs:
        raise ConfigurationError(f"input width {X.shape[-1]} != estimator input width {n_inputs}")
    bad = ~np.all(np.isfinite(X), axis=1)
    if np.any(bad):
        raise InvalidInputError(f"non-finite input features at row {int(np.flatnonzero(bad)[0])}")
    return X


class Estimator:
    """Base class. Subclasses implement ``_predict(X, seed)``.

    ``_predict`` returns ``(mu, sigma_total, sigma_aleatoric, sigma_epistemic)``
    as 1-D arrays (components may be None).
    """

    n_inputs = 1
    sigma_floor = 0.0

    def predict(self, x, seed=0):
        X = _check_input(x, self.n_inputs)
        mu, tot, ale, epi = self._predict(X, seed)
        try:
            return UncertaintyPrediction(mu, tot, ale, epi)
        except EstimatorFault as exc:
            raise EstimatorFault(f"{type(self).__name__}: {exc}") from None

    def bare_predict(self, x):
        """Point prediction of the underlying model without uncertainty machinery."""
        raise NotImplementedError

    def describe(self):
        return {"variant": type(self).__name__}


def predict(est, x, seed=0):
    return est.predict(x, seed)


def _mean_head(model, X, stochastic=False, seed=None):
    mu, sigma = forward(model, X, stochastic=stochastic, seed=seed)
    return mu[:, 0], None if sigma is None else sigma[:, 0]


def _single_output(model):
    if model.n_outputs != 1:
        raise ConfigurationError(f"estimators need scalar-output models, got {model.n_outputs} outputs")


class ParametricGaussian(Estimator):
    def __init__(self, model: Mlp):
        if model.head != "gaussian":
            raise ConfigurationError("ParametricGaussian needs a gaussian-head model")
        _single_output(model)
        self.model = model
        self.n_inputs = model.n_inputs
        self.sigma_floor = model.sigma_floor

    def _predict(self, X, seed):
        mu, sigma = _mean_head(self.model, X)
        return mu, sigma, sigma, np.zeros_like(sigma)

    def bare_predict(self, x):
        return _mean_head(self.model, _check_input(x, self.n_inputs))[0]


class McDropout(Estimator):
    """Monte-Carlo dropout over ``samples`` stochastic passes.

    ``rate`` overrides the model's hidden dropout rates at inference. For a
    point-head model the aleatoric part is pinned at the model's sigma
    floor so that the total stays strictly positive.
    """

    def __init__(self, model: Mlp, samples=DEFAULT_DROPOUT_SAMPLES, rate=None):
        if samples < 2:
            raise ConfigurationError("McDropout needs at least 2 samples")
        _single_output(model)
        if rate is not None:
            if not 0.0 <= rate < 1.0:
                raise ConfigurationError("dropout rate must lie in [0, 1)")
            model = model.with_dropout(rate)
        self.model = model
        self.samples = int(samples)
        self.rate = rate
        self.n_inputs = model.n_inputs
        self.sigma_floor = model.sigma_floor

    def _predict(self, X, seed):
        mus, variances = [], []
        for t in range(self.samples):
            mu, sigma = _mean_head(self.model, X, stochastic=True, seed=rng.derive_seed(seed, "mc", t))
            mus.append(mu)
            if sigma is not None:
                variances.append(sigma * sigma)
        mus = np.array(mus)
        mu = mus.mean(axis=0)
        epi = mus.std(axis=0)
        if variances:
            ale = np.sqrt(np.mean(variances, axis=0))
        else:
            ale = np.full_like(mu, self.model.sigma_floor)
        return mu, np.sqrt(ale * ale + epi * epi), ale, epi

    def bare_predict(self, x):
        return _mean_head(self.model, _check_input(x, self.n_inputs))[0]

    def describe(self):
        return {"variant": "McDropout", "samples": self.samples, "rate": self.rate}


def ensemble_moments(mus, sigmas):
    """Combine member Gaussians ``(M, N)`` into mixture mean and variances.

    Returns ``(mu, aleatoric_var, epistemic_var)`` with the member spread
    measured by the population (divide-by-M) variance.
    """
    mus = np.asarray(mus, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    return mus.mean(axis=0), np.mean(sigmas * sigmas, axis=0), mus.var(axis=0)


class DeepEnsemble(Estimator):
    def __init__(self, members):
        members = list(members)
        if len(members) < 2:
            raise ConfigurationError("DeepEnsemble needs at least 2 members")
        for m in members:
            if m.head != "gaussian":
                raise ConfigurationError("ensemble members must have gaussian heads")
            _single_output(m)
            if m.n_inputs != members[0].n_inputs:
                raise ConfigurationError("ensemble members disagree on input width")
        self.members = members
        self.n_inputs = members[0].n_inputs
        self.sigma_floor = min(m.sigma_floor for m in members)

    def _predict(self, X, seed):
        outs = [_mean_head(m, X) for m in self.members]
        mu, ale_var, epi_var = ensemble_moments([o[0] for o in outs], [o[1] for o in outs])
        return mu, np.sqrt(ale_var + epi_var), np.sqrt(ale_var), np.sqrt(epi_var)

    def bare_predict(self, x):
        return _mean_head(self.members[0], _check_input(x, self.n_inputs))[0]

    def describe(self):
        return {"variant": "DeepEnsemble", "members": len(self.members)}


class Scaled(Estimator):
    """Multiplies every sigma of ``inner`` by a global factor."""

    def __init__(self, inner: Estimator, scale: float):
        if not scale > 0:
            raise ConfigurationError(f"scale must be > 0, got {scale}")
        self.inner = inner
        self.scale = float(scale)
        self.n_inputs = inner.n_inputs
        self.sigma_floor = inner.sigma_floor * self.scale

    def _predict(self, X, seed):
        p = self.inner.predict(X, seed)
        s = self.scale
        scale = lambda a: None if a is None else a * s  # noqa: E731
        return p.mu, scale(p.sigma_total), scale(p.sigma_aleatoric), scale(p.sigma_epistemic)

    def bare_predict(self, x):
        return self.inner.bare_predict(x)

    def describe(self):
        return {"variant": "Scaled", "scale": self.scale, "inner": self.inner.describe()}


class Bypass(Estimator):
    """Black-box model whose uncertainty is piped around it.

    ``model`` is any callable mapping ``(N, d)`` inputs to ``N`` means (or
    an :class:`Mlp`). The emitted sigma is the incoming sigma plus a fixed
    ``margin``; a black box cannot attribute uncertainty.
    """

    def __init__(self, model, margin=0.0, n_inputs=None):
        if margin < 0:
            raise ConfigurationError("bypass margin must be >= 0")
        if isinstance(model, Mlp):
            _single_output(model)
            net = model
            model = lambda X: _mean_head(net, X)[0]  # noqa: E731
            n_inputs = net.n_inputs
        self.model = model
        self.margin = float(margin)
        self.n_inputs = 1 if n_inputs is None else int(n_inputs)

    def predict(self, x, seed=0, sigma_in=0.0):
        X = _check_input(x, self.n_inputs)
        sigma_in = np.broadcast_to(np.asarray(sigma_in, dtype=np.float64), (X.shape[0],))
        if np.any(~(sigma_in >= 0)):
            raise DomainError("incoming sigma must be >= 0")
        sigma = sigma_in + self.margin
        if np.any(sigma <= 0):
            raise CapabilityError("bypass stage without incoming sigma or margin emits no uncertainty")
        return UncertaintyPrediction(np.asarray(self.model(X), dtype=np.float64).reshape(-1), sigma)

    def bare_predict(self, x):
        return np.asarray(self.model(_check_input(x, self.n_inputs)), dtype=np.float64).reshape(-1)

    def describe(self):
        return {"variant": "Bypass", "margin": self.margin}


class Analytic(Estimator):
    """Estimator defined by closed-form mean and sigma functions.

    Used as ground-truth oracle on synthetic tasks and for toy problems.
    ``attribution="aleatoric"`` reports all sigma as aleatoric.
    """

    def __init__(self, mean_fn, sigma_fn, n_inputs=1, attribution=None, name="Analytic"):
        if attribution not in (None, "aleatoric", "epistemic"):
            raise ConfigurationError(f"unknown attribution {attribution!r}")
        self.mean_fn = mean_fn
        self.sigma_fn = sigma_fn
        self.n_inputs = int(n_inputs)
        self.attribution = attribution
        self.name = name

    def _predict(self, X, seed):
        mu = np.asarray(self.mean_fn(X), dtype=np.float64).reshape(-1)
        sigma = np.broadcast_to(np.asarray(self.sigma_fn(X), dtype=np.float64), mu.shape).copy()
        if self.attribution == "aleatoric":
            return mu, sigma, sigma, np.zeros_like(sigma)
        if self.attribution == "epistemic":
            return mu, sigma, np.zeros_like(sigma), sigma
        return mu, sigma, None, None

    def bare_predict(self, x):
        return np.asarray(self.mean_fn(_check_input(x, self.n_inputs)), dtype=np.float64).reshape(-1)

    def describe(self):
        return {"variant": self.name}


def oracle_estimator(generator, sigma_factor=1.0):
    """Analytic estimator that knows the generator's mean and noise exactly."""
    return Analytic(generator.mean_fn, lambda X: sigma_factor * generator.noise_fn(X),
                    n_inputs=generator.n_features, attribution="aleatoric", name="Oracle")


FAULTS = ("negative_sigma", "nan_mean", "unseeded", "accepts_nan")


class FaultInjected(Estimator):
    """Wraps an estimator and plants a defect, for exercising technical tests."""

    def __init__(self, inner: Estimator, fault: str):
        if fault not in FAULTS:
            raise ConfigurationError(f"unknown fault {fault!r}; choose from {', '.join(FAULTS)}")
        self.inner = inner
        self.fault = fault
        self.n_inputs = inner.n_inputs
        self.sigma_floor = inner.sigma_floor

    def predict(self, x, seed=0):
        if self.fault == "accepts_nan":
            X = np.atleast_2d(np.asarray(x, dtype=np.float64))
            clean = np.nan_to_num(X)
            p = self.inner.predict(clean, seed)
            return UncertaintyPrediction(p.mu, p.sigma_total, p.sigma_aleatoric, p.sigma_epistemic)
        return super().predict(x, seed)

    def _predict(self, X, seed):
        p = self.inner.predict(X, seed)
        mu, tot = p.mu.copy(), p.sigma_total.copy()
        if self.fault == "negative_sigma":
            tot[:] = -1.0
            return mu, tot, None, None
        if self.fault == "nan_mean":
            mu[:] = np.nan
            return mu, tot, None, None
        # unseeded: fresh OS entropy on every call
        mu = mu + np.random.default_rng().normal(0.0, 1e-3, size=mu.shape)
        return mu, tot, p.sigma_aleatoric, p.sigma_epistemic

    def bare_predict(self, x):
        return self.inner.bare_predict(x)

    def describe(self):
        return {"variant": "FaultInjected", "fault": self.fault, "inner": self.inner.describe()}


def fit_scale(est, calib, seed=0):
    """Fit a global sigma multiplier by closed-form NLL minimisation.

    For normalised residuals ``r = (y - mu) / sigma`` the mean Gaussian NLL
    of ``s * sigma`` is minimised at ``s = sqrt(mean(r**2))``.
    """
    if len(calib) == 0:
        raise ConfigurationError("calibration set is empty")
    p = est.predict(calib.x, seed)
    r = (calib.y - p.mu) / p.sigma
    s = float(np.sqrt(np.mean(r * r)))
    if not s > 0:
        raise DomainError("all calibration residuals are zero; scale is undefined")
    return Scaled(est, s)


@dataclass(frozen=True)
class Stage:
    """One model in a chain. ``internal`` stages use but do not emit sigma."""

    estimator: Estimator
    internal: bool = False


def propagate_chain(chain, x, sigma_in=0.0, samples=DEFAULT_CHAIN_SAMPLES, seed=0):
    """Push a batch through a chain of estimators, propagating sigma.

    Non-bypass stages facing a positive incoming sigma draw ``samples``
    Gaussian perturbations of their input, predict each, and combine the
    results like an ensemble. The spread caused by input noise is counted
    as aleatoric. Bypass stages add their margin to the incoming sigma.
    """
    stages = [s if isinstance(s, Stage) else Stage(s) for s in chain]
    if not stages:
        raise ConfigurationError("empty chain")
    X = np.asarray(x, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    sig = np.broadcast_to(np.asarray(sigma_in, dtype=np.float64), (X.shape[0],)).copy()
    if np.any(~(sig >= 0)):
        raise DomainError("incoming sigma must be >= 0")
    if np.any(sig > 0) and samples < 2:
        raise ConfigurationError("propagating a positive sigma needs at least 2 samples")

    pred = None
    for k, stage in enumerate(stages):
        est = stage.estimator
        if X.shape[1] != est.n_inputs:
            raise ConfigurationError(f"stage {k} expects {est.n_inputs} inputs, receives {X.shape[1]}")
        stage_seed = seed if k == 0 else rng.derive_seed(seed, "stage", k)
        if isinstance(est, Bypass):
            pred = est.predict(X, stage_seed, sigma_in=sig)
        elif not np.any(sig > 0):
            pred = est.predict(X, stage_seed)
        else:
            pred = _sampled_stage(est, X, sig, samples, rng.derive_seed(seed, "chain", k))
        sig = pred.sigma_total
        if stage.internal:
            pred = UncertaintyPrediction(pred.mu, None)
            sig = np.zeros_like(pred.mu)
        X = pred.mu.reshape(-1, 1)
    return pred


def _sampled_stage(est, X, sig, samples, seed):
    noise = rng.stream(seed, "perturb").standard_normal((samples,) + X.shape)
    mus, tot2, ale2, epi2 = [], [], [], []
    decomposed = True
    for s in range(samples):
        p = est.predict(X + sig[:, None] * noise[s], rng.derive_seed(seed, "sample", s))
        mus.append(p.mu)
        tot2.append(p.sigma**2)
        if p.has_decomposition:
            ale2.append(p.sigma_aleatoric**2)
            epi2.append(p.sigma_epistemic**2)
        else:
            decomposed = False
    mus = np.array(mus)
    spread = mus.var(axis=0)
    total = np.sqrt(np.mean(tot2, axis=0) + spread)
    if not decomposed:
        return UncertaintyPrediction(mus.mean(axis=0), total)
    ale = np.sqrt(np.mean(ale2, axis=0) + spread)
    epi = np.sqrt(np.mean(epi2, axis=0))
    # recompute the total from its parts to keep the identity exact
    return UncertaintyPrediction(mus.mean(axis=0), np.sqrt(ale * ale + epi * epi), ale, epi)
