import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uqtest import (Analytic, Bypass, DeepEnsemble, FaultInjected, McDropout, Mlp, ParametricGaussian, Scaled,
                    Stage, TrainConfig, UncertaintyPrediction, decompose, fit_scale, generate, oracle_estimator,
                    propagate_chain, train)
from uqtest.errors import (CapabilityError, ConfigurationError, DomainError, EstimatorFault, InvalidInputError)
from uqtest.estimators import ensemble_moments
from uqtest.metrics import nll_mean
from uqtest.synthdata import Dataset

from conftest import constant_estimator


def const_member(mu, sigma):
    """Gaussian-head 1-1 net emitting a constant (mu, sigma)."""
    floor = 1e-4
    raw = np.log(np.expm1(sigma - floor))
    return Mlp((np.zeros((2, 1)),), (np.array([mu, raw]),), ("identity",), (), "gaussian", floor)


def test_identical_members_have_zero_epistemic():
    p = DeepEnsemble([const_member(0.3, 0.5)] * 3).predict([0.0])
    assert p.sigma_epistemic[0] == 0.0
    assert p.sigma_total[0] == pytest.approx(0.5)


def test_two_member_combination_rule():
    p = DeepEnsemble([const_member(0.0, 1.0), const_member(2.0, 1.0)]).predict([0.0])
    assert p.mu[0] == pytest.approx(1.0)
    assert p.sigma_aleatoric[0] == pytest.approx(1.0)
    assert p.sigma_epistemic[0] == pytest.approx(1.0)
    assert p.sigma_total[0] == pytest.approx(np.sqrt(2), abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31))
def test_ensemble_moments_match_mixture_moments(m, seed):
    gen = np.random.default_rng(seed)
    mus, sigmas = gen.normal(size=(m, 5)), gen.uniform(0.1, 2.0, size=(m, 5))
    mu, ale, epi = ensemble_moments(mus, sigmas)
    # direct mixture moments: E[y] and E[y^2] - E[y]^2 for an equal-weight Gaussian mixture
    second = np.mean(sigmas**2 + mus**2, axis=0)
    np.testing.assert_allclose(mu, mus.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(ale + epi, second - mus.mean(axis=0) ** 2, rtol=1e-10, atol=1e-12)


def test_parametric_gaussian_decomposition():
    p = ParametricGaussian(const_member(1.0, 0.4)).predict([[0.0], [1.0]])
    ale, epi = decompose(p)
    np.testing.assert_allclose(ale, p.sigma_total)
    assert np.all(epi == 0)


def test_decompose_requires_components():
    with pytest.raises(CapabilityError):
        decompose(UncertaintyPrediction([0.0], [1.0]))


def test_decompose_returns_pair():
    ale, epi = decompose(UncertaintyPrediction([0.0], [np.sqrt(2)], [1.0], [1.0]))
    assert (ale[0], epi[0]) == (1.0, 1.0)


def test_inconsistent_decomposition_is_rejected():
    with pytest.raises(EstimatorFault):
        UncertaintyPrediction([0.0], [1.0], [1.0], [1.0])


@pytest.mark.parametrize("mu,sigma", [([np.nan], [1.0]), ([0.0], [0.0]), ([0.0], [-1.0]), ([0.0], [np.inf])])
def test_invalid_outputs_are_faults(mu, sigma):
    with pytest.raises(EstimatorFault):
        UncertaintyPrediction(mu, sigma)


@pytest.fixture(scope="module")
def dropout_net():
    g_data = generate(__import__("uqtest").Generator(), 256, 4)
    net = Mlp.init([1, 16, 16, 1], "relu", dropout=0.5, seed=2)
    return train(net, g_data, TrainConfig(epochs=30, batch_size=32, seed=1)).model


def test_mc_dropout_is_seeded_and_spread(dropout_net):
    est = McDropout(dropout_net, samples=200, rate=0.5)
    x = np.linspace(-3, 3, 7)[:, None]
    a, b = est.predict(x, seed=11), est.predict(x, seed=11)
    assert np.all(a.sigma_epistemic > 0)
    assert a.arrays().tobytes() == b.arrays().tobytes()
    assert not np.array_equal(a.mu, est.predict(x, seed=12).mu)
    # point head: aleatoric part pinned at the floor
    assert np.all(a.sigma_aleatoric == dropout_net.sigma_floor)


def test_mc_dropout_prediction_is_batch_independent(dropout_net):
    est = McDropout(dropout_net, samples=20)
    x = np.linspace(-3, 3, 9)[:, None]
    full = est.predict(x, seed=3)
    for i in range(len(x)):
        row = est.predict(x[i], seed=3)
        # same sampled sub-networks; only BLAS summation order may differ
        np.testing.assert_allclose(row.arrays()[:, 0], full.arrays()[:, i], rtol=1e-12)


@pytest.mark.parametrize("bad", [{"samples": 1}, {"rate": 1.0}, {"rate": -0.1}])
def test_mc_dropout_validation(dropout_net, bad):
    with pytest.raises(ConfigurationError):
        McDropout(dropout_net, **bad)


def test_ensemble_validation():
    with pytest.raises(ConfigurationError):
        DeepEnsemble([const_member(0, 1)])
    with pytest.raises(ConfigurationError):
        DeepEnsemble([const_member(0, 1), Mlp.init([1, 2, 1])])


def test_scaled_multiplies_every_component():
    inner = DeepEnsemble([const_member(0.0, 1.0), const_member(2.0, 1.0)])
    p = Scaled(inner, 3.0).predict([0.0])
    assert p.sigma_aleatoric[0] == pytest.approx(3.0)
    assert p.sigma_epistemic[0] == pytest.approx(3.0)
    with pytest.raises(ConfigurationError):
        Scaled(inner, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 2**31))
def test_scaling_preserves_residual_ordering(s, seed):
    gen = np.random.default_rng(seed)
    mu, sig, y = gen.normal(size=20), gen.uniform(0.1, 2, 20), gen.normal(size=20)
    base = np.abs(y - mu) / sig
    scaled = np.abs(y - mu) / (s * sig)
    assert np.array_equal(np.argsort(base, kind="stable"), np.argsort(scaled, kind="stable"))


def _residual_data(r, sigma=1.0):
    r = np.asarray(r, dtype=float)
    return Dataset(np.zeros((r.size, 1)), r * sigma)


def test_fit_scale_closed_form():
    est = fit_scale(constant_estimator(0.0, 1.0), _residual_data([1, 1, 2, 2]))
    assert est.scale == pytest.approx(np.sqrt(2.5))
    assert est.scale == pytest.approx(1.5811388, abs=1e-6)


def test_fit_scale_fixed_point():
    est = fit_scale(constant_estimator(0.0, 2.0), _residual_data([1, -1, 1, -1], sigma=2.0))
    assert est.scale == pytest.approx(1.0)


def test_fit_scale_empty_calibration():
    with pytest.raises(ConfigurationError):
        fit_scale(constant_estimator(), Dataset(np.zeros((0, 1)), np.zeros(0)))


def test_fit_scale_matches_grid_oracle_on_halved_sigma(canonical):
    halved = oracle_estimator(canonical, sigma_factor=0.5)
    calib = generate(canonical, 4096, 21)
    est = fit_scale(halved, calib)
    grid = np.linspace(1.0, 3.0, 20001)
    p = halved.predict(calib.x)
    r2 = ((calib.y - p.mu) / p.sigma) ** 2
    nll = np.log(grid[:, None] * p.sigma) + r2 / (2 * grid[:, None] ** 2)
    best = grid[np.argmin(nll.mean(axis=1))]
    assert 1.8 <= est.scale <= 2.2
    assert abs(est.scale - best) <= 1e-4
    held = generate(canonical, 4096, 22)
    assert nll_mean(est.predict(held.x), held.y) < nll_mean(halved.predict(held.x), held.y)


def test_bypass_additive_rule():
    est = Bypass(lambda X: 2 * X[:, 0], margin=0.1)
    p = propagate_chain([est], [[1.0]], sigma_in=0.3)
    assert p.sigma_total[0] == pytest.approx(0.4)
    assert p.mu[0] == 2.0
    assert not p.has_decomposition


def test_bypass_without_sigma_is_capability_error():
    with pytest.raises(CapabilityError):
        Bypass(lambda X: X[:, 0]).predict([[1.0]])
    with pytest.raises(ConfigurationError):
        Bypass(lambda X: X[:, 0], margin=-1)


def test_single_stage_zero_sigma_equals_predict(trained_gaussian):
    x = np.linspace(-2, 2, 5)[:, None]
    a = propagate_chain([trained_gaussian], x, 0.0, samples=7, seed=4)
    b = trained_gaussian.predict(x, 4)
    assert a.arrays().tobytes() == b.arrays().tobytes()


def test_linear_stage_propagation_matches_analytic():
    tiny = 1e-6
    stage = Analytic(lambda X: 2 * X[:, 0], lambda X: np.full(X.shape[0], tiny))
    p = propagate_chain([stage], [[0.5]], sigma_in=1.0, samples=100_000, seed=1)
    assert p.sigma_total[0] == pytest.approx(2.0, rel=0.03)
    assert p.mu[0] == pytest.approx(1.0, abs=0.03)


def test_chain_of_two_stages_and_internal_flag():
    first = Analytic(lambda X: X[:, 0] + 1, lambda X: np.full(X.shape[0], 0.5), attribution="aleatoric")
    second = Analytic(lambda X: 3 * X[:, 0], lambda X: np.full(X.shape[0], 0.1), attribution="aleatoric")
    p = propagate_chain([first, second], [[0.0]], samples=50_000, seed=2)
    # analytic: second stage sees N(1, 0.5^2) -> mean 3, var 9*0.25 + 0.01
    assert p.mu[0] == pytest.approx(3.0, abs=0.02)
    assert p.sigma_total[0] == pytest.approx(np.sqrt(2.26), rel=0.02)
    hidden = propagate_chain([first, Stage(second, internal=True)], [[0.0]], samples=100, seed=2)
    assert hidden.sigma_total is None
    with pytest.raises(CapabilityError):
        hidden.sigma


def test_negative_incoming_sigma_is_domain_error(trained_gaussian):
    with pytest.raises(DomainError):
        propagate_chain([trained_gaussian], [[0.0]], sigma_in=-0.1)


def test_chain_width_mismatch():
    with pytest.raises(ConfigurationError):
        propagate_chain([constant_estimator(n_inputs=2)], [[0.0]])


def test_predict_rejects_nan_input(trained_gaussian):
    with pytest.raises(InvalidInputError):
        trained_gaussian.predict([[np.nan]])


@pytest.mark.parametrize("fault,error", [("negative_sigma", EstimatorFault), ("nan_mean", EstimatorFault)])
def test_fault_injection(trained_gaussian, fault, error):
    with pytest.raises(error):
        FaultInjected(trained_gaussian, fault).predict([[0.0]])


def test_unseeded_fault_breaks_determinism(trained_gaussian):
    est = FaultInjected(trained_gaussian, "unseeded")
    assert not np.array_equal(est.predict([[0.1]], 1).mu, est.predict([[0.1]], 1).mu)


def test_accepts_nan_fault_returns_numbers(trained_gaussian):
    p = FaultInjected(trained_gaussian, "accepts_nan").predict([[np.nan]])
    assert np.isfinite(p.mu[0])
