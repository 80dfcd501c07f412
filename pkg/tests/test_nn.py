import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uqtest import Mlp, TrainConfig, forward, grad_check, train
from uqtest.errors import ConfigurationError, DomainError, StateError, TrainingDivergedError
from uqtest.nn import gaussian_nll_loss, load_checkpoint, save_checkpoint, softplus
from uqtest.synthdata import Dataset


def identity_net():
    return Mlp((np.eye(2),), (np.zeros(2),), ("identity",), (), "point")


def test_identity_net_passes_input_through():
    mu, sigma = forward(identity_net(), [1.0, 2.0])
    assert mu.tolist() == [1.0, 2.0]
    assert sigma is None


def test_zero_dropout_stochastic_equals_deterministic():
    net = Mlp.init([2, 8, 1], seed=3)
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    det = forward(net, x)[0]
    for seed in range(5):
        assert np.array_equal(forward(net, x, stochastic=True, seed=seed)[0], det)


def test_dropout_outputs_vary_across_seeds():
    net = Mlp.init([2, 8, 1], seed=3, dropout=0.5)
    x = np.array([0.7, -0.4])
    outs = np.array([forward(net, x, stochastic=True, seed=s)[0][0] for s in range(10_000)])
    assert outs.var() > 0
    # inverted dropout keeps the mean of each hidden unit, so the sample mean sits near the deterministic output
    assert abs(outs.mean() - forward(net, x)[0][0]) < 0.1 * (abs(forward(net, x)[0][0]) + outs.std())


def test_stochastic_requires_seed():
    with pytest.raises(ConfigurationError):
        forward(Mlp.init([1, 4, 1], dropout=0.2), [0.0], stochastic=True)


def test_dimension_mismatch_is_configuration_error():
    with pytest.raises(ConfigurationError):
        forward(Mlp.init([3, 4, 1]), [1.0, 2.0])


def test_non_finite_weights_are_state_error():
    net = Mlp.init([1, 4, 1])
    w = [a.copy() for a in net.weights]
    w[0][0, 0] = np.nan
    with pytest.raises(StateError):
        forward(net.with_params(w, net.biases), [0.0])


@pytest.mark.parametrize("mu,sigma,y,expected", [
    (0.0, 1.0, 0.0, 0.9189385332046727),
    (0.0, 1.0, 2.0, 2.9189385332046727),
    (1.0, 2.0, 3.0, math.log(2) + 0.5 + 0.5 * math.log(2 * math.pi)),
])
def test_gaussian_nll_analytic(mu, sigma, y, expected):
    assert gaussian_nll_loss(mu, sigma, y) == pytest.approx(expected, abs=1e-7)


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_gaussian_nll_rejects_nonpositive_sigma(sigma):
    with pytest.raises(DomainError):
        gaussian_nll_loss(0.0, sigma, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.integers(0, 2**32))
def test_gaussian_head_sigma_never_below_floor(raw, seed):
    net = Mlp.init([1, 4, 1], head="gaussian", seed=seed)
    _, sigma = forward(net, np.array(raw)[:, None])
    assert np.all(sigma >= net.sigma_floor)


def test_softplus_is_stable_for_large_inputs():
    s = softplus(np.array([-800.0, 0.0, 800.0]))
    assert np.all(np.isfinite(s))
    assert s[1] == pytest.approx(math.log(2))
    assert s[2] == pytest.approx(800.0)


def _constant_data(c, n=64):
    x = np.linspace(-1, 1, n)[:, None]
    return Dataset(x, np.full(n, c))


def test_training_constant_targets_converges_to_constant():
    net = Mlp.init([1, 8, 1], seed=1)
    cfg = TrainConfig(learning_rate=0.01, epochs=6000, batch_size=64, seed=2)
    res = train(net, _constant_data(0.7), cfg)
    pred = forward(res.model, np.linspace(-1, 1, 11)[:, None])[0][:, 0]
    assert np.max(np.abs(pred - 0.7)) < 1e-3
    assert len(res.loss_trace) == cfg.epochs


def test_zero_epochs_leaves_weights_unchanged():
    net = Mlp.init([1, 8, 1], seed=1)
    res = train(net, _constant_data(1.0), TrainConfig(epochs=0))
    assert np.array_equal(res.model.flat_params(), net.flat_params())
    assert res.loss_trace == []


def test_training_is_bit_reproducible():
    net = Mlp.init([1, 8, 8, 1], head="gaussian", dropout=0.1, seed=4)
    data = Dataset(np.linspace(-2, 2, 50)[:, None], np.sin(np.linspace(-2, 2, 50)))
    cfg = TrainConfig(epochs=20, batch_size=8, seed=9, loss="gaussian_nll")
    a, b = train(net, data, cfg), train(net, data, cfg)
    assert a.model.flat_params().tobytes() == b.model.flat_params().tobytes()
    assert a.loss_trace == b.loss_trace


def test_gaussian_nll_needs_gaussian_head():
    with pytest.raises(ConfigurationError):
        train(Mlp.init([1, 4, 1]), _constant_data(0.0), TrainConfig(loss="gaussian_nll"))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_epoch():
    net = Mlp.init([1, 8, 1], seed=0)
    data = Dataset(np.linspace(-1, 1, 32)[:, None], np.full(32, 1e200))
    with pytest.raises(TrainingDivergedError) as info:
        train(net, data, TrainConfig(learning_rate=1.0, epochs=5, optimizer="sgd"))
    assert info.value.epoch == 0


@pytest.mark.parametrize("kwargs", [
    {"learning_rate": 0.0}, {"epochs": -1}, {"batch_size": 0}, {"seed": -1}, {"loss": "hinge"},
    {"optimizer": "rmsprop"},
])
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        TrainConfig(**kwargs)


def test_grad_check_linear_net():
    net = Mlp((np.array([[0.7]]),), (np.array([0.2]),), ("identity",), (), "point")
    x = np.array([[0.5], [-1.0], [2.0]])
    assert grad_check(net, x, np.array([1.0, 0.0, -1.0]), "mse") < 1e-7


@pytest.mark.parametrize("seed", range(3))
def test_grad_check_tanh_and_gaussian(seed):
    gen = np.random.default_rng(seed)
    x, y = gen.normal(size=(6, 2)), gen.normal(size=6)
    assert grad_check(Mlp.init([2, 8, 8, 1], "tanh", seed=seed), x, y, "mse") < 1e-4
    assert grad_check(Mlp.init([2, 8, 1], "tanh", "gaussian", seed=seed), x, y, "gaussian_nll") < 1e-4


def test_checkpoint_round_trip(tmp_path):
    net = Mlp.init([2, 5, 3, 1], "relu", "gaussian", dropout=[0.1, 0.2], seed=8)
    path = tmp_path / "m.json"
    save_checkpoint(net, path)
    doc = json.loads(path.read_text())
    assert doc["version"] == 1 and doc["widths"] == [2, 5, 3, 1]
    back = load_checkpoint(path)
    assert back.flat_params().tobytes() == net.flat_params().tobytes()
    assert back.activations == net.activations and back.dropout == net.dropout


@pytest.mark.parametrize("kwargs", [{"widths": [1]}, {"widths": [1, 0, 1]}, {"widths": [1, 4, 1], "dropout": 1.0},
                                    {"widths": [1, 4, 1], "head": "softmax"}])
def test_invalid_architectures(kwargs):
    with pytest.raises(ConfigurationError):
        Mlp.init(**kwargs)


def test_weights_are_read_only():
    net = Mlp.init([1, 4, 1])
    with pytest.raises(ValueError):
        net.weights[0][0, 0] = 1.0
