import numpy as np
import pytest

from uqtest import Analytic, Generator, Mlp, ParametricGaussian, TrainConfig, generate, train


@pytest.fixture(scope="session")
def canonical():
    return Generator()


@pytest.fixture(scope="session")
def trained_gaussian(canonical):
    data = generate(canonical, 2048, 1)
    net = Mlp.init([1, 32, 32, 1], "tanh", "gaussian", seed=0)
    cfg = TrainConfig(learning_rate=3e-3, epochs=200, batch_size=128, seed=0, loss="gaussian_nll")
    return ParametricGaussian(train(net, data, cfg).model)


def constant_estimator(mu=0.0, sigma=1.0, n_inputs=1):
    return Analytic(lambda X: np.full(X.shape[0], mu), lambda X: np.full(X.shape[0], sigma), n_inputs)


_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test backs a numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    ok, _ = _acceptance.get(number, (True, title))
    _acceptance[number] = (ok and rep.passed, title)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_acceptance):
        ok, title = _acceptance[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
