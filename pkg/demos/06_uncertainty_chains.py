"""Pass uncertainty through a chain of models, and recalibrate an overconfident one.

A perception-like first stage produces a noisy estimate; a second stage
consumes it. Sampling the first stage's output distribution shows how the
input uncertainty spreads. A black-box stage can only pipe sigma through
with a safety margin.
"""

import numpy as np

from uqtest import Analytic, Bypass, Generator, Stage, fit_scale, generate, oracle_estimator, propagate_chain
from uqtest.metrics import nll_mean

first = Analytic(lambda X: 2.0 * X[:, 0], lambda X: np.full(len(X), 0.1), attribution="aleatoric")
second = Analytic(lambda X: X[:, 0] ** 2, lambda X: np.full(len(X), 0.05), attribution="aleatoric")
x = np.array([[0.5], [1.0], [2.0]])

p = propagate_chain([first, second], x, samples=20_000, seed=0)
print("two-stage chain (second stage squares the first's output):")
for xi, mu, s in zip(x[:, 0], p.mu, p.sigma):
    # with z ~ N(2x, 0.1^2): Var(z^2) = 4 m^2 s^2 + 2 s^4 for m = 2x, s = 0.1
    m = 2 * xi
    exact = np.sqrt(4 * m**2 * 0.01 + 2 * 1e-4 + 0.05**2)
    print(f"  x={xi}: mu {mu:.3f}, sigma {s:.4f} (analytic {exact:.4f})")

box = Bypass(lambda X: X[:, 0] + 1.0, margin=0.2, n_inputs=1)
p = propagate_chain([first, box], x, seed=0)
print(f"\nblack-box second stage: sigma {p.sigma.round(3)} = first-stage 0.1 + margin 0.2")

internal = propagate_chain([Stage(first, internal=True), second], x, seed=0)
print(f"first stage kept internal: sigma {internal.sigma.round(3)} (its noise is not forwarded)")

task = Generator()
overconfident = oracle_estimator(task, sigma_factor=0.5)
calib, held_out = generate(task, 4096, 21), generate(task, 4096, 22)
fixed = fit_scale(overconfident, calib)
print(f"\nfitted sigma scale {fixed.scale:.3f}; held-out NLL "
      f"{nll_mean(overconfident.predict(held_out.x), held_out.y):.3f} -> "
      f"{nll_mean(fixed.predict(held_out.x), held_out.y):.3f}")
