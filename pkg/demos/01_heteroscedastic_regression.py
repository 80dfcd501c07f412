"""Train a Gaussian-head network on noisy data and check how well its sigma tracks the truth.

The task is y = sin(2x) + noise whose std grows with |x|. A network with a
mean and a sigma output, trained on the Gaussian NLL, should learn both.
A plain regression net with one global sigma serves as the reference.
"""

import numpy as np

from uqtest import Generator, Mlp, ParametricGaussian, TrainConfig, UncertaintyPrediction, forward, generate, train
from uqtest.metrics import ece_regression, local_wasserstein, nll_mean

task = Generator()
data = generate(task, 4096, seed=1)
test = generate(task, 4000, seed=2)
cfg = dict(learning_rate=3e-3, epochs=300, batch_size=128, seed=0)

net = train(Mlp.init([1, 32, 32, 1], "tanh", "gaussian", seed=0), data, TrainConfig(loss="gaussian_nll", **cfg))
est = ParametricGaussian(net.model)
print(f"trained for {len(net.loss_trace)} epochs, final NLL {net.loss_trace[-1]:.3f}")

grid = np.linspace(-3, 3, 7)[:, None]
p = est.predict(grid)
print("\n     x   sigma_true  sigma_pred")
for x, s_true, s_pred in zip(grid[:, 0], task.noise_fn(grid), p.sigma):
    print(f"{x:6.1f}  {s_true:10.3f}  {s_pred:10.3f}")

point = train(Mlp.init([1, 32, 32, 1], "tanh", "point", seed=0), data, TrainConfig(loss="mse", **cfg)).model
s_const = np.sqrt(np.mean((data.y - forward(point, data.x)[0][:, 0]) ** 2))
const = UncertaintyPrediction(forward(point, test.x)[0][:, 0], np.full(len(test), s_const))
p = est.predict(test.x)

print(f"\n{'':24s}{'heteroscedastic':>16s}{'constant sigma':>16s}")
print(f"{'NLL':24s}{nll_mean(p, test.y):16.3f}{nll_mean(const, test.y):16.3f}")
print(f"{'regression ECE':24s}{ece_regression(p, test.y):16.3f}{ece_regression(const, test.y):16.3f}")
lw = local_wasserstein(p, test.mu_gt, test.sigma_gt) / len(test)
lw_c = local_wasserstein(const, test.mu_gt, test.sigma_gt) / len(test)
print(f"{'local Wasserstein':24s}{lw:16.4f}{lw_c:16.4f}")
