"""Epistemic uncertainty from ensembles and MC dropout, inside and outside the training range.

Training inputs cover [-3, 3]. Moving the sampling box to the right with
the generator's ``shift`` parameter walks the inputs out of that range;
model disagreement should grow as it does.
"""

import numpy as np

from uqtest import DeepEnsemble, Generator, McDropout, Mlp, TrainConfig, decompose, generate, train
from uqtest.datasel import sweep

task = Generator()
data = generate(task, 2048, seed=1)


def cfg(seed):
    return TrainConfig(learning_rate=3e-3, epochs=200, batch_size=128, seed=seed, loss="gaussian_nll")


members = [train(Mlp.init([1, 32, 32, 1], "relu", "gaussian", seed=i), data, cfg(i)).model for i in range(5)]
ensemble = DeepEnsemble(members)
dropout_net = train(Mlp.init([1, 64, 64, 1], "relu", "gaussian", dropout=0.1, seed=0), data, cfg(0)).model
mc = McDropout(dropout_net, samples=50)

print("shift  ensemble: aleatoric  epistemic   dropout: aleatoric  epistemic")
for shift, cell in zip(range(8), sweep(task, "shift", list(range(8)), 500, seed=3)):
    ea, ee = decompose(ensemble.predict(cell.x))
    da, de = decompose(mc.predict(cell.x, seed=0))
    print(f"{shift:5d}  {ea.mean():19.3f}  {ee.mean():9.3f}  {da.mean():18.3f}  {de.mean():9.3f}")

inside, outside = np.linspace(-3, 3, 301)[:, None], np.linspace(5, 7, 201)[:, None]
for name, est in (("ensemble", ensemble), ("MC dropout", mc)):
    ratio = est.predict(outside).sigma_epistemic.mean() / est.predict(inside).sigma_epistemic.mean()
    print(f"{name}: epistemic sigma on [5, 7] is {ratio:.1f}x its in-range mean")
