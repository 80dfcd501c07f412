"""Four ways to pick evaluation points, plus input corruptions.

Each strategy looks for a different kind of weakness: the worst-scored
fraction of a test set, cells along a semantic axis, a hand-picked
critical set, and inputs found by searching for bad scores.
"""

from pathlib import Path

import numpy as np

from uqtest import Analytic, CuratedSet, FullOdd, QuantileSlice, SearchConfig, SemanticSweep, Shifted, oracle_estimator, select
from uqtest.datasel import mask_sensitivity, search
from uqtest.metrics import ece_regression, nll_mean
from uqtest.synthdata import Generator

task = Generator()
# a deliberately overconfident estimator: the true mean, but sigma too small by 30%
est = oracle_estimator(task, sigma_factor=0.7)
test = FullOdd(task, 4000, seed=2)

worst = select(QuantileSlice("nll", 0.9, 1.0, base=test), est)
print(f"worst NLL decile: {len(worst)} rows, mean NLL {nll_mean(est.predict(worst.x), worst.y):.2f}, "
      f"|x| mean {np.abs(worst.x).mean():.2f}")

print("\nnoise sweep (data gets noisier, sigma does not follow):")
for value in (0.8, 1.0, 1.2, 1.4):
    cell = select(SemanticSweep(task, "noise_scale", (value,), 2000, seed=3))
    print(f"  noise_scale={value:.1f}  ECE {ece_regression(est.predict(cell.x), cell.y):.3f}")

critical = select(CuratedSet(str(Path(__file__).resolve().parent.parent / "configs" / "curated_critical.jsonl")))
print(f"\ncurated critical set: {len(critical)} rows, mean NLL {nll_mean(est.predict(critical.x), critical.y):.2f}")

# a second model with a local mean error near x = 1 that its sigma does not cover
bumped = Analytic(lambda X: task.mean_fn(X) + 0.4 * np.exp(-((X[:, 0] - 1.0) ** 2) / 0.05),
                  lambda X: task.noise_fn(X), attribution="aleatoric")
found = search(bumped, SearchConfig(objective="abs_normalized_residual", box=((-3.0, 3.0),), restarts=5,
                                    steps=100, seed=0), task)
print("\nsearch for large |error| / sigma on a model with a hidden flaw (worst first):")
for rec in found[:3]:
    print(f"  x={rec['x'][0]:+.3f}  score {rec['score']:.3f}  source {rec['attribution']}")

noisy = select(Shifted(test, "gaussian_noise", 0.3))
print(f"\nECE with input noise 0.3: {ece_regression(est.predict(noisy.x), noisy.y):.3f} "
      f"(clean: {ece_regression(est.predict(select(test).x), select(test).y):.3f})")
print(f"sigma sensitivity to masking x: {mask_sensitivity(est, select(test))[0]:.3f}")
