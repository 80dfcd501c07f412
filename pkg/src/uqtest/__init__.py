"""Requirement-driven testing of neural-network uncertainty estimators.

Layers, bottom up: a small numpy MLP (:mod:`uqtest.nn`), uncertainty
estimators wrapping it (:mod:`uqtest.estimators`), quality measures
(:mod:`uqtest.metrics`), synthetic data with ground truth
(:mod:`uqtest.synthdata`), the uncertainty ODD (:mod:`uqtest.odd`),
acceptance criteria (:mod:`uqtest.criteria`), data selection strategies
(:mod:`uqtest.datasel`), the four-level test harness
(:mod:`uqtest.harness`) and verdict aggregation (:mod:`uqtest.aggregate`).
"""

from .aggregate import Verdict, evaluate_tree, overall, parse_tree
from .criteria import AcceptanceCriterion, Level, Outcome, RequirementCategory, parse_criteria
from .datasel import (CuratedSet, FullOdd, Path1D, QuantileSlice, SearchConfig, SearchGenerated, SemanticSlice,
                      SemanticSweep, Shifted, search, select)
from .errors import (CapabilityError, ConfigurationError, DomainError, EmptySelectionError, EstimatorFault,
                     InvalidInputError, UQError)
from .estimators import (Analytic, Bypass, DeepEnsemble, FaultInjected, McDropout, ParametricGaussian, Scaled,
                         Stage, UncertaintyPrediction, decompose, fit_scale, oracle_estimator, propagate_chain)
from .harness import TestCase, TestResult, run_complementary, run_global, run_subset, run_suite, run_technical, run_temporal
from .metrics import MetricKind
from .nn import Mlp, TrainConfig, forward, grad_check, train
from .odd import OddSpec, Region, SemanticDimension, check_consistency, contains
from .synthdata import Dataset, Generator, generate, load_curated, save_jsonl

__version__ = "0.1.0"
