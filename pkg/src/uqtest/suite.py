"""Suite configuration: one JSON document describing a complete test run.

Top-level keys::

    suite_id, seed, fail_fast, generators, odd, estimator, baseline,
    data, criteria, tests, technical, trees, policy

Everything is validated up front so a bad config fails before any test
executes. Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P

from . import estimators as E
from .aggregate import And, Leaf, leaves, parse_tree, validate
from .criteria import Level, parse_criteria, parse_measure, check_threshold
from .datasel import FullOdd, parse_spec, select
from .errors import ConfigurationError, StructuralError, UQError
from .harness import TECHNICAL_IDS, TestCase, case_seed
from .nn import Mlp, TrainConfig, forward, load_checkpoint, train
from .odd import OddSpec, check_consistency
from .synthdata import Generator

TOP_LEVEL = {"suite_id", "seed", "fail_fast", "generators", "odd", "estimator", "baseline", "data",
             "criteria", "tests", "technical", "trees", "policy", "description"}
TECHNICAL_CRITERION = "technical"


@dataclass
class Suite:
    suite_id: str
    seed: int
    fail_fast: bool
    estimator: object
    criteria: list
    cases: list
    trees: dict
    policy: object
    technical_data: object
    technical_params: dict = field(default_factory=dict)
    bare_model: object = None
    odd: OddSpec | None = None
    generators: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    base_dir: str = "."

    @property
    def digest(self):
        return config_digest(self.config)


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_digest(doc):
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}", str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}", str(path)) from None
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object", str(path))
    return doc


# --- models and estimators -------------------------------------------------------

def build_model(doc, ctx, path):
    """A model spec is ``{"checkpoint": file}`` or an architecture with ``train``."""
    if not isinstance(doc, dict):
        raise ConfigurationError("model spec must be an object", path)
    if "checkpoint" in doc:
        ckpt = Path(ctx["base_dir"]) / doc["checkpoint"]
        if not ckpt.exists():
            raise ConfigurationError(f"checkpoint not found: {ckpt}", f"{path}.checkpoint")
        return load_checkpoint(ckpt)
    try:
        model = Mlp.init(doc["widths"], doc.get("activation", "tanh"), doc.get("head", "point"),
                         doc.get("dropout", 0.0), int(doc.get("init_seed", 0)),
                         float(doc.get("sigma_floor", 1e-4)))
    except KeyError as exc:
        raise ConfigurationError(f"missing field {exc.args[0]!r}", path) from None
    tdoc = doc.get("train")
    if tdoc is None:
        return model
    tdoc = dict(tdoc)
    data_doc = tdoc.pop("data", None)
    if data_doc is None:
        raise ConfigurationError("training block needs 'data'", f"{path}.train")
    known = set(TrainConfig.__dataclass_fields__)
    unknown = set(tdoc) - known
    if unknown:
        raise ConfigurationError(f"unknown training fields {sorted(unknown)}", f"{path}.train")
    cfg = TrainConfig(**tdoc)
    spec = parse_spec(data_doc, ctx["generators"], ctx["named"], ctx["base_dir"], ctx["odd"],
                      f"{path}.train.data")
    # training is deferred: resolved lazily in materialize()
    return _Deferred(model, spec, cfg)


@dataclass
class _Deferred:
    model: Mlp
    spec: object
    cfg: TrainConfig

    def materialize(self):
        return train(self.model, select(self.spec, seed=self.cfg.seed), self.cfg).model


def _materialize(m):
    return m.materialize() if isinstance(m, _Deferred) else m


ESTIMATOR_KINDS = ("parametric_gaussian", "mc_dropout", "deep_ensemble", "scaled", "bypass",
                   "oracle", "analytic", "fault_injected")


def ensemble_member_specs(doc, path):
    """Explicit ``members`` or ``size`` copies of ``model`` with shifted seeds."""
    if "members" in doc:
        return [(f"{path}.members[{i}]", d) for i, d in enumerate(doc["members"])]
    base = doc.get("model")
    if not isinstance(base, dict):
        raise ConfigurationError("deep_ensemble needs 'members' or 'model'", path)
    out = []
    for i in range(int(doc.get("size", E.DEFAULT_MEMBERS))):
        d = copy.deepcopy(base)
        d["init_seed"] = int(d.get("init_seed", 0)) + i
        if "train" in d:
            d["train"]["seed"] = int(d["train"].get("seed", 0)) + i
        out.append((f"{path}.member{i}", d))
    return out


def _poly(coeffs, path):
    try:
        c = np.asarray([float(v) for v in coeffs])
    except (TypeError, ValueError):
        raise ConfigurationError("polynomial coefficients must be numbers", path) from None
    if c.size == 0:
        raise ConfigurationError("polynomial needs at least one coefficient", path)
    return lambda X: P.polyval(X[:, 0], c)


def build_estimator(doc, ctx, path="estimator"):
    """Return a zero-argument factory; nothing is trained until it is called."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigurationError("estimator must be an object with a 'kind'", path)
    kind = doc["kind"]
    if kind not in ESTIMATOR_KINDS:
        raise ConfigurationError(f"unknown estimator kind {kind!r}; choose from {', '.join(ESTIMATOR_KINDS)}",
                                 f"{path}.kind")
    if kind == "oracle":
        gen = _generator(doc.get("generator"), ctx, f"{path}.generator")
        factor = float(doc.get("sigma_factor", 1.0))
        return lambda: E.oracle_estimator(gen, factor)
    if kind == "analytic":
        # polynomial mean and sigma in the first feature, coefficients low order first
        mean = _poly(doc.get("mean_poly", [0.0]), f"{path}.mean_poly")
        sigma = _poly(doc.get("sigma_poly", [1.0]), f"{path}.sigma_poly")
        attribution = doc.get("attribution")
        n_inputs = int(doc.get("n_inputs", 1))
        return lambda: E.Analytic(mean, sigma, n_inputs, attribution)
    if kind == "parametric_gaussian":
        m = build_model(doc.get("model"), ctx, f"{path}.model")
        return lambda: E.ParametricGaussian(_materialize(m))
    if kind == "mc_dropout":
        m = build_model(doc.get("model"), ctx, f"{path}.model")
        samples = int(doc.get("samples", E.DEFAULT_DROPOUT_SAMPLES))
        rate = doc.get("rate")
        return lambda: E.McDropout(_materialize(m), samples, rate)
    if kind == "deep_ensemble":
        ms = [build_model(d, ctx, p) for p, d in ensemble_member_specs(doc, path)]
        return lambda: E.DeepEnsemble([_materialize(m) for m in ms])
    if kind == "scaled":
        inner = build_estimator(doc.get("inner"), ctx, f"{path}.inner")
        if "scale" in doc:
            s = float(doc["scale"])
            return lambda: E.Scaled(inner(), s)
        if "fit" not in doc:
            raise ConfigurationError("scaled estimator needs 'scale' or 'fit'", path)
        spec = parse_spec(doc["fit"], ctx["generators"], ctx["named"], ctx["base_dir"], ctx["odd"], f"{path}.fit")
        return lambda: E.fit_scale(inner(), select(spec, seed=ctx["seed"]), ctx["seed"])
    if kind == "bypass":
        margin = float(doc.get("margin", 0.0))
        if margin <= 0:
            raise ConfigurationError("a standalone bypass estimator needs margin > 0", f"{path}.margin")
        if "generator" in doc:
            gen = _generator(doc["generator"], ctx, f"{path}.generator")
            return lambda: E.Bypass(gen.mean_fn, margin, gen.n_features)
        m = build_model(doc.get("model"), ctx, f"{path}.model")
        return lambda: E.Bypass(_materialize(m), margin)
    inner = build_estimator(doc.get("inner"), ctx, f"{path}.inner")
    fault = doc.get("fault")
    if fault not in E.FAULTS:
        raise ConfigurationError(f"unknown fault {fault!r}", f"{path}.fault")
    return lambda: E.FaultInjected(inner(), fault)


def _generator(ref, ctx, path):
    if isinstance(ref, dict):
        return Generator.from_dict(ref, path)
    if ref not in ctx["generators"]:
        raise ConfigurationError(f"unknown generator {ref!r}", path)
    return ctx["generators"][ref]


# --- test cases --------------------------------------------------------------------

def _auto_cases(criteria):
    return [{"id": f"{c.id}/{lv.value}", "criterion": c.id, "level": lv.value}
            for c in criteria if not c.manual for lv in c.test_depth]


def build_cases(doc, criteria, ctx, seed):
    by_id = {c.id: c for c in criteria}
    raw_cases = doc.get("tests")
    if raw_cases is None:
        raw_cases = _auto_cases(criteria)
    if not isinstance(raw_cases, list):
        raise ConfigurationError("tests must be an array", "tests")
    cases, seen = [], set(TECHNICAL_IDS)
    for i, raw in enumerate(raw_cases):
        path = f"tests[{i}]"
        if not isinstance(raw, dict):
            raise ConfigurationError("test case must be an object", path)
        unknown = set(raw) - {"id", "criterion", "level", "data", "measure", "comparator", "threshold",
                              "shifts", "params"}
        if unknown:
            raise ConfigurationError(f"unknown fields {sorted(unknown)}", path)
        tid = raw.get("id")
        if not isinstance(tid, str) or not tid:
            raise ConfigurationError("test id must be a non-empty string", f"{path}.id")
        if tid in seen:
            raise ConfigurationError(f"duplicate test id {tid!r}", f"{path}.id")
        seen.add(tid)
        crit = by_id.get(raw.get("criterion"))
        if crit is None:
            raise ConfigurationError(f"unknown criterion {raw.get('criterion')!r}", f"{path}.criterion")
        if crit.manual:
            raise ConfigurationError(f"criterion {crit.id!r} is manual and takes no test cases", path)
        try:
            level = Level(raw.get("level"))
        except ValueError:
            raise ConfigurationError(f"unknown level {raw.get('level')!r}", f"{path}.level") from None
        if level not in crit.test_depth:
            raise ConfigurationError(f"level {level.value!r} not in test depth of {crit.id!r}", f"{path}.level")
        measure = parse_measure(raw["measure"], f"{path}.measure") if "measure" in raw else crit.measure
        comparator = raw.get("comparator", crit.comparator)
        threshold = raw.get("threshold", crit.threshold)
        check_name = "disparity" if level is Level.COMPLEMENTARY and not raw.get("params", {}).get("composed") \
            else measure.name
        check_threshold(check_name, comparator, threshold, path)
        data = parse_spec(raw.get("data", crit.data_spec), ctx["generators"], ctx["named"], ctx["base_dir"],
                          ctx["odd"], f"{path}.data")
        shifts_raw = raw.get("shifts", {})
        if not isinstance(shifts_raw, dict):
            raise ConfigurationError("shifts must map names to data specs", f"{path}.shifts")
        shifts = tuple((name, parse_spec(s, ctx["generators"], ctx["named"], ctx["base_dir"], ctx["odd"],
                                         f"{path}.shifts.{name}"))
                       for name, s in sorted(shifts_raw.items()))
        cases.append(TestCase(tid, level, crit.id, data, measure, comparator, float(threshold),
                              case_seed(seed, tid), dict(raw.get("params", {})), shifts))
    return cases


def build_trees(doc, criteria, cases):
    """Per-criterion trees (default: And over the criterion's cases)."""
    raw = doc.get("trees", {}) or {}
    if not isinstance(raw, dict):
        raise ConfigurationError("trees must map criterion ids to trees", "trees")
    ids = {c.id for c in criteria}
    extra = sorted(set(raw) - ids)
    if extra:
        raise ConfigurationError(f"trees for unknown criteria {extra}", "trees")
    trees = {}
    for c in criteria:
        own = [k.id for k in cases if k.criterion == c.id]
        try:
            if c.id in raw:
                tree = parse_tree(raw[c.id], f"trees.{c.id}")
                validate(tree, own)
            elif own:
                tree = And(tuple(Leaf(t) for t in own))
            else:
                continue
        except StructuralError as exc:
            raise ConfigurationError(str(exc), f"trees.{c.id}") from None
        trees[c.id] = tree
    return trees


def build_policy(doc, criteria):
    policy = doc.get("policy", "strict")
    if policy == "strict":
        return policy
    try:
        tree = parse_tree(policy, "policy")
        validate(tree, [c.id for c in criteria] + [TECHNICAL_CRITERION])
        missing = sorted({c.id for c in criteria} - set(leaves(tree)))
        if missing:
            raise StructuralError(f"policy tree omits criteria {missing}")
    except StructuralError as exc:
        raise ConfigurationError(str(exc), "policy") from None
    return tree


def load_context(doc, base_dir="."):
    """Parse generators, ODD and named data specs shared by all config sections."""
    suite_seed = doc.get("seed", 0)
    if isinstance(suite_seed, bool) or not isinstance(suite_seed, int) or not 0 <= suite_seed < 2**64:
        raise ConfigurationError("seed must be a non-negative integer", "seed")
    gens_raw = doc.get("generators", {})
    if not isinstance(gens_raw, dict):
        raise ConfigurationError("generators must be an object", "generators")
    generators = {name: Generator.from_dict(g, f"generators.{name}") for name, g in gens_raw.items()}
    odd = None
    if doc.get("odd") is not None:
        odd = OddSpec.from_dict(doc["odd"])
        violations = check_consistency(odd)
        if violations:
            raise ConfigurationError(f"ODD inconsistent: {[v.to_dict() for v in violations]}", "odd")
    named = doc.get("data", {}) or {}
    if not isinstance(named, dict):
        raise ConfigurationError("data must map names to data specs", "data")
    ctx = {"generators": generators, "named": named, "base_dir": str(base_dir), "odd": odd, "seed": suite_seed}
    for name in named:
        parse_spec(name, generators, named, base_dir, odd, f"data.{name}")
    return ctx


def load_suite(doc, base_dir=".", seed=None, fail_fast=None):
    """Validate a config document and build a runnable :class:`Suite`.

    ``seed`` and ``fail_fast`` override the document's values. Estimator
    training runs here, after validation has succeeded.
    """
    doc = copy.deepcopy(doc)
    if seed is not None:
        doc["seed"] = int(seed)
    if fail_fast is not None:
        doc["fail_fast"] = bool(fail_fast)
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise ConfigurationError(f"unknown top-level keys {sorted(unknown)}", "config")
    ctx = load_context(doc, base_dir)
    suite_seed = ctx["seed"]
    generators, named, odd = ctx["generators"], ctx["named"], ctx["odd"]

    criteria = parse_criteria({"criteria": doc.get("criteria", []), "data": named})
    if any(c.id == TECHNICAL_CRITERION for c in criteria):
        raise ConfigurationError(f"criterion id {TECHNICAL_CRITERION!r} is reserved", "criteria")
    cases = build_cases(doc, criteria, ctx, suite_seed)
    trees = build_trees(doc, criteria, cases)
    policy = build_policy(doc, criteria)

    if "estimator" not in doc:
        raise ConfigurationError("missing estimator block", "estimator")
    factory = build_estimator(doc["estimator"], ctx)
    baseline = build_model(doc["baseline"], ctx, "baseline") if "baseline" in doc else None

    tech = dict(doc.get("technical", {}) or {})
    tech_data_doc = tech.pop("data", None)
    if tech_data_doc is not None:
        tech_data = parse_spec(tech_data_doc, generators, named, base_dir, odd, "technical.data")
    elif generators:
        tech_data = FullOdd(next(iter(generators.values())), 256, suite_seed)
    else:
        raise ConfigurationError("technical tests need 'technical.data' or a generator", "technical")

    est = factory()
    bare = None
    if baseline is not None:
        net = _materialize(baseline)
        bare = lambda X: forward(net, np.atleast_2d(X))[0][:, 0]  # noqa: E731
    return Suite(str(doc.get("suite_id", "suite")), suite_seed, bool(doc.get("fail_fast", False)), est,
                 criteria, cases, trees, policy, tech_data, tech, bare, odd, generators, doc, str(base_dir))


def load_suite_file(path, seed=None, fail_fast=None):
    return load_suite(read_config(path), Path(path).resolve().parent, seed, fail_fast)


__all__ = ["Suite", "load_suite", "load_suite_file", "read_config", "config_digest", "canonical_json",
           "build_estimator", "build_model", "UQError"]
