"""Four-level test hierarchy: technical, global, subset/point-wise, complementary.

Every runner returns :class:`TestResult` objects whose verdict is pass,
fail, error or skipped. Measurement problems always surface as ``error``;
they are never folded into pass or fail.
"""

from __future__ import annotations

import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import metrics, rng
from .criteria import Level, Outcome, compare
from .datasel import (Path1D, QuantileSlice, SearchGenerated, SemanticSweep, search, select, sweep)
from .errors import (CapabilityError, ConfigurationError, DomainError, EmptySelectionError,
                     EstimatorFault, UQError)
from .estimators import propagate_chain
from .metrics import MetricKind

TECHNICAL_IDS = ("technical/output_validity", "technical/invalid_input",
                 "technical/determinism", "technical/latency")
DEFAULT_MIN_GROUP = 30
RATE_FLOOR = 1e-9


@dataclass(frozen=True)
class TestCase:
    id: str
    level: Level
    criterion: str | None
    data: object
    measure: MetricKind
    comparator: str = "<="
    threshold: float = 0.0
    seed: int = 0
    params: dict = field(default_factory=dict)
    shifts: tuple = ()  # (name, DataSpec) pairs for global tests

    __test__ = False  # not a pytest class


@dataclass
class TestResult:
    test_id: str
    level: Level
    verdict: Outcome
    criterion: str | None = None
    measured: dict = field(default_factory=dict)
    message: str = ""
    artifacts: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    runtime: float = 0.0

    __test__ = False

    def to_dict(self):
        return {
            "test_id": self.test_id,
            "level": self.level.value,
            "criterion": self.criterion,
            "verdict": self.verdict.value,
            "measured": _jsonable(self.measured),
            "message": self.message,
            "artifacts": _jsonable(self.artifacts),
            "timing": _jsonable(self.timing),
            "runtime": self.runtime,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _error(test_id, level, exc, criterion=None, **artifacts):
    msg = f"{type(exc).__name__}: {exc}"
    if not isinstance(exc, UQError):
        msg += " | " + traceback.format_exception_only(type(exc), exc)[-1].strip()
    return TestResult(test_id, level, Outcome.ERROR, criterion, message=msg, artifacts=artifacts)


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        result = fn(*args, **kwargs)
        elapsed = time.perf_counter() - t0
        for r in result if isinstance(result, list) else [result]:
            r.runtime = elapsed if not isinstance(result, list) else r.runtime or elapsed
        return result
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --- level 1 -----------------------------------------------------------------

def _output_validity(est, X, floor, seed):
    tid = TECHNICAL_IDS[0]
    try:
        p = est.predict(X, seed)
    except EstimatorFault as exc:
        return TestResult(tid, Level.TECHNICAL, Outcome.FAIL, message=f"invalid output flagged: {exc}")
    except Exception as exc:  # noqa: BLE001 - any crash is captured as evidence
        return _error(tid, Level.TECHNICAL, exc, failing_input=_first_crashing_row(est, X, seed))
    sigma = p.sigma_total
    if sigma is None:
        return TestResult(tid, Level.TECHNICAL, Outcome.FAIL, message="estimator emits no sigma")
    bad = ~(np.isfinite(p.mu) & np.isfinite(sigma) & (sigma >= floor * (1 - 1e-12)))
    measured = {"n": int(len(p)), "n_invalid": int(bad.sum()), "min_sigma": float(np.min(sigma))}
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        return TestResult(tid, Level.TECHNICAL, Outcome.FAIL, measured=measured,
                          message=f"{int(bad.sum())} invalid outputs (sigma floor {floor:g})",
                          artifacts={"first_invalid_input": X[i].tolist()})
    return TestResult(tid, Level.TECHNICAL, Outcome.PASS, measured=measured)


def _first_crashing_row(est, X, seed, limit=100):
    for i in range(min(len(X), limit)):
        try:
            est.predict(X[i], seed)
        except Exception:  # noqa: BLE001
            return X[i].tolist()
    return None


def _invalid_input(est, X, seed):
    tid = TECHNICAL_IDS[1]
    findings = {}
    probe = X[:1].copy()
    probe[0, 0] = np.nan
    try:
        out = est.predict(probe, seed)
        findings["nan_feature"] = f"returned values silently (mu={out.mu.tolist()})"
    except UQError as exc:
        findings["nan_feature"] = f"ok: {type(exc).__name__}"
    except Exception as exc:  # noqa: BLE001
        findings["nan_feature"] = f"crashed: {type(exc).__name__}: {exc}"
    try:
        propagate_chain([est], X[:1], sigma_in=-1.0, seed=seed)
        findings["negative_sigma_in"] = "accepted a negative incoming sigma"
    except DomainError as exc:
        findings["negative_sigma_in"] = f"ok: {type(exc).__name__}"
    except Exception as exc:  # noqa: BLE001
        findings["negative_sigma_in"] = f"crashed: {type(exc).__name__}: {exc}"
    ok = all(v.startswith("ok") for v in findings.values())
    return TestResult(tid, Level.TECHNICAL, Outcome.PASS if ok else Outcome.FAIL, measured=findings,
                      message="" if ok else "invalid inputs not rejected with structured errors")


def _determinism(est, X, seed):
    tid = TECHNICAL_IDS[2]
    try:
        a = est.predict(X, seed).arrays()
        b = est.predict(X, seed).arrays()
    except Exception as exc:  # noqa: BLE001
        return _error(tid, Level.TECHNICAL, exc)
    same = a.shape == b.shape and a.tobytes() == b.tobytes()
    return TestResult(tid, Level.TECHNICAL, Outcome.PASS if same else Outcome.FAIL,
                      measured={"bit_identical": bool(same), "n": int(X.shape[0])},
                      message="" if same else "two passes with the same seed differ")


def measure_latency(est, X, bare, repeats=3, seed=0):
    """Per-point wall-clock times (median over repeats) of estimator and bare model."""
    def per_point(fn):
        times = []
        for x in X:
            reps = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                fn(x)
                reps.append(time.perf_counter() - t0)
            times.append(float(np.median(reps)))
        return np.array(times)

    t_est = per_point(lambda x: est.predict(x, seed))
    t_bare = per_point(bare)
    return {
        "p50": float(np.quantile(t_est, 0.5)),
        "p99": float(np.quantile(t_est, 0.99)),
        "bare_p50": float(np.quantile(t_bare, 0.5)),
        "overhead_ratio": float(np.median(t_est) / max(np.median(t_bare), 1e-12)),
    }


def _latency(est, X, params, bare, seed):
    tid = TECHNICAL_IDS[3]
    n = int(params.get("latency_points", 50))
    try:
        timing = measure_latency(est, X[:n], bare, int(params.get("latency_repeats", 3)), seed)
    except Exception as exc:  # noqa: BLE001
        return _error(tid, Level.TECHNICAL, exc)
    p99_max = float(params.get("p99_max", 1.0))
    overhead_max = float(params.get("overhead_max", 1e4))
    ok = timing["p99"] <= p99_max and timing["overhead_ratio"] <= overhead_max
    return TestResult(tid, Level.TECHNICAL, Outcome.PASS if ok else Outcome.FAIL,
                      measured={"p99_max": p99_max, "overhead_max": overhead_max}, timing=timing,
                      message="" if ok else "latency bounds exceeded")


def run_technical(est, data, params=None, seed=0, bare_model=None):
    """The four universal sanity checks: validity, invalid inputs, determinism, latency."""
    params = dict(params or {})
    X = data.x[: int(params.get("max_rows", 512))]
    if len(X) == 0:
        return [TestResult(t, Level.TECHNICAL, Outcome.ERROR, message="no data for technical tests")
                for t in TECHNICAL_IDS]
    floor = float(params.get("sigma_floor", est.sigma_floor))
    bare = bare_model or est.bare_predict
    out = []
    for fn in (lambda: _output_validity(est, X, floor, seed),
               lambda: _invalid_input(est, X, seed),
               lambda: _determinism(est, X, seed),
               lambda: _latency(est, X, params, bare, seed)):
        t0 = time.perf_counter()
        r = fn()
        r.runtime = time.perf_counter() - t0
        out.append(r)
    return out


# --- shared measurement --------------------------------------------------------

def _measure(est, data, measure, seed):
    if len(data) == 0:
        raise EmptySelectionError("empty evaluation set")
    return float(metrics.compute(measure, est.predict(data.x, seed), data))


def _verdict(case, value):
    return compare(case.comparator, value, case.threshold)


def _resolve(case, est, base):
    return select(case.data, est, base, case.seed)


# --- level 2 -------------------------------------------------------------------

@_timed
def run_global(est, case, id_data=None, shifted_data=None, bare_model=None):
    """Dataset-wide figures on ID data and every configured shift.

    Also reports the performance trade-off: RMSE of the estimator mean
    over RMSE of the bare model. ``case.params["evaluate_on"]`` selects the
    value the verdict uses: ``"id"`` (default), a shift name, or ``"all"``
    (the worst of ID and all shifts).
    """
    try:
        if isinstance(case.data, Path1D):
            path = select(case.data)
            return run_temporal(est, path.x, case.threshold, case.seed, case)
        if id_data is None:
            id_data = _resolve(case, est, None)
        if shifted_data is None:
            shifted_data = {name: select(spec, est, id_data, case.seed) for name, spec in case.shifts}
        if len(id_data) == 0:
            raise EmptySelectionError("ID selection is empty")
        pred = est.predict(id_data.x, case.seed)
        bare = bare_model or est.bare_predict
        rmse_est = metrics.rmse(pred.mu, id_data.y)
        rmse_bare = metrics.rmse(bare(id_data.x), id_data.y)
        measured = {"rmse_estimator": rmse_est, "rmse_bare": rmse_bare,
                    "tradeoff_ratio": rmse_est / rmse_bare if rmse_bare > 0 else (1.0 if rmse_est == 0 else math.inf),
                    "n_id": len(id_data)}
        if case.measure.name == "tradeoff_ratio":
            value = measured["tradeoff_ratio"]
        else:
            measured["id"] = float(metrics.compute(case.measure, pred, id_data))
            for name, ds in shifted_data.items():
                measured[f"shift:{name}"] = _measure(est, ds, case.measure, case.seed)
            target = case.params.get("evaluate_on", "id")
            if target == "all":
                vals = [measured["id"]] + [measured[f"shift:{n}"] for n in shifted_data]
                value = max(vals) if case.comparator == "<=" else min(vals)
            elif target == "id":
                value = measured["id"]
            else:
                if f"shift:{target}" not in measured:
                    raise ConfigurationError(f"no shift named {target!r}")
                value = measured[f"shift:{target}"]
        measured["value"] = value
        return TestResult(case.id, case.level, _verdict(case, value), case.criterion, measured)
    except Exception as exc:  # noqa: BLE001
        return _error(case.id, case.level, exc, case.criterion)


def run_temporal(est, path, bound, seed=0, case=None):
    """Largest sigma change rate |d sigma| / |d x| along an input path."""
    tid = case.id if case else "temporal"
    level = case.level if case else Level.GLOBAL
    crit = case.criterion if case else None
    try:
        X = np.asarray(path, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if len(X) < 2:
            raise DomainError("temporal path needs at least 2 points")
        sigma = est.predict(X, seed).sigma
        dx = np.linalg.norm(np.diff(X, axis=0), axis=1)
        rates = np.abs(np.diff(sigma)) / np.maximum(dx, RATE_FLOOR)
        worst = float(rates.max())
        verdict = Outcome.PASS if worst <= bound else Outcome.FAIL
        return TestResult(tid, level, verdict, crit, {"value": worst, "bound": float(bound),
                                                      "argmax_step": int(rates.argmax())})
    except Exception as exc:  # noqa: BLE001
        return _error(tid, level, exc, crit)


# --- level 3 -------------------------------------------------------------------

def _sweep_cells(spec, base, seed):
    if spec.generator is not None:
        cells = sweep(spec.generator, spec.dim, spec.grid, spec.n, spec.seed if spec.seed is not None else seed)
        return list(zip(spec.grid, cells))
    if base is None or spec.dim not in base.semantics:
        raise CapabilityError(f"sweep over existing data needs semantic annotation {spec.dim!r}")
    col = base.semantics[spec.dim]
    return [(v, base.take(np.flatnonzero(col == v))) for v in spec.grid]


@_timed
def run_subset(est, case, base=None):
    """Quantile slices, semantic slices/sweeps, curated sets and search.

    Sweeps pass only if every cell passes; the per-cell curve is attached.
    Search-backed cases compare the worst point-wise score found.
    """
    try:
        spec = case.data
        if isinstance(spec, SemanticSweep):
            curve = []
            for value, cell in _sweep_cells(spec, base, case.seed):
                if len(cell) == 0:
                    return TestResult(case.id, case.level, Outcome.ERROR, case.criterion,
                                      message=f"sweep cell {spec.dim}={value} is empty",
                                      artifacts={"curve": curve})
                v = _measure(est, cell, case.measure, case.seed)
                curve.append({spec.dim: float(value), "value": v, "verdict": _verdict(case, v).value,
                              "n": len(cell)})
            verdicts = [c["verdict"] for c in curve]
            if "error" in verdicts:
                verdict = Outcome.ERROR
            else:
                verdict = Outcome.PASS if all(v == "pass" for v in verdicts) else Outcome.FAIL
            failing = [c[spec.dim] for c in curve if c["verdict"] != "pass"]
            msg = f"failing cells: {spec.dim} in {failing}" if failing else ""
            worst = max(c["value"] for c in curve) if case.comparator == "<=" else min(c["value"] for c in curve)
            return TestResult(case.id, case.level, verdict, case.criterion,
                              {"value": worst, "cells": len(curve)}, msg, {"curve": curve})
        if isinstance(spec, SearchGenerated):
            found = search(est, spec.config, spec.oracle)
            worst = found[0]["score"]
            top = [{k: r[k] for k in ("x", "score", "attribution")} for r in found]
            return TestResult(case.id, case.level, _verdict(case, worst), case.criterion,
                              {"value": worst, "objective": spec.config.objective},
                              artifacts={"worst_inputs": top})
        if isinstance(spec, Path1D):
            return run_temporal(est, select(spec).x, case.threshold, case.seed, case)
        data = select(spec, est, base, case.seed)
        value = _measure(est, data, case.measure, case.seed)
        measured = {"value": value, "n": len(data)}
        if isinstance(spec, QuantileSlice):
            measured["slice"] = [spec.q_lo, spec.q_hi]
        return TestResult(case.id, case.level, _verdict(case, value), case.criterion, measured)
    except Exception as exc:  # noqa: BLE001
        return _error(case.id, case.level, exc, case.criterion)


# --- level 4 -------------------------------------------------------------------

@_timed
def run_complementary(est, case, base=None):
    """Cross-group comparison of uncertainty quality.

    Computes the case metric per group label and passes when the largest
    pairwise gap is within the threshold. With ``params["composed"]`` the
    metric is evaluated directly on the (nested) data spec instead.
    """
    try:
        data = select(case.data, est, base, case.seed)
        if case.params.get("composed", False):
            value = _measure(est, data, case.measure, case.seed)
            return TestResult(case.id, case.level, _verdict(case, value), case.criterion,
                              {"value": value, "n": len(data)})
        if data.group is None:
            raise CapabilityError("rows carry no group labels")
        min_size = int(case.params.get("min_group_size", DEFAULT_MIN_GROUP))
        labels = sorted(set(data.group.tolist()), key=str)
        if len(labels) < 2:
            raise CapabilityError("need at least two groups to compare")
        per_group, sizes = {}, {}
        for g in labels:
            idx = np.flatnonzero(data.group == g)
            sizes[str(g)] = int(idx.size)
        small = {g: n for g, n in sizes.items() if n < min_size}
        if small:
            return TestResult(case.id, case.level, Outcome.ERROR, case.criterion, {"group_sizes": sizes},
                              f"insufficient statistics: groups {small} below minimum size {min_size}")
        pred = est.predict(data.x, case.seed)
        for g in labels:
            idx = np.flatnonzero(data.group == g)
            per_group[str(g)] = float(metrics.compute(case.measure, pred.take(idx), data.take(idx)))
        disparity = max(per_group.values()) - min(per_group.values())
        return TestResult(case.id, case.level, _verdict(case, disparity), case.criterion,
                          {"value": disparity, "per_group": per_group, "group_sizes": sizes})
    except Exception as exc:  # noqa: BLE001
        return _error(case.id, case.level, exc, case.criterion)


# --- orchestration -------------------------------------------------------------

def run_case(est, case, base=None, bare_model=None):
    if case.level is Level.TECHNICAL:
        return _run_technical_case(est, case, base, bare_model)
    if case.level is Level.GLOBAL:
        return run_global(est, case, bare_model=bare_model)
    if case.level is Level.SUBSET_POINTWISE:
        return run_subset(est, case, base)
    return run_complementary(est, case, base)


@_timed
def _run_technical_case(est, case, base, bare_model):
    """Criterion-backed technical case (latency / overhead bounds)."""
    try:
        data = select(case.data, est, base, case.seed)
        n = int(case.params.get("latency_points", 50))
        timing = measure_latency(est, data.x[:n], bare_model or est.bare_predict,
                                 int(case.params.get("latency_repeats", 3)), case.seed)
        key = {"overhead_ratio": "overhead_ratio", "latency_p99": "p99"}.get(case.measure.name)
        if key is None:
            raise ConfigurationError(f"measure {case.measure.name!r} is not a technical measure")
        return TestResult(case.id, case.level, _verdict(case, timing[key]), case.criterion,
                          {"measure": key, "threshold": case.threshold}, timing=timing)
    except Exception as exc:  # noqa: BLE001
        return _error(case.id, case.level, exc, case.criterion)


def case_seed(suite_seed, test_id):
    return rng.derive_seed(suite_seed, "case", test_id)


@dataclass
class SuiteRun:
    results: list
    suite: object
    aborted: bool = False


def run_suite(config, jobs=1):
    """Execute a suite level by level (technical first).

    ``config`` is a :class:`uqtest.suite.Suite` or a raw config dict.
    With ``fail_fast`` set, a failing or erroring technical test marks all
    later cases as skipped. Results come back sorted by test id.
    """
    from .suite import Suite, load_suite

    suite = config if isinstance(config, Suite) else load_suite(config)
    est = suite.estimator
    tech_data = select(suite.technical_data, est, None, case_seed(suite.seed, "technical"))
    results = run_technical(est, tech_data, suite.technical_params, case_seed(suite.seed, "technical"),
                            suite.bare_model)
    aborted = False
    by_level = {lv: [c for c in suite.cases if c.level is lv] for lv in Level}
    for level in Level:
        cases = by_level[level]
        if level is not Level.TECHNICAL and suite.fail_fast and not aborted:
            aborted = any(r.verdict in (Outcome.FAIL, Outcome.ERROR) for r in results
                          if r.level is Level.TECHNICAL)
        if aborted:
            results += [TestResult(c.id, c.level, Outcome.SKIPPED, c.criterion,
                                   message="skipped: technical test failed (fail-fast)") for c in cases]
            continue
        if jobs > 1 and len(cases) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results += list(pool.map(lambda c: run_case(est, c, None, suite.bare_model), cases))
        else:
            results += [run_case(est, c, None, suite.bare_model) for c in cases]
    results.sort(key=lambda r: r.test_id)
    return SuiteRun(results, suite, aborted)
