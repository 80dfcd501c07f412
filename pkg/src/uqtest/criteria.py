"""Acceptance criteria: (data specification, measure, threshold) triples.

Criteria are parsed from the ``criteria`` array of a suite config. Each
carries its requirement category and the test-hierarchy levels (its test
depth) at which it is to be examined.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import CriteriaError
from .metrics import SCORE_KINDS, MetricKind


class RequirementCategory(str, enum.Enum):
    CALIBRATION = "calibration"
    LOCAL_CALIBRATION = "local_calibration"
    DOWNSTREAM_TASKS = "downstream_tasks"
    ARGUMENTATIVELY_SUBSTANTIATED = "argumentatively_substantiated"
    UNCERTAINTY_ATTRIBUTION = "uncertainty_attribution"
    LARGE_NETWORK_APPLICABILITY = "large_network_applicability"
    MINIMAL_OVERHEAD = "minimal_overhead"
    MINIMAL_TRADEOFFS = "minimal_tradeoffs"
    TECHNICAL_SIMPLICITY = "technical_simplicity"
    APPLICATION_SPECIFIC = "application_specific"


QUALITATIVE = frozenset({
    RequirementCategory.ARGUMENTATIVELY_SUBSTANTIATED,
    RequirementCategory.TECHNICAL_SIMPLICITY,
})


class Level(str, enum.Enum):
    TECHNICAL = "technical"
    GLOBAL = "global"
    SUBSET_POINTWISE = "subset_pointwise"
    COMPLEMENTARY = "complementary"

    @property
    def order(self):
        return list(Level).index(self)


class Outcome(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    ERROR = "error"
    SKIPPED = "skipped"


# name -> (lower_is_better, (min, max) of attainable values)
INF = math.inf
MEASURES = {
    "nll_mean": (True, (-INF, INF)),
    "ece_regression": (True, (0.0, 1.0)),
    "mce_regression": (True, (0.0, 1.0)),
    "ece_classification": (True, (0.0, 1.0)),
    "etl": (True, (-INF, INF)),
    "quantile": (True, (-INF, INF)),
    "local_wasserstein": (True, (0.0, INF)),
    "rmse": (True, (0.0, INF)),
    "width_stats": (None, (0.0, INF)),
    "tradeoff_ratio": (True, (0.0, INF)),
    "overhead_ratio": (True, (0.0, INF)),
    "latency_p99": (True, (0.0, INF)),
    "sigma_change_rate": (True, (0.0, INF)),
    "disparity": (True, (0.0, INF)),
    "manual": (None, (-INF, INF)),
}
POINT_SCORE_MEASURES = frozenset({"etl", "quantile"})
COMPARATORS = ("<=", ">=")


@dataclass(frozen=True)
class AcceptanceCriterion:
    id: str
    category: RequirementCategory
    data_spec: object  # named data-spec reference (str) or inline dict
    measure: MetricKind
    comparator: str = "<="
    threshold: float | None = None
    test_depth: tuple = (Level.GLOBAL,)
    note: str = ""
    asserted: bool | None = None

    @property
    def manual(self):
        return self.measure.name == "manual"

    def to_dict(self):
        doc = {
            "id": self.id,
            "category": self.category.value,
            "data": self.data_spec,
            "measure": self.measure.to_dict(),
            "comparator": self.comparator,
            "threshold": self.threshold,
            "test_depth": [lv.value for lv in self.test_depth],
            "note": self.note,
        }
        if self.asserted is not None:
            doc["asserted"] = self.asserted
        return doc


def parse_measure(raw, path):
    if isinstance(raw, str):
        raw = {"name": raw}
    if not isinstance(raw, dict) or "name" not in raw:
        raise CriteriaError("measure must be a name or an object with a 'name'", path)
    name = raw["name"]
    if name not in MEASURES:
        raise CriteriaError(f"unknown measure {name!r}", f"{path}.name")
    params = dict(raw.get("params", {}))
    if name in POINT_SCORE_MEASURES and params.get("score", "nll") not in SCORE_KINDS:
        raise CriteriaError(f"unknown score kind {params['score']!r}", f"{path}.params.score")
    if name == "etl" and not 0.0 <= float(params.get("alpha", 0.95)) < 1.0:
        raise CriteriaError("alpha must lie in [0, 1)", f"{path}.params.alpha")
    if name == "quantile" and not 0.0 <= float(params.get("q", 0.99)) <= 1.0:
        raise CriteriaError("q must lie in [0, 1]", f"{path}.params.q")
    for key in ("levels", "bins"):
        if key in params and int(params[key]) < 2:
            raise CriteriaError(f"{key} must be >= 2", f"{path}.params.{key}")
    return MetricKind(name, params)


def check_threshold(measure_name, comparator, threshold, path):
    """Reject comparator/threshold pairs that are inverted, vacuous or unsatisfiable."""
    if comparator not in COMPARATORS:
        raise CriteriaError(f"comparator must be one of {COMPARATORS}, got {comparator!r}", f"{path}.comparator")
    if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not math.isfinite(threshold):
        raise CriteriaError(f"threshold must be a finite number, got {threshold!r}", f"{path}.threshold")
    lower_better, (lo, hi) = MEASURES[measure_name]
    if lower_better is True and comparator == ">=":
        raise CriteriaError(f"inverted comparator: lower {measure_name} is better, use '<='", f"{path}.comparator")
    if comparator == "<=":
        if threshold < lo:
            raise CriteriaError(f"unsatisfiable: {measure_name} is never below {lo}", f"{path}.threshold")
        if threshold >= hi:
            raise CriteriaError(f"vacuous: {measure_name} <= {threshold} always holds", f"{path}.threshold")
    else:
        if threshold > hi:
            raise CriteriaError(f"unsatisfiable: {measure_name} is never above {hi}", f"{path}.threshold")
        if threshold <= lo:
            raise CriteriaError(f"vacuous: {measure_name} >= {threshold} always holds", f"{path}.threshold")


def _data_kind(spec, named):
    if isinstance(spec, str):
        spec = named.get(spec)
    return spec.get("kind") if isinstance(spec, dict) else None


def parse_criteria(doc):
    """Parse and validate the ``criteria`` array of a suite document.

    ``doc`` is either the list itself or a mapping holding ``criteria``
    and optionally the named ``data`` specs that criteria may reference.
    """
    if isinstance(doc, dict):
        items = doc.get("criteria", [])
        named = doc.get("data", {}) or {}
    else:
        items, named = doc, {}
    if not isinstance(items, list):
        raise CriteriaError("criteria must be an array", "criteria")
    out, seen = [], set()
    for i, raw in enumerate(items):
        path = f"criteria[{i}]"
        if not isinstance(raw, dict):
            raise CriteriaError("criterion must be an object", path)
        unknown = set(raw) - {"id", "category", "data", "measure", "comparator", "threshold",
                              "test_depth", "note", "asserted"}
        if unknown:
            raise CriteriaError(f"unknown fields {sorted(unknown)}", path)
        cid = raw.get("id")
        if not isinstance(cid, str) or not cid:
            raise CriteriaError("id must be a non-empty string", f"{path}.id")
        if cid in seen:
            raise CriteriaError(f"duplicate criterion id {cid!r}", f"{path}.id")
        seen.add(cid)
        try:
            category = RequirementCategory(raw.get("category"))
        except ValueError:
            raise CriteriaError(f"unknown category {raw.get('category')!r}", f"{path}.category") from None
        measure = parse_measure(raw.get("measure"), f"{path}.measure")
        note = str(raw.get("note", ""))

        if measure.name == "manual":
            asserted = raw.get("asserted")
            if not isinstance(asserted, bool):
                raise CriteriaError("manual criteria need a boolean 'asserted'", f"{path}.asserted")
            out.append(AcceptanceCriterion(cid, category, raw.get("data"), measure, raw.get("comparator", "<="),
                                           None, (), note, asserted))
            continue
        if category in QUALITATIVE:
            raise CriteriaError(f"category {category.value!r} is qualitative; use measure 'manual'",
                                f"{path}.measure")
        if "asserted" in raw:
            raise CriteriaError("'asserted' is only meaningful for manual criteria", f"{path}.asserted")

        comparator = raw.get("comparator", "<=")
        threshold = raw.get("threshold")
        check_threshold(measure.name, comparator, threshold, path)
        depth_raw = raw.get("test_depth", ["global"])
        if not isinstance(depth_raw, list) or not depth_raw:
            raise CriteriaError("test_depth must be a non-empty array", f"{path}.test_depth")
        try:
            depth = tuple(sorted({Level(v) for v in depth_raw}, key=lambda lv: lv.order))
        except ValueError:
            raise CriteriaError(f"unknown level in {depth_raw}", f"{path}.test_depth") from None
        data = raw.get("data")
        if data is None:
            raise CriteriaError("missing data specification", f"{path}.data")
        if isinstance(data, str) and named and data not in named:
            raise CriteriaError(f"unknown data spec {data!r}", f"{path}.data")
        if _data_kind(data, named) == "search" and measure.name not in POINT_SCORE_MEASURES:
            raise CriteriaError(f"search-generated data yields point scores; measure {measure.name!r} "
                                "needs a dataset", f"{path}.measure")
        out.append(AcceptanceCriterion(cid, category, data, measure, comparator, float(threshold),
                                       depth, note))
    return out


def serialize_criteria(criteria):
    return [c.to_dict() for c in criteria]


def compare(comparator, measured, threshold):
    """Inclusive threshold comparison; NaN or missing values give ERROR."""
    if measured is None or not math.isfinite(measured):
        return Outcome.ERROR
    ok = measured <= threshold if comparator == "<=" else measured >= threshold
    return Outcome.PASS if ok else Outcome.FAIL


def evaluate(criterion, measured):
    if criterion.manual:
        return Outcome.PASS if criterion.asserted else Outcome.FAIL
    return compare(criterion.comparator, measured, criterion.threshold)
