"""Run reports: JSON contract, integrity recomputation and markdown view."""

from __future__ import annotations

import copy
import json
import platform
import sys

import numpy as np
import scipy

from .aggregate import And, Leaf, Verdict, as_verdict, evaluate_tree, leaves, parse_tree, tree_to_dict
from .criteria import Level
from .errors import ConfigurationError, StructuralError

SCHEMA_VERSION = "1.0"
TIMING_FIELDS = ("runtime", "timing")
TECHNICAL = "technical"


class SchemaError(ConfigurationError):
    """Report document does not follow the expected schema."""


def environment():
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "platform": sys.platform}


def _criterion_verdict(entry, verdict_of):
    if entry.get("manual"):
        v = Verdict.PASS if entry["asserted"] else Verdict.FAIL
        return v, [{"path": "0", "node": "manual", "verdict": v.value}]
    if entry.get("tree") is None:
        return Verdict.INCONCLUSIVE, [{"path": "0", "node": "no_test_cases", "verdict": "inconclusive"}]
    tree = parse_tree(entry["tree"])
    return evaluate_tree(tree, {ref: verdict_of[ref] for ref in leaves(tree)})


def _technical_verdict(results):
    ids = [r["test_id"] for r in results if r["level"] == Level.TECHNICAL.value and r["criterion"] is None]
    if not ids:
        return Verdict.INCONCLUSIVE, []
    verdict_of = {r["test_id"]: r["verdict"] for r in results}
    return evaluate_tree(And(tuple(Leaf(i) for i in ids)), verdict_of)


def _overall(criteria_verdicts, gate, policy):
    table = dict(criteria_verdicts)
    table[TECHNICAL] = gate
    if policy == "strict":
        return min(table.values(), key=lambda v: v.rank)
    tree = parse_tree(policy)
    verdict, _ = evaluate_tree(tree, {ref: table[ref] for ref in leaves(tree)})
    if TECHNICAL not in leaves(tree):
        verdict = min(verdict, gate, key=lambda v: v.rank)
    return verdict


def recompute(report):
    """Re-derive criterion, technical-gate and overall verdicts from the embedded results."""
    results = report["results"]
    verdict_of = {r["test_id"]: r["verdict"] for r in results}
    gate, gate_notes = _technical_verdict(results)
    crit = {}
    notes = {}
    for entry in report["criteria"]:
        crit[entry["id"]], notes[entry["id"]] = _criterion_verdict(entry, verdict_of)
    return crit, notes, gate, gate_notes, _overall(crit, gate, report["policy"])


def conflicts(results):
    """Criteria whose cases disagree (mixed pass and fail/error/skipped)."""
    groups = {}
    for r in results:
        if r["criterion"] is not None:
            groups.setdefault(r["criterion"], {})[r["test_id"]] = r["verdict"]
    return [{"criterion": cid, "verdicts": vs} for cid, vs in sorted(groups.items())
            if len(set(vs.values())) > 1]


def build_report(run):
    """Assemble the report dict for a finished :class:`~uqtest.harness.SuiteRun`."""
    suite = run.suite
    results = [r.to_dict() for r in run.results]
    criteria = []
    for c in suite.criteria:
        entry = c.to_dict()
        entry["cases"] = [k.id for k in suite.cases if k.criterion == c.id]
        entry["manual"] = c.manual
        tree = suite.trees.get(c.id)
        entry["tree"] = None if tree is None else tree_to_dict(tree)
        criteria.append(entry)
    policy = suite.policy if suite.policy == "strict" else tree_to_dict(suite.policy)
    report = {
        "schema_version": SCHEMA_VERSION,
        "suite_id": suite.suite_id,
        "seed": suite.seed,
        "config_digest": suite.digest,
        "fail_fast": suite.fail_fast,
        "aborted": run.aborted,
        "estimator": suite.estimator.describe(),
        "policy": policy,
        "criteria": criteria,
        "results": results,
    }
    crit, notes, gate, gate_notes, overall = recompute(report)
    for entry in criteria:
        entry["verdict"] = crit[entry["id"]].value
        entry["annotations"] = notes[entry["id"]]
    report["technical_gate"] = {"verdict": gate.value, "annotations": gate_notes}
    report["overall"] = overall.value
    report["inconclusive"] = overall is Verdict.INCONCLUSIVE
    report["levels"] = [lv.value for lv in Level if any(r["level"] == lv.value for r in results)]
    report["conflicts"] = conflicts(results)
    report["environment"] = environment()
    return report


def strip_timing(report):
    """Copy of ``report`` without wall-clock fields, for determinism checks."""
    out = copy.deepcopy(report)
    for r in out.get("results", []):
        for key in TIMING_FIELDS:
            r.pop(key, None)
    return out


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


REQUIRED = ("schema_version", "suite_id", "seed", "config_digest", "criteria", "results", "overall",
            "technical_gate", "policy")


def check_schema(report):
    if not isinstance(report, dict):
        raise SchemaError("report must be a JSON object")
    missing = [k for k in REQUIRED if k not in report]
    if missing:
        raise SchemaError(f"report lacks fields {missing}")
    if report["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {report['schema_version']!r} (expected {SCHEMA_VERSION})")
    for i, r in enumerate(report["results"]):
        for key in ("test_id", "level", "criterion", "verdict", "measured"):
            if key not in r:
                raise SchemaError(f"results[{i}] lacks {key!r}")


def integrity_warnings(report):
    """Compare stored verdicts against a fresh recomputation."""
    try:
        crit, _, gate, _, overall = recompute(report)
    except (StructuralError, KeyError) as exc:
        return [f"verdicts cannot be recomputed: {exc}"]
    warnings = []
    for entry in report["criteria"]:
        if entry.get("verdict") != crit[entry["id"]].value:
            warnings.append(f"criterion {entry['id']}: stored {entry.get('verdict')!r}, "
                            f"recomputed {crit[entry['id']].value!r}")
    if report["technical_gate"].get("verdict") != gate.value:
        warnings.append(f"technical gate: stored {report['technical_gate'].get('verdict')!r}, "
                        f"recomputed {gate.value!r}")
    if report["overall"] != overall.value:
        warnings.append(f"overall: stored {report['overall']!r}, recomputed {overall.value!r}")
    return warnings


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _row(r):
    value = r["measured"].get("value", "")
    return f"| `{r['test_id']}` | {r['level']} | {r['verdict']} | {_fmt(value)} | {r.get('message', '')} |"


def render_markdown(report):
    """Human-readable summary. Returns ``(markdown, warnings)``."""
    check_schema(report)
    warnings = integrity_warnings(report)
    head = "| test | level | verdict | value | message |\n|---|---|---|---|---|"
    lines = [f"# Test report: {report['suite_id']}", ""]
    for w in warnings:
        lines.append(f"> **Integrity warning:** {w}")
    if warnings:
        lines.append("")
    lines += [f"- Overall verdict: **{report['overall']}**",
              f"- Technical gate: {report['technical_gate']['verdict']}",
              f"- Seed: {report['seed']}", f"- Config digest: `{report['config_digest']}`", ""]
    lines += ["## Technical tests", "", head]
    lines += [_row(r) for r in report["results"] if r["criterion"] is None]
    by_crit = {}
    for r in report["results"]:
        if r["criterion"] is not None:
            by_crit.setdefault(r["criterion"], []).append(r)
    for entry in report["criteria"]:
        lines += ["", f"## Criterion `{entry['id']}` ({entry['category']}): {entry.get('verdict')}", ""]
        if entry.get("manual"):
            lines.append(f"Manual assessment, asserted = {entry['asserted']}. {entry.get('note', '')}".rstrip())
            continue
        lines.append(f"Measure `{entry['measure']['name']}` {entry['comparator']} {entry['threshold']}")
        lines += ["", head]
        lines += [_row(r) for r in by_crit.get(entry["id"], [])]
    lines += ["", "## Conflicting results", ""]
    if report.get("conflicts"):
        for c in report["conflicts"]:
            listed = ", ".join(f"`{k}`: {v}" for k, v in sorted(c["verdicts"].items()))
            lines.append(f"- **{c['criterion']}** has mixed verdicts: {listed}")
    else:
        lines.append("None.")
    return "\n".join(lines) + "\n", warnings


__all__ = ["SCHEMA_VERSION", "SchemaError", "build_report", "strip_timing", "dumps", "render_markdown",
           "check_schema", "integrity_warnings", "recompute", "conflicts", "as_verdict"]
