"""Three-valued logic trees over test verdicts.

Leaves name test cases (or criteria, for the root tree). Verdicts are
ordered ``fail < inconclusive < pass``; errored or skipped leaves read as
inconclusive, so a missing safety result can block but never grant a pass.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass

from .errors import StructuralError


class Verdict(str, enum.Enum):
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"
    PASS = "pass"

    @property
    def rank(self):
        return _RANK[self]


_RANK = {Verdict.FAIL: 0, Verdict.INCONCLUSIVE: 1, Verdict.PASS: 2}


def as_verdict(value):
    """Map a test outcome, verdict or string to a :class:`Verdict`."""
    value = getattr(value, "verdict", value)
    value = getattr(value, "value", value)
    if value == "pass":
        return Verdict.PASS
    if value == "fail":
        return Verdict.FAIL
    if value in ("error", "skipped", "inconclusive"):
        return Verdict.INCONCLUSIVE
    raise StructuralError(f"not a verdict: {value!r}")


@dataclass(frozen=True)
class Leaf:
    ref: str


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


@dataclass(frozen=True)
class KofN:
    k: int
    children: tuple


@dataclass(frozen=True)
class Weighted:
    weights: tuple
    threshold: float
    children: tuple


def parse_tree(doc, path="tree"):
    """Build a tree from its JSON form.

    A bare string is a leaf; otherwise exactly one of ``leaf``, ``and``,
    ``or``, ``k_of_n`` or ``weighted`` keys.
    """
    if isinstance(doc, str):
        return Leaf(doc)
    if not isinstance(doc, dict) or len(doc) != 1:
        raise StructuralError(f"{path}: node must be a string or a single-key object")
    (key, body), = doc.items()
    if key == "leaf":
        return Leaf(str(body))
    if key in ("and", "or"):
        kids = tuple(parse_tree(c, f"{path}.{key}[{i}]") for i, c in enumerate(body))
        node = And(kids) if key == "and" else Or(kids)
    elif key == "k_of_n":
        kids = tuple(parse_tree(c, f"{path}.k_of_n[{i}]") for i, c in enumerate(body["children"]))
        node = KofN(int(body["k"]), kids)
    elif key == "weighted":
        kids = tuple(parse_tree(c, f"{path}.weighted[{i}]") for i, c in enumerate(body["children"]))
        weights = body.get("weights") or [1.0] * len(kids)
        node = Weighted(tuple(float(w) for w in weights), float(body["threshold"]), kids)
    else:
        raise StructuralError(f"{path}: unknown node type {key!r}")
    validate_shape(node, path)
    return node


def tree_to_dict(node):
    if isinstance(node, Leaf):
        return node.ref
    if isinstance(node, And):
        return {"and": [tree_to_dict(c) for c in node.children]}
    if isinstance(node, Or):
        return {"or": [tree_to_dict(c) for c in node.children]}
    if isinstance(node, KofN):
        return {"k_of_n": {"k": node.k, "children": [tree_to_dict(c) for c in node.children]}}
    return {"weighted": {"weights": list(node.weights), "threshold": node.threshold,
                         "children": [tree_to_dict(c) for c in node.children]}}


def validate_shape(node, path="tree"):
    if isinstance(node, Leaf):
        return
    if not node.children:
        raise StructuralError(f"{path}: composite node without children")
    if isinstance(node, KofN) and not 1 <= node.k <= len(node.children):
        raise StructuralError(f"{path}: k={node.k} outside 1..{len(node.children)}")
    if isinstance(node, Weighted):
        if len(node.weights) != len(node.children):
            raise StructuralError(f"{path}: {len(node.weights)} weights for {len(node.children)} children")
        if any(w < 0 for w in node.weights) or not sum(node.weights) > 0:
            raise StructuralError(f"{path}: weights must be >= 0 with a positive sum")


def leaves(node):
    if isinstance(node, Leaf):
        return [node.ref]
    return [ref for child in node.children for ref in leaves(child)]


def validate(node, known_ids):
    """Shape checks, dangling references and duplicate leaves."""
    stack = [node]
    while stack:
        n = stack.pop()
        validate_shape(n)
        stack.extend(getattr(n, "children", ()))
    refs = leaves(node)
    dangling = sorted(set(refs) - set(known_ids))
    if dangling:
        raise StructuralError(f"tree references unknown ids {dangling}")
    dupes = sorted(r for r, c in Counter(refs).items() if c > 1)
    if dupes:
        raise StructuralError(f"ids referenced more than once: {dupes}")


def _combine(node, verdicts):
    n = len(verdicts)
    n_pass = sum(v is Verdict.PASS for v in verdicts)
    n_fail = sum(v is Verdict.FAIL for v in verdicts)
    if isinstance(node, And):
        return min(verdicts, key=lambda v: v.rank)
    if isinstance(node, Or):
        return max(verdicts, key=lambda v: v.rank)
    if isinstance(node, KofN):
        if n_pass >= node.k:
            return Verdict.PASS
        if n_fail > n - node.k:
            return Verdict.FAIL
        return Verdict.INCONCLUSIVE
    total = sum(node.weights)
    w_pass = sum(w for w, v in zip(node.weights, verdicts) if v is Verdict.PASS)
    w_open = sum(w for w, v in zip(node.weights, verdicts) if v is Verdict.INCONCLUSIVE)
    slack = 1e-12 * total
    if w_pass >= node.threshold * total - slack:
        return Verdict.PASS
    if w_pass + w_open < node.threshold * total - slack:
        return Verdict.FAIL
    return Verdict.INCONCLUSIVE


def evaluate_tree(tree, results):
    """Evaluate ``tree`` against ``results`` (id -> outcome/verdict).

    Returns ``(verdict, annotations)`` where annotations is a list of
    ``{"path", "node", "verdict"}`` records in pre-order, for audit.
    """
    validate(tree, results.keys())
    notes = []

    def walk(node, path):
        slot = len(notes)
        notes.append(None)
        if isinstance(node, Leaf):
            verdict = as_verdict(results[node.ref])
            notes[slot] = {"path": path, "node": f"leaf:{node.ref}", "verdict": verdict.value}
            return verdict
        kids = [walk(c, f"{path}.{i}") for i, c in enumerate(node.children)]
        verdict = _combine(node, kids)
        label = type(node).__name__.lower()
        if isinstance(node, KofN):
            label = f"{node.k}_of_{len(node.children)}"
        notes[slot] = {"path": path, "node": label, "verdict": verdict.value}
        return verdict

    return walk(tree, "0"), notes


def overall(criterion_verdicts, policy="strict"):
    """Combine per-criterion verdicts.

    ``policy`` is ``"strict"`` (all must pass) or a tree whose leaves are
    criterion ids.
    """
    if policy == "strict":
        if not criterion_verdicts:
            raise StructuralError("no criterion verdicts to aggregate")
        return _combine(And(tuple(Leaf(k) for k in criterion_verdicts)),
                        [as_verdict(v) for v in criterion_verdicts.values()])
    tree = parse_tree(policy) if isinstance(policy, (dict, str)) else policy
    missing = sorted(set(leaves(tree)) - set(criterion_verdicts))
    if missing:
        raise StructuralError(f"missing verdicts for criteria {missing}")
    return evaluate_tree(tree, criterion_verdicts)[0]
