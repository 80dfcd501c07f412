import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from uqtest.aggregate import (And, KofN, Leaf, Or, Verdict, Weighted, as_verdict, evaluate_tree, leaves,
                              overall, parse_tree, tree_to_dict)
from uqtest.errors import StructuralError

P, F, I = Verdict.PASS, Verdict.FAIL, Verdict.INCONCLUSIVE


def ev(tree, table):
    return evaluate_tree(tree, table)[0]


def boolean(node, truth):
    """Classical two-valued semantics, written independently of the implementation."""
    if isinstance(node, Leaf):
        return truth[node.ref]
    vals = [boolean(c, truth) for c in node.children]
    if isinstance(node, And):
        return all(vals)
    if isinstance(node, Or):
        return any(vals)
    if isinstance(node, KofN):
        return sum(vals) >= node.k
    return sum(w for w, v in zip(node.weights, vals) if v) >= node.threshold * sum(node.weights)


def random_tree(rnd, ids):
    if len(ids) == 1:
        return Leaf(ids[0])
    n_kids = rnd.randint(1, min(4, len(ids)))
    cuts = sorted(rnd.sample(range(1, len(ids)), n_kids - 1)) if n_kids > 1 else []
    parts = [ids[a:b] for a, b in zip([0] + cuts, cuts + [len(ids)])]
    kids = tuple(random_tree(rnd, p) for p in parts)
    kind = rnd.choice(["and", "or", "kofn", "weighted"])
    if kind == "and":
        return And(kids)
    if kind == "or":
        return Or(kids)
    if kind == "kofn":
        return KofN(rnd.randint(1, len(kids)), kids)
    weights = tuple(float(rnd.randint(0, 3)) for _ in kids)
    if sum(weights) == 0:
        weights = (1.0,) + weights[1:]
    return Weighted(weights, rnd.choice([0.25, 0.5, 2 / 3, 0.75, 1.0]), kids)


def test_examples():
    assert ev(And((Leaf("a"), Leaf("b"))), {"a": "pass", "b": "fail"}) is F
    assert ev(KofN(2, (Leaf("a"), Leaf("b"), Leaf("c"))), {"a": "pass", "b": "pass", "c": "fail"}) is P
    assert overall({"x": "pass", "y": "pass"}) is P
    assert overall({"x": "pass", "y": "inconclusive"}) is I
    root = {"weighted": {"threshold": 0.5, "children": ["x", "y", "z"]}}
    assert overall({"x": "pass", "y": "fail", "z": "pass"}, root) is P


@pytest.mark.parametrize("seed", range(40))
def test_truth_table(seed):
    rnd = random.Random(seed)
    ids = [f"t{i}" for i in range(rnd.randint(1, 12))]
    tree = random_tree(rnd, ids)
    for bits in itertools.product((False, True), repeat=len(ids)):
        truth = dict(zip(ids, bits))
        table = {k: "pass" if v else "fail" for k, v in truth.items()}
        assert (ev(tree, table) is P) == boolean(tree, truth)
        assert ev(tree, table) is not I


@pytest.mark.parametrize("seed", range(30))
def test_three_valued_matches_interval_oracle(seed):
    # for monotone connectives the Kleene value is decided by the two extreme completions
    rnd = random.Random(1000 + seed)
    ids = [f"t{i}" for i in range(rnd.randint(1, 7))]
    tree = random_tree(rnd, ids)
    for vals in itertools.product(("pass", "fail", "error"), repeat=len(ids)):
        table = dict(zip(ids, vals))
        low = boolean(tree, {k: v == "pass" for k, v in table.items()})
        high = boolean(tree, {k: v != "fail" for k, v in table.items()})
        expected = P if low else F if not high else I
        assert ev(tree, table) is expected


def test_error_is_never_laundered():
    assert ev(Or((Leaf("a"), Leaf("b"))), {"a": "error", "b": "fail"}) is I
    assert ev(And((Leaf("a"),)), {"a": "skipped"}) is I


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_upgrading_a_leaf_never_downgrades(seed, data):
    rnd = random.Random(seed)
    ids = [f"t{i}" for i in range(rnd.randint(1, 8))]
    tree = random_tree(rnd, ids)
    table = {k: data.draw(st.sampled_from(["pass", "fail", "error"])) for k in ids}
    target = data.draw(st.sampled_from(ids))
    before = evaluate_tree(tree, table)[1]
    table[target] = "pass"
    after = evaluate_tree(tree, table)[1]
    for b, a in zip(before, after):
        assert Verdict(a["verdict"]).rank >= Verdict(b["verdict"]).rank


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["pass", "fail", "error"]), min_size=1, max_size=6), st.randoms(), st.integers(1, 6))
def test_child_order_invariance(vals, rnd, k):
    ids = [f"t{i}" for i in range(len(vals))]
    table = dict(zip(ids, vals))
    shuffled = ids[:]
    rnd.shuffle(shuffled)
    k = min(k, len(ids))
    for make in (And, Or, lambda kids: KofN(k, kids)):
        a = make(tuple(Leaf(i) for i in ids))
        b = make(tuple(Leaf(i) for i in shuffled))
        assert ev(a, table) is ev(b, table)


def test_weighted_tie_counts_as_pass():
    tree = Weighted((1.0, 1.0), 0.5, (Leaf("a"), Leaf("b")))
    assert ev(tree, {"a": "pass", "b": "fail"}) is P
    tree = Weighted((1.0, 1.0, 1.0), 2 / 3, (Leaf("a"), Leaf("b"), Leaf("c")))
    assert ev(tree, {"a": "pass", "b": "pass", "c": "fail"}) is P
    assert ev(tree, {"a": "pass", "b": "error", "c": "fail"}) is I
    assert ev(tree, {"a": "pass", "b": "fail", "c": "fail"}) is F


def test_structural_errors():
    with pytest.raises(StructuralError, match="unknown ids"):
        evaluate_tree(Leaf("ghost"), {"a": "pass"})
    with pytest.raises(StructuralError, match="more than once"):
        evaluate_tree(And((Leaf("a"), Leaf("a"))), {"a": "pass"})
    with pytest.raises(StructuralError):
        parse_tree({"k_of_n": {"k": 3, "children": ["a", "b"]}})
    with pytest.raises(StructuralError):
        parse_tree({"and": []})
    with pytest.raises(StructuralError):
        parse_tree({"weighted": {"weights": [0, 0], "threshold": 0.5, "children": ["a", "b"]}})
    with pytest.raises(StructuralError):
        parse_tree({"xor": ["a"]})
    with pytest.raises(StructuralError, match="missing"):
        overall({"x": "pass"}, {"and": ["x", "y"]})
    with pytest.raises(StructuralError):
        as_verdict("maybe")


def test_annotations_and_round_trip():
    doc = {"and": ["a", {"k_of_n": {"k": 1, "children": ["b", "c"]}},
                   {"weighted": {"weights": [2.0, 1.0], "threshold": 0.5, "children": ["d", "e"]}}]}
    tree = parse_tree(doc)
    assert parse_tree(tree_to_dict(tree)) == tree
    assert leaves(tree) == ["a", "b", "c", "d", "e"]
    verdict, notes = evaluate_tree(tree, dict.fromkeys("abcde", "pass"))
    assert verdict is P
    assert [n["path"] for n in notes] == ["0", "0.0", "0.1", "0.1.0", "0.1.1", "0.2", "0.2.0", "0.2.1"]
    assert notes[2]["node"] == "1_of_2"
