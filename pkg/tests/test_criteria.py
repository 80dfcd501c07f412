import math

import pytest
from hypothesis import given, strategies as st

from uqtest.criteria import (AcceptanceCriterion, Level, Outcome, RequirementCategory, compare, evaluate,
                             parse_criteria, serialize_criteria)
from uqtest.errors import CriteriaError


def crit(**kw):
    base = {"id": "c1", "category": "calibration", "data": {"kind": "full_odd", "generator": "g", "n": 100},
            "measure": "ece_regression", "comparator": "<=", "threshold": 0.1}
    base.update(kw)
    return base


def test_category_set_is_closed_at_ten():
    assert len(RequirementCategory) == 10


def test_parse_simple_criterion():
    (c,) = parse_criteria([crit()])
    assert c.category is RequirementCategory.CALIBRATION
    assert c.measure.name == "ece_regression" and c.threshold == 0.1
    assert c.test_depth == (Level.GLOBAL,)


def test_unknown_measure_names_the_field():
    with pytest.raises(CriteriaError, match=r"criteria\[0\]\.measure\.name"):
        parse_criteria([crit(measure="pdq")])


def test_duplicate_id():
    with pytest.raises(CriteriaError, match="duplicate"):
        parse_criteria([crit(), crit()])


@pytest.mark.parametrize("kw,fragment", [
    ({"comparator": ">="}, "inverted"),
    ({"threshold": 1.5}, "vacuous"),
    ({"threshold": -0.1}, "unsatisfiable"),
    ({"threshold": math.nan}, "finite"),
    ({"threshold": None}, "finite"),
    ({"comparator": "<"}, "comparator"),
    ({"category": "vibes"}, "category"),
    ({"test_depth": ["deep"]}, "level"),
    ({"test_depth": []}, "test_depth"),
    ({"data": None}, "data"),
    ({"colour": 1}, "unknown fields"),
    ({"measure": {"name": "etl", "params": {"alpha": 1.0}}}, "alpha"),
    ({"measure": {"name": "etl", "params": {"score": "vibes"}}}, "score"),
])
def test_rejections(kw, fragment):
    with pytest.raises(CriteriaError, match=fragment):
        parse_criteria([crit(**kw)])


def test_qualitative_category_needs_manual():
    with pytest.raises(CriteriaError, match="qualitative"):
        parse_criteria([crit(category="argumentatively_substantiated")])
    (c,) = parse_criteria([{"id": "a", "category": "argumentatively_substantiated", "measure": "manual",
                            "asserted": True, "note": "reviewed"}])
    assert c.manual and c.asserted and c.test_depth == ()
    with pytest.raises(CriteriaError, match="asserted"):
        parse_criteria([{"id": "a", "category": "technical_simplicity", "measure": "manual"}])


def test_named_data_reference_is_checked():
    doc = {"criteria": [crit(data="test")], "data": {"other": {"kind": "full_odd"}}}
    with pytest.raises(CriteriaError, match="unknown data spec"):
        parse_criteria(doc)


def test_search_data_needs_point_measure():
    doc = {"criteria": [crit(data="s")], "data": {"s": {"kind": "search"}}}
    with pytest.raises(CriteriaError, match="point scores"):
        parse_criteria(doc)
    doc["criteria"] = [crit(data="s", measure={"name": "quantile", "params": {"q": 1.0}}, threshold=2.0)]
    assert parse_criteria(doc)[0].measure.name == "quantile"


@pytest.mark.parametrize("measured,expected", [(0.05, Outcome.PASS), (0.1, Outcome.PASS),
                                               (0.1000001, Outcome.FAIL), (math.nan, Outcome.ERROR),
                                               (math.inf, Outcome.ERROR), (None, Outcome.ERROR)])
def test_evaluate_inclusive(measured, expected):
    (c,) = parse_criteria([crit()])
    assert evaluate(c, measured) is expected


def test_greater_equal_comparator():
    assert compare(">=", 2.0, 2.0) is Outcome.PASS
    assert compare(">=", 1.9, 2.0) is Outcome.FAIL


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_evaluate_monotone(t, v, w):
    lo, hi = sorted((v, w))
    if compare("<=", hi, t) is Outcome.PASS:
        assert compare("<=", lo, t) is Outcome.PASS
    if compare(">=", lo, t) is Outcome.PASS:
        assert compare(">=", hi, t) is Outcome.PASS


def test_round_trip():
    doc = [crit(), crit(id="c2", measure={"name": "etl", "params": {"alpha": 0.9}}, threshold=3.0,
                        test_depth=["complementary", "global"], note="worst case"),
           {"id": "m", "category": "technical_simplicity", "measure": "manual", "asserted": False}]
    parsed = parse_criteria(doc)
    again = parse_criteria(serialize_criteria(parsed))
    assert again == parsed
    assert all(isinstance(c, AcceptanceCriterion) for c in again)
