import pytest
from hypothesis import given, settings, strategies as st

from uqtest.errors import SpecificationError
from uqtest.odd import OddSpec, Region, SemanticDimension, check_consistency, contains

DIMS = (SemanticDimension("speed", 0.0, 100.0), SemanticDimension("weather", values=("sun", "rain")))


def toy(**kw):
    """Two-dimensional domain with scenario sets that agree with the bounds."""
    base = dict(dimensions=DIMS, epsilon=0.05, performance={"speed": (20.0, 80.0), "weather": ("sun",)},
                in_domain=({"speed": 50.0, "weather": "sun"}, {"speed": 30.0, "weather": "rain"}),
                out_of_domain=({"speed": 150.0, "weather": "sun"}, {"speed": 50.0, "weather": "snow"}),
                borderline=({"speed": 99.0, "weather": "rain"}, {"speed": 1.0, "weather": "sun"}))
    base.update(kw)
    return OddSpec(**base)


def test_midpoint_is_in():
    assert contains(toy(), {"speed": 50.0, "weather": "sun"}) is Region.IN


def test_above_max_is_out():
    assert contains(toy(), {"speed": 100.5, "weather": "sun"}) is Region.OUT


def test_band_arithmetic():
    assert contains(toy(), {"speed": 99.0, "weather": "sun"}) is Region.BORDERLINE
    assert contains(toy(), {"speed": 94.0, "weather": "sun"}) is Region.IN
    assert contains(toy(), {"speed": 100.0, "weather": "sun"}) is Region.BORDERLINE


def test_missing_dimension():
    with pytest.raises(SpecificationError):
        contains(toy(), {"speed": 1.0})


def test_toy_config_is_consistent_by_reclassification():
    odd = toy()
    labels = {"in_domain": {Region.IN, Region.BORDERLINE}, "out_of_domain": {Region.OUT},
              "borderline": {Region.BORDERLINE}}
    for name, allowed in labels.items():
        assert all(contains(odd, p) in allowed for p in getattr(odd, name))
    assert check_consistency(odd) == []


def test_planted_out_of_domain_point():
    odd = toy(out_of_domain=({"speed": 150.0, "weather": "sun"}, {"speed": 40.0, "weather": "rain"}))
    found = check_consistency(odd)
    assert len(found) == 1
    assert found[0].kind == "out_of_domain_inside" and "40.0" in found[0].subject


def test_performance_range_exceeding_bounds():
    found = check_consistency(toy(performance={"speed": (10.0, 120.0)}))
    assert [(v.kind, v.subject) for v in found] == [("performance_range", "speed")]
    found = check_consistency(toy(performance={"weather": ("sun", "hail")}))
    assert [(v.kind, v.subject) for v in found] == [("performance_range", "weather")]


def test_other_violation_kinds():
    odd = toy(in_domain=({"speed": -5.0, "weather": "sun"},), borderline=({"speed": 50.0, "weather": "sun"},))
    assert sorted(v.kind for v in check_consistency(odd)) == ["borderline_mismatch", "in_domain_outside"]


@pytest.mark.parametrize("kwargs", [
    {"dimensions": (SemanticDimension("a", 0, 1), SemanticDimension("a", 0, 1))},
    {"epsilon": 0.0}, {"epsilon": 0.5},
    {"performance": {"altitude": (0, 1)}},
])
def test_invalid_specs(kwargs):
    with pytest.raises(SpecificationError):
        toy(**kwargs)


@pytest.mark.parametrize("args", [("a", 1.0, 1.0), ("a", 2.0, 1.0), ("a",)])
def test_invalid_dimensions(args):
    with pytest.raises(SpecificationError):
        SemanticDimension(*args)
    with pytest.raises(SpecificationError):
        SemanticDimension("a", values=())


def test_dict_round_trip():
    odd = toy()
    assert OddSpec.from_dict(odd.to_dict()) == odd
    with pytest.raises(SpecificationError):
        OddSpec.from_dict({"epsilon": 0.1})


points = st.fixed_dictionaries({"speed": st.floats(-50, 150), "weather": st.sampled_from(["sun", "rain", "snow"])})


@settings(max_examples=200, deadline=None)
@given(points, st.floats(0.01, 0.49))
def test_contains_is_total_and_consistent_with_bounds(point, eps):
    odd = toy(epsilon=eps)
    region = contains(odd, point)
    assert region is contains(odd, point)
    inside = 0 <= point["speed"] <= 100 and point["weather"] in ("sun", "rain")
    assert (region is Region.OUT) == (not inside)


@settings(max_examples=200, deadline=None)
@given(st.lists(points, max_size=4), st.lists(points, max_size=4), st.lists(points, max_size=4))
def test_consistency_empty_iff_labels_match(ind, ood, border):
    odd = toy(in_domain=tuple(ind), out_of_domain=tuple(ood), borderline=tuple(border))
    matches = (all(contains(odd, p) is not Region.OUT for p in ind)
               and all(contains(odd, p) is Region.OUT for p in ood)
               and all(contains(odd, p) is Region.BORDERLINE for p in border))
    assert (check_consistency(odd) == []) == matches
