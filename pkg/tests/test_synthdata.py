import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uqtest.errors import ConfigurationError, GeneratorConfigError, ParseError
from uqtest.synthdata import Dataset, Generator, generate, load_curated, save_jsonl, with_parameter


def test_canonical_defaults(canonical):
    x = np.array([-3.0, 0.0, 1.5])
    np.testing.assert_allclose(canonical.mean_fn(x), np.sin(2 * x))
    np.testing.assert_allclose(canonical.noise_fn(x), 0.1 + 0.2 * np.abs(x))
    data = generate(canonical, 1000, 0)
    assert data.x.min() >= -3.0 and data.x.max() <= 3.0


def test_noiseless_generator_returns_mean_exactly():
    g = Generator(noise="constant", noise_base=0.0)
    data = generate(g, 500, 4)
    np.testing.assert_array_equal(data.y, g.mean_fn(data.x))
    np.testing.assert_array_equal(data.sigma_gt, 0.0)


def test_same_seed_same_dataset(canonical):
    a, b = generate(canonical, 300, 9), generate(canonical, 300, 9)
    assert a.equals(b)
    assert not a.equals(generate(canonical, 300, 10))


def test_prefix_stability(canonical):
    short, long = generate(canonical, 50, 3), generate(canonical, 400, 3)
    np.testing.assert_array_equal(short.x, long.x[:50])
    np.testing.assert_array_equal(short.y, long.y[:50])


@pytest.mark.parametrize("x0", [0.0, 1.5, -2.8])
def test_noise_std_matches_sigma_at_fixed_x(x0):
    g = Generator(low=x0, high=x0 + 1e-12)
    data = generate(g, 100_000, 17)
    resid = data.y - g.mean_fn(data.x)
    sigma = 0.1 + 0.2 * abs(x0)
    assert abs(resid.std() / sigma - 1) < 0.02


def test_semantics_record_generator_parameters():
    g = with_parameter(Generator(), "noise_scale", 1.3)
    data = generate(g, 20, 0)
    np.testing.assert_array_equal(data.semantics["noise_scale"], 1.3)
    np.testing.assert_array_equal(data.semantics["frequency"], 2.0)
    with pytest.raises(GeneratorConfigError):
        with_parameter(g, "low", 0.0)


def test_shift_moves_the_sampling_box():
    data = generate(Generator(shift=5.0), 1000, 1)
    assert data.x.min() >= 2.0 and data.x.max() <= 8.0


def test_groups_cycle_over_rows():
    data = generate(Generator(groups=("a", "b", "c")), 7, 0)
    assert list(data.group) == ["a", "b", "c", "a", "b", "c", "a"]


def test_negative_noise_is_a_config_error():
    g = Generator(noise="affine", noise_base=-1.0, noise_slope=0.1)
    with pytest.raises(GeneratorConfigError, match="< 0"):
        generate(g, 100, 0)


@pytest.mark.parametrize("kwargs", [{"mean": "cos"}, {"noise": "laplace"}, {"sampler": "sobol"},
                                    {"low": 1.0, "high": 1.0}, {"n_features": 0}])
def test_invalid_generators(kwargs):
    with pytest.raises(GeneratorConfigError):
        Generator(**kwargs)


def test_generator_dict_round_trip():
    g = Generator(mean="polynomial", coefficients=(1, 2), groups=("x",), n_features=2)
    assert Generator.from_dict(g.to_dict()).to_dict() == g.to_dict()
    with pytest.raises(GeneratorConfigError):
        Generator.from_dict({"colour": "red"})


def test_n_must_be_positive(canonical):
    with pytest.raises(ConfigurationError):
        generate(canonical, 0, 0)


def test_extra_features_carry_no_signal():
    g = Generator(n_features=3)
    data = generate(g, 100, 0)
    assert data.x.shape == (100, 3)
    np.testing.assert_array_equal(data.mu_gt, g.mean_fn(data.x[:, 0]))


def _write(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def test_load_three_rows(tmp_path):
    rows = [{"x": [0.1], "y": 1.0}, {"x": [0.2], "y": 2.0}, {"x": [0.3], "y": 3.0}]
    data = load_curated(_write(tmp_path / "c.jsonl", rows))
    assert len(data) == 3 and data.n_features == 1
    np.testing.assert_array_equal(data.y, [1.0, 2.0, 3.0])


def test_negative_sigma_names_the_row(tmp_path):
    rows = [{"x": [0.1], "y": 1.0, "sigma_gt": 0.5}, {"x": [0.2], "y": 2.0, "sigma_gt": -1}]
    with pytest.raises(ParseError) as info:
        load_curated(_write(tmp_path / "c.jsonl", rows))
    assert info.value.row == 2


@pytest.mark.parametrize("rows", [
    [{"x": [0.1], "y": "a"}],
    [{"x": [], "y": 1.0}],
    [{"x": [0.1], "y": 1.0, "colour": 1}],
    [{"x": [0.1], "y": 1.0}, {"x": [0.1, 0.2], "y": 1.0}],
    [],
])
def test_schema_violations(tmp_path, rows):
    with pytest.raises(ParseError):
        load_curated(_write(tmp_path / "c.jsonl", rows))


def test_invalid_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"x": [1], "y": 1}\n{not json\n')
    with pytest.raises(ParseError) as info:
        load_curated(bad)
    assert info.value.row == 2
    with pytest.raises(ParseError):
        load_curated(tmp_path / "absent.jsonl")


def test_jsonl_round_trip(tmp_path, canonical):
    data = generate(Generator(groups=("day", "night"), n_features=2), 64, 5)
    save_jsonl(data, tmp_path / "d.jsonl")
    back = load_curated(tmp_path / "d.jsonl")
    assert back.equals(data)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1e3)), min_size=1, max_size=20))
def test_round_trip_arbitrary_rows(tmp_path_factory, rows):
    x, y, s = map(np.array, zip(*rows))
    data = Dataset(x[:, None], y, s)
    path = tmp_path_factory.mktemp("rt") / "d.jsonl"
    save_jsonl(data, path)
    assert load_curated(path).equals(data)


def test_dataset_invariants():
    with pytest.raises(ConfigurationError):
        Dataset(np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(ConfigurationError):
        Dataset(np.zeros((2, 1)), np.zeros(2), np.array([0.1, -0.1]))
