import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from steerbo.search_space import (CONTINUOUS, DISCRETE, Configuration, ParamSpec, SearchSpace,
                                  build_paper_space, decode, encode, lhs_sample, lhs_unit,
                                  random_sample, snap, validate)

SPACE = build_paper_space()

unit_points = st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8).map(np.array)


def test_paper_space_shape():
    assert SPACE.dim == 8
    kinds = [p.kind for p in SPACE.params]
    assert kinds.count(DISCRETE) == 7
    assert kinds.count(CONTINUOUS) == 1


def test_learning_rate_levels_ascending():
    assert SPACE["learning_rate"].levels == (1e-5, 1e-4, 1e-3, 1e-2)


def test_grid_size():
    assert SPACE.grid_size() == 4 * 4 * 4 * 4 * 3 * 4 * 4 == 12288


def test_encode_examples():
    cfg = decode(np.full(8, 0.0), SPACE)
    assert cfg["dropout"] == 0.0
    assert encode(cfg, SPACE)[SPACE.names.index("dropout")] == 0.0
    cfg = Configuration({**cfg.as_dict(), "convlstm1_maps": 8})
    assert encode(cfg, SPACE)[0] == pytest.approx(0.375)


def test_decode_bin_closure():
    spec = SPACE["convlstm1_maps"]
    assert spec.from_unit(0.999) == spec.levels[3]
    assert spec.from_unit(1.0) == spec.levels[3]
    assert spec.from_unit(0.0) == spec.levels[0]


@given(unit_points)
def test_round_trip(u):
    cfg = decode(u, SPACE)
    assert decode(encode(cfg, SPACE), SPACE) == cfg


@given(unit_points)
def test_decoded_always_valid(u):
    validate(decode(u, SPACE), SPACE)


def test_decoded_valid_bulk():
    for u in np.random.default_rng(0).random((10_000, 8)):
        validate(decode(u, SPACE), SPACE)


@given(st.lists(unit_points, min_size=1, max_size=6))
def test_snap_matches_encode_decode(rows):
    U = np.array(rows)
    expected = np.array([encode(decode(u, SPACE), SPACE) for u in U])
    np.testing.assert_array_equal(snap(U, SPACE), expected)


@given(st.integers(1, 12), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_lhs_strata(n, dim, seed):
    U = lhs_unit(dim, n, seed)
    for j in range(dim):
        assert sorted(np.floor(U[:, j] * n).astype(int)) == list(range(n))


def test_lhs_initial_design():
    design = lhs_sample(SPACE, 5, seed=3)
    assert len(design) == 5
    for cfg in design:
        validate(cfg, SPACE)
    assert design == lhs_sample(SPACE, 5, seed=3)


def test_random_sample():
    with pytest.raises(ValueError):
        random_sample(SPACE, 0, seed=0)
    a = random_sample(SPACE, 50, seed=7)
    assert a == random_sample(SPACE, 50, seed=7)
    for cfg in a:
        validate(cfg, SPACE)


def test_validate_rejects():
    good = decode(np.full(8, 0.5), SPACE).as_dict()
    with pytest.raises(ValueError):
        validate(Configuration({**good, "convlstm1_maps": 5}), SPACE)
    with pytest.raises(ValueError):
        validate(Configuration({**good, "dropout": 0.7}), SPACE)
    with pytest.raises(ValueError):
        validate(Configuration({**good, "extra": 1}), SPACE)
    missing = dict(good)
    del missing["fc_neurons"]
    with pytest.raises(ValueError):
        validate(Configuration(missing), SPACE)


def test_param_spec_checks():
    with pytest.raises(ValueError):
        ParamSpec("a", DISCRETE, levels=(2, 1))
    with pytest.raises(ValueError):
        ParamSpec("a", CONTINUOUS, lo=1.0, hi=1.0)
    with pytest.raises(ValueError):
        ParamSpec("a", "categorical")


def test_json_round_trip():
    again = SearchSpace.from_json(SPACE.to_json())
    assert again == SPACE
    assert again.digest() == SPACE.digest()
    assert json.loads(SPACE.to_json())["params"][0]["name"] == "convlstm1_maps"
