from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fiberdensity.avoidance import (AvoidanceInstance, brute_force_avoidance_oracle, find_regular_vector,
                                    passes_margin, random_instance)
from fiberdensity.errors import ConfigurationError, PreconditionViolation


def test_single_vector():
    res = find_regular_vector(AvoidanceInstance(2, ((1, 0),), ((1, 0),)))
    assert res.v == (1, 0)


def test_second_candidate():
    res = find_regular_vector(AvoidanceInstance(2, ((1, 0), (0, 1)), ((1, -1), (1, 1))))
    assert res.t == 2 and res.v == (1, 2)


def test_functional_killing_span_is_named():
    inst = AvoidanceInstance(3, ((1, 0, 0), (0, 1, 0)), ((1, 1, 0), (0, 0, 1)))
    with pytest.raises(PreconditionViolation, match="#1"):
        find_regular_vector(inst)
    assert brute_force_avoidance_oracle(inst) is None


def test_dimension_mismatch():
    with pytest.raises(ConfigurationError):
        AvoidanceInstance(2, ((1, 0, 0),), ())


def test_fraction_and_string_entries():
    inst = AvoidanceInstance.from_json({"S": [["1/3", "0"], [0, 1]], "T": [["3", "-1"]]})
    res = find_regular_vector(inst)
    assert all(isinstance(c, Fraction) for c in res.v)
    assert passes_margin(inst.T[0], res.v)


def _in_span(inst, v):
    S = np.array([[float(c) for c in s] for s in inst.S]).T
    v = np.array([float(c) for c in v])
    coef, *_ = np.linalg.lstsq(S, v, rcond=None)
    return np.linalg.norm(S @ coef - v) <= 1e-9 * max(1.0, np.linalg.norm(v))


@pytest.mark.parametrize("seed", range(200))
def test_oracle_agreement(seed):
    inst = random_instance(np.random.default_rng(seed), max_dim=5, max_s=3, kill_probability=0.15)
    try:
        res = find_regular_vector(inst)
        found = True
    except PreconditionViolation:
        found = False
    oracle = brute_force_avoidance_oracle(inst)
    assert (oracle is not None) == found
    if found:
        assert _in_span(inst, res.v)
        assert all(passes_margin(lam, oracle) for lam in inst.T)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4).flatmap(lambda d: st.tuples(
    st.just(d),
    st.lists(st.lists(st.integers(-5, 5), min_size=d, max_size=d), min_size=1, max_size=4),
    st.lists(st.lists(st.integers(-5, 5), min_size=d, max_size=d), min_size=0, max_size=6))))
def test_result_avoids_every_functional(data):
    d, S, T = data
    inst = AvoidanceInstance(d, tuple(map(tuple, S)), tuple(map(tuple, T)))
    try:
        res = find_regular_vector(inst)
    except PreconditionViolation:
        # then some functional vanishes on all of S
        assert any(all(sum(a * b for a, b in zip(lam, s)) == 0 for s in S) for lam in T)
        return
    assert all(sum(a * b for a, b in zip(lam, res.v)) != 0 for lam in inst.T)
    assert res.t <= len(S) * len(T) + 1
