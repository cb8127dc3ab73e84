import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fiberdensity.fixtures import dense_module, random_complex_function, random_system
from fiberdensity.functions import (BaseAlgebra, PullbackModule, SampledFunction, conjugate_closure_check,
                                    integrate, module_stability_residual, pullback, restrict_to_fiber,
                                    sup_norm)
from fiberdensity.spaces import FiniteSpace, WeightedMeasure, make_system


def test_pullback_unit(four_point):
    one = SampledFunction.constant(four_point.target)
    assert np.all(pullback(four_point.map, one).values == 1)


def test_pullback_indicator():
    sys_ = make_system({"a": "y1", "b": "y2"})
    ind = SampledFunction.indicator(sys_.target, ["y1"])
    assert pullback(sys_.map, ind).values.tolist() == [1, 0]


def test_pullback_is_multiplicative(rng, four_point):
    Y = four_point.target
    f, g = random_complex_function(rng, Y), random_complex_function(rng, Y)
    lhs = pullback(four_point.map, f * g).values
    rhs = (pullback(four_point.map, f) * pullback(four_point.map, g)).values
    assert np.allclose(lhs, rhs)


def test_sup_norm_values():
    X = FiniteSpace(("a", "b"))
    assert sup_norm(SampledFunction.zero(X)) == 0
    assert sup_norm(SampledFunction(X, np.array([3, -4j]))) == 4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=2), st.lists(st.complex_numbers(max_magnitude=1e6, allow_nan=False,
                                                                      allow_infinity=False),
                                                   min_size=2, max_size=2))
def test_sup_norm_triangle(a, b):
    X = FiniteSpace(("a", "b"))
    f, g = SampledFunction(X, np.array(a)), SampledFunction(X, np.array(b))
    assert sup_norm(f + g) <= sup_norm(f) + sup_norm(g) + 1e-9 * (1 + sup_norm(f) + sup_norm(g))


def test_integrate_values():
    X = FiniteSpace(("a", "b"))
    assert integrate(SampledFunction.constant(X), WeightedMeasure(X, np.array([0.25, 0.75]))) == 1.0
    assert integrate(SampledFunction(X, np.array([1, -1])), WeightedMeasure(X, np.ones(2))) == 0
    assert integrate(SampledFunction(X, np.array([2, 3])), WeightedMeasure(X, np.array([0.5, 2]))) == 7


def test_restrict_to_fiber():
    X = FiniteSpace(("a", "b", "c"))
    f = SampledFunction(X, np.array([1, 2, 3]))
    assert restrict_to_fiber(f, ["a", "c"]).values.tolist() == [1, 3]
    assert restrict_to_fiber(SampledFunction.constant(X), ["b"]).values.tolist() == [1]


def test_pullback_module_rank_matches_image(rng):
    for _ in range(10):
        sys_ = random_system(rng, max_x=15, max_y=6)
        mod = PullbackModule(sys_, BaseAlgebra.all_functions(sys_.target),
                             (SampledFunction.constant(sys_.source),), closure_degree=1)
        assert mod.dimension == len(sys_.map.image)


def test_single_generator_zero_algebra():
    sys_ = make_system({"a": "y", "b": "y"})
    f = SampledFunction(sys_.source, np.array([3.0, 4.0]))
    mod = PullbackModule(sys_, BaseAlgebra(sys_.target, ()), (f,), closure_degree=1)
    assert mod.dimension == 1
    assert np.allclose(np.abs(mod.basis[0].values), [0.6, 0.8])


def test_dependent_generators_lose_rank():
    sys_ = make_system({"a": "y", "b": "z", "c": "z"})
    f = SampledFunction(sys_.source, np.array([1.0, 2.0, 3.0]))
    mod = PullbackModule(sys_, BaseAlgebra(sys_.target, ()), (f, 2 * f), closure_degree=1)
    assert mod.dimension == 1


def test_conjugation_closure():
    sys_ = make_system({"a": "y", "b": "y"})
    X, A = sys_.source, BaseAlgebra(sys_.target, ())
    real = PullbackModule(sys_, A, (SampledFunction(X, np.array([1.0, 2.0])),), closure_degree=1)
    assert conjugate_closure_check(real).closed
    imag = PullbackModule(sys_, A, (SampledFunction.constant(X, 1j),), closure_degree=1)
    assert conjugate_closure_check(imag).closed
    g = SampledFunction(X, np.array([1.0, 1j]))
    assert not conjugate_closure_check(PullbackModule(sys_, A, (g,), closure_degree=1)).closed


def test_random_modules_are_stable_and_contain_generators(rng):
    for _ in range(10):
        sys_ = random_system(rng, max_x=20, max_y=5)
        mod = dense_module(rng, sys_, complex_pairs=True)
        assert module_stability_residual(mod) < 1e-9
        for g in mod.module_generators:
            assert mod.contains(g)
        Q = mod.matrix
        assert np.allclose(Q.conj().T @ Q, np.eye(Q.shape[1]), atol=1e-10)


def test_module_json_roundtrip(rng):
    sys_ = random_system(rng, max_x=10, max_y=4)
    mod = dense_module(rng, sys_)
    back = PullbackModule.from_json(mod.to_json(), sys_)
    assert back.dimension == mod.dimension
    for b in mod.basis:
        assert back.contains(b)
