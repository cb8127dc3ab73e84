import numpy as np
import pytest

from fiberdensity.fixtures import broken_module, dense_module, random_complex_function, random_real_function, random_system
from fiberdensity.functions import BaseAlgebra, PullbackModule, SampledFunction
from fiberdensity.localization import construct_approximant, localize_distance, preflight
from fiberdensity.spaces import make_system


def _pullback_module(sys_, algebra=None):
    algebra = algebra or BaseAlgebra.all_functions(sys_.target)
    return PullbackModule(sys_, algebra, (SampledFunction.constant(sys_.source),), closure_degree=1)


def test_member_distances_zero(rng):
    sys_ = random_system(rng, max_x=12, max_y=4)
    mod = dense_module(rng, sys_)
    rep = localize_distance(mod.module_generators[0] * 2.5, mod)
    assert rep.global_distance == pytest.approx(0, abs=1e-9)
    assert all(d == pytest.approx(0, abs=1e-9) for d in rep.fiber_distances.values())


def test_four_point_example(four_point):
    f = SampledFunction(four_point.source, np.array([0, 1, 0, 2], dtype=complex))
    rep = localize_distance(f, _pullback_module(four_point))
    assert rep.fiber_distances["y1"] == pytest.approx(0.5)
    assert rep.fiber_distances["y2"] == pytest.approx(1.0)
    assert rep.global_distance == pytest.approx(1.0)
    assert rep.status == "ok"
    assert rep.to_csv().splitlines()[0] == "fiber_id,fiber_size,fiber_distance"


def test_constants_algebra_is_flagged(four_point):
    f = SampledFunction(four_point.source, np.array([0, 0, 2, 2], dtype=complex))
    rep = localize_distance(f, _pullback_module(four_point, BaseAlgebra.constants(four_point.target)))
    assert rep.flagged
    assert rep.sup_fiber_distance == pytest.approx(0, abs=1e-9)
    assert rep.global_distance == pytest.approx(1.0)


@pytest.mark.parametrize("complex_data", [False, True])
def test_equality_on_random_systems(complex_data):
    rng = np.random.default_rng(7 + complex_data)
    for _ in range(15):
        sys_ = random_system(rng, max_x=20, max_y=6)
        mod = dense_module(rng, sys_, complex_pairs=complex_data)
        make = random_complex_function if complex_data else random_real_function
        f = make(rng, sys_.source)
        rep = localize_distance(f, mod)
        assert rep.status == "ok"
        assert abs(rep.gap) <= 1e-6 * (1 + rep.f_sup_norm)


@pytest.mark.parametrize("kind", ["constants", "nonconjugate", "truncated"])
def test_easy_inequality_with_broken_hypotheses(kind):
    rng = np.random.default_rng(["constants", "nonconjugate", "truncated"].index(kind) + 31)
    for _ in range(10):
        sys_ = random_system(rng, max_x=20, max_y=6, min_y=2)
        mod = broken_module(rng, sys_, kind)
        f = random_complex_function(rng, sys_.source)
        rep = localize_distance(f, mod)
        assert rep.global_distance >= rep.sup_fiber_distance - 1e-7


def test_preflight_failures_are_named(four_point):
    pf = preflight(_pullback_module(four_point, BaseAlgebra.constants(four_point.target)))
    assert not pf.passed and pf.failures()


def test_approximant_examples(four_point):
    f = SampledFunction(four_point.source, np.array([0, 1, 0, 2], dtype=complex))
    mod = _pullback_module(four_point)
    errs = []
    for eps in (0.5, 0.1, 0.01):
        ap = construct_approximant(f, mod, eps)
        assert ap.achieved_error <= 1.0 + eps
        assert mod.contains(ap.assembled)
        errs.append(ap.achieved_error)
    assert errs[0] + 1e-9 >= errs[1] >= errs[2] - 1e-9
    member = mod.module_generators[0] * 3
    assert construct_approximant(member, mod, 0.1).achieved_error <= 0.1


def test_approximant_on_random_corpus():
    rng = np.random.default_rng(11)
    for _ in range(10):
        sys_ = random_system(rng, max_x=20, max_y=6)
        mod = dense_module(rng, sys_, complex_pairs=True)
        f = random_complex_function(rng, sys_.source)
        rep = localize_distance(f, mod)
        for eps in (0.5, 0.01):
            ap = construct_approximant(f, mod, eps, rep)
            assert ap.achieved_error <= rep.sup_fiber_distance + eps
