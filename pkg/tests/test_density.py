import numpy as np
import pytest

from fiberdensity.density import (CHECK_ORDER, MeasureSequence, check_convergence_on_module,
                                  orthogonal_perturbation, transfer_convergence, verify_bad_set_estimates)
from fiberdensity.envelope import RiemannIntegrableDescriptor, main_theorem_pipeline
from fiberdensity.errors import PreconditionViolation
from fiberdensity.fixtures import (TAMPER_KINDS, bad_set_fixture, full_module, pullback_only_module,
                                   tamper_bad_set)
from fiberdensity.functions import SampledFunction
from fiberdensity.spaces import make_system


@pytest.fixture
def six():
    sys_ = make_system({"a": "u", "b": "u", "c": "v", "d": "v", "e": "w", "f": "w"},
                       weights=[1, 2, 1, 1, 0.5, 1])
    phi = RiemannIntegrableDescriptor(SampledFunction.indicator(sys_.source, ["a", "d"]))
    return sys_, phi


def test_constant_sequence_has_zero_deviation(six):
    sys_, _ = six
    rep = check_convergence_on_module(MeasureSequence.constant(sys_.measure_upstairs), full_module(sys_))
    assert rep.all_converged and not rep.deviations.any()


def test_deviations_are_linear_in_one_over_n(six):
    sys_, _ = six
    mod = full_module(sys_)
    nu = np.linspace(0.1, 0.6, 6)
    rep = check_convergence_on_module(MeasureSequence.perturbation(sys_.measure_upstairs, nu), mod, N=50)
    expected = np.abs(nu @ mod.matrix)[None, :] / np.arange(1, 51)[:, None]
    assert np.allclose(rep.deviations, expected, atol=1e-14)
    assert rep.all_converged


def test_orthogonal_oscillation_is_invisible_to_the_module(six):
    sys_, phi = six
    mu = sys_.measure_upstairs
    mod = pullback_only_module(sys_)
    nu = orthogonal_perturbation(mu, mod, np.random.default_rng(5))
    seq = MeasureSequence.alternating(mu, nu)
    assert check_convergence_on_module(seq, mod).all_converged
    # yet the full space sees the oscillation
    assert not check_convergence_on_module(seq, full_module(sys_)).all_converged
    with pytest.raises(PreconditionViolation):
        orthogonal_perturbation(mu, full_module(sys_), np.random.default_rng(0))


def test_transfer_with_constant_sequence(six):
    sys_, phi = six
    mod = full_module(sys_)
    cert = main_theorem_pipeline(phi, mod, None, 0.1)
    rep = transfer_convergence(MeasureSequence.constant(sys_.measure_upstairs), phi, mod, 0.1,
                               certificate=cert)
    assert rep.status == "transferred" and rep.tail_max_lhs == 0


@pytest.mark.parametrize("eps", [0.5, 0.1])
def test_transfer_one_over_n(six, eps):
    sys_, phi = six
    mod = full_module(sys_)
    cert = main_theorem_pipeline(phi, mod, None, eps)
    nu = np.full(6, 0.7)
    rep = transfer_convergence(MeasureSequence.perturbation(sys_.measure_upstairs, nu), phi, mod, eps,
                               certificate=cert)
    assert rep.status == "transferred" and rep.triangle_ok and rep.bound_ok
    assert rep.tail_max_lhs <= 2 * eps + 1e-6
    lines = rep.to_csv().split("\r\n")
    assert lines[0].startswith("n,deviation_0") and len(lines) == 202


def test_transfer_gated_on_hypothesis(six):
    sys_, phi = six
    mod = full_module(sys_)
    nu = np.full(6, 0.3)
    rep = transfer_convergence(MeasureSequence.perturbation(sys_.measure_upstairs, nu, "parity"),
                               phi, mod, 0.1)
    assert rep.status == "hypothesis-failure" and not rep.rows
    assert rep.gate.flagged_directions
    # slow but genuine convergence still passes the gate
    slow = MeasureSequence.perturbation(sys_.measure_upstairs, nu, "1/sqrt(n)")
    assert check_convergence_on_module(slow, mod).all_converged
    with pytest.raises(PreconditionViolation):
        transfer_convergence(MeasureSequence.perturbation(sys_.measure_upstairs, nu), phi, mod, 0.1)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("n", [1, 2])
def test_bad_set_fixtures_pass(seed, n):
    fx = bad_set_fixture(np.random.default_rng(seed), n=n, grid=32 if n == 1 else 12)
    assert fx.c_prime_G == 2 ** n
    rep = verify_bad_set_estimates(fx)
    assert rep.passed, rep.to_json()
    assert not rep.input_violations
    assert rep.mass <= rep.majorant_mass < fx.eps / 2


@pytest.mark.parametrize("kind", TAMPER_KINDS)
def test_tampered_fixture_names_the_set(kind):
    fx = bad_set_fixture(np.random.default_rng(99), n=2, grid=12)
    rep = verify_bad_set_estimates(tamper_bad_set(fx, kind))
    assert rep.rejected_set == kind
    assert rep.rejected_set in CHECK_ORDER


def test_degenerate_single_region():
    fx = bad_set_fixture(np.random.default_rng(3), n=1, grid=32)
    # keep one region, exact a = 1 on its closed set and zero elsewhere
    fx.hat_h, fx.a = fx.hat_h[:1], np.where(fx.W_bar[:1], 1.0, 0.0)
    fx.W_bar, fx.W_prime, fx.V = fx.W_bar[:1], fx.W_bar[:1].copy(), fx.V[:1]
    fx.C = fx.W_bar[0].copy()
    fx.eps3 = 0.0
    rep = verify_bad_set_estimates(fx)
    assert rep.checks["annulus"] is None or rep.checks["annulus"] >= 0
    assert "good" not in rep.failed_sets and "bad" not in rep.failed_sets
