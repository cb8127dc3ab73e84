"""The twelve acceptance criteria, each at its stated tolerance."""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from fiberdensity.avoidance import brute_force_avoidance_oracle, find_regular_vector, random_instance
from fiberdensity.boxcover import THICKENING, build_cover, verify_cover
from fiberdensity.cheb import brute_force_cheb_oracle, cheb_best_approx, envelope_feasible, grid_resolution
from fiberdensity.cli import BUNDLED, run_suite
from fiberdensity.density import MeasureSequence, transfer_convergence, verify_bad_set_estimates
from fiberdensity.envelope import (RiemannIntegrableDescriptor, double_closure_splice, find_dominating,
                                   main_theorem_pipeline, verify_nesting)
from fiberdensity.errors import HypothesisViolation, PreconditionViolation
from fiberdensity.fixtures import (TAMPER_KINDS, bad_set_fixture, broken_module, dense_module, full_module,
                                   random_complex_function, random_real_function, random_region,
                                   random_system, tamper_bad_set)
from fiberdensity.functions import SampledFunction
from fiberdensity.localization import construct_approximant, localize_distance, preflight
from fiberdensity.obstruction import build_fixture, contradiction_replay, infeasibility_threshold, verify_trace
from fiberdensity.spaces import FiniteSpace


@pytest.fixture(scope="module")
def corpus():
    """At least 100 seeded systems (|X| <= 40, |Y| <= 10, dim <= 12) passing preflight."""
    rng = np.random.default_rng(1001)
    out, t0 = [], time.perf_counter()
    while len(out) < 100:
        sys_ = random_system(rng, max_x=40, max_y=10)
        cplx = len(out) % 3 == 0
        mod = dense_module(rng, sys_, max_dim=12, complex_pairs=cplx)
        if mod.dimension > 12 or not preflight(mod).passed:
            continue
        f = (random_complex_function if cplx else random_real_function)(rng, sys_.source)
        out.append((mod, f, localize_distance(f, mod)))
    return out, time.perf_counter() - t0


def test_c01_localization_equality(corpus, acceptance):
    cases, elapsed = corpus
    worst = max(abs(r.gap) / (1 + r.f_sup_norm) for _, _, r in cases)
    ok = worst <= 1e-6 and elapsed <= 60 and len(cases) >= 100
    acceptance(1, ok, f"{len(cases)} systems, worst relative gap {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_c02_constructive_approximant(corpus, acceptance):
    cases, _ = corpus
    bad = 0
    for mod, f, rep in cases:
        for eps in (0.5, 0.1, 0.01):
            ap = construct_approximant(f, mod, eps, rep)
            bad += not ap.achieved_error <= rep.sup_fiber_distance + eps
    acceptance(2, bad == 0, f"{3 * len(cases)} approximants, {bad} over budget")
    assert bad == 0


def test_c03_easy_inequality(acceptance):
    rng = np.random.default_rng(1003)
    kinds = ("constants", "nonconjugate", "truncated")
    worst = math.inf
    for k in range(100):
        sys_ = random_system(rng, max_x=40, max_y=10, min_y=2)
        mod = broken_module(rng, sys_, kinds[k % 3])
        f = random_complex_function(rng, sys_.source)
        try:
            rep = localize_distance(f, mod)
            worst = min(worst, rep.global_distance - rep.sup_fiber_distance)
        except AssertionError:
            worst = -math.inf
    ok = worst >= -1e-7
    acceptance(3, ok, f"100 broken systems, min(global - max fiber) = {worst:.2e}")
    assert ok


def test_c04_covering_lemma(acceptance):
    t0 = time.perf_counter()
    fails, max_ratio = [], 0.0
    for seed in range(100):
        rng = np.random.default_rng(4000 + seed)
        space, K, fam = random_region(rng)
        cover = build_cover(space, K, fam)
        v = verify_cover(cover, K, fam)
        widths = all(b.width == Fraction(11, 10) * Fraction(1, 2 ** cover.k_final) for b in cover.boxes)
        ok = (cover.multiplicity <= 2 ** space.n and v["subordinate"] and v["covered"] and widths
              and THICKENING == Fraction(11, 10))
        max_ratio = max(max_ratio, cover.multiplicity / 2 ** space.n)
        if not ok:
            fails.append(seed)
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed <= 120
    acceptance(4, ok, f"100 regions, max multiplicity/2^n = {max_ratio:.2f}, {elapsed:.1f}s, failures {fails}")
    assert ok


def _independent_check(phi, m1, m2, mu, eps):
    """Plain-Python re-verification: pointwise domination and strict mass bound."""
    margin = min(float(b.real) - abs(complex(p) - complex(a)) for p, a, b in zip(phi, m1, m2))
    mass = math.fsum(float(w) * float(b.real) for w, b in zip(mu.weights, m2))
    return margin >= -1e-9 and mass < eps, mass


def _pipeline_instance(rng):
    sys_ = random_system(rng, max_x=10, max_y=4, min_y=2)
    X = sys_.source
    vals = np.where(rng.random(len(X)) < 0.5, rng.uniform(0.2, 2.0, len(X)), 0.0)
    vals[int(rng.integers(len(X)))] = 1.0
    return sys_, full_module(sys_), RiemannIntegrableDescriptor(SampledFunction(X, vals.astype(complex)))


def test_c05_main_pipeline(acceptance):
    rng = np.random.default_rng(1005)
    fails = 0
    for _ in range(30):
        sys_, mod, phi = _pipeline_instance(rng)
        for eps in (1.0, 0.1, 0.01):
            cert = main_theorem_pipeline(phi, mod, None, eps)
            ok, _ = _independent_check(phi.function.values, cert.m1.values, cert.m2.values,
                                       sys_.measure_upstairs, eps)
            mc = cert.ledger.dominating_mc.values.real
            factor = 3 * float(np.abs(mc).max()) + float(sys_.measure_upstairs.weights @ mc)
            ok &= cert.ledger.eps1 < eps / factor
            fails += not ok
    acceptance(5, fails == 0, f"90 certificates (30 instances x 3 eps), {fails} failures")
    assert fails == 0


def test_c06_closure_lemmas(acceptance):
    rng = np.random.default_rng(1006)
    nest_bad = 0
    for k in range(50):
        while True:
            sys_ = random_system(rng, max_x=8, max_y=4)
            mod = dense_module(rng, sys_, max_dim=8)
            try:
                # a sample of U'_{eps'}: |h| <= m' for a module element m' of mass below eps'
                mp = find_dominating(random_real_function(rng, sys_.source), mod, None).values.real
                break
            except HypothesisViolation:
                continue   # no dominator at all: U'_{eps'} is empty for this module
        ep = float(rng.uniform(0.3, 1.0))
        e = ep + float(rng.uniform(0.05, 1.0))
        mp = mp * (ep * float(rng.uniform(0.1, 0.9)) / float(sys_.measure_upstairs.weights @ mp))
        h = SampledFunction(sys_.source, (mp * rng.uniform(-1, 1, len(mp))).astype(complex))
        rep = verify_nesting(mod, None, [(ep, e)], [h])
        nest_bad += not all(c.applicable and c.ok and c.witness_mass < e for c in rep.cases)
    splice_bad = 0
    for _ in range(20):
        sys_, mod, phi = _pipeline_instance(rng)
        eps = float(rng.choice([1.0, 0.1, 0.01]))
        half = main_theorem_pipeline(phi, mod, None, eps / 2)
        cert = double_closure_splice(phi.function, half.m1, half.m2, mod, None, eps)
        ok, _ = _independent_check(phi.function.values, cert.m1.values, cert.m2.values,
                                   sys_.measure_upstairs, eps)
        splice_bad += not (ok and mod.residual(cert.m1.values) < 1e-8)
    ok = nest_bad == 0 and splice_bad == 0
    acceptance(6, ok, f"nesting 50 pairs ({nest_bad} bad), double closure 20 instances ({splice_bad} bad)")
    assert ok


def test_c07_obstruction_threshold(acceptance):
    rng = np.random.default_rng(1007)
    worst, fails = 0.0, 0
    for _ in range(20):
        d1, d2 = (float(x) for x in rng.uniform(0.1, 3.0, 2))
        fx = build_fixture(d1, d2)
        thr = infeasibility_threshold(fx, "pullback")
        sep = infeasibility_threshold(fx, "separating")
        trace = contradiction_replay(fx, 0.4 * (d1 + d2))
        worst = max(worst, abs(thr - (d1 + d2) / 2))
        fails += not (abs(thr - (d1 + d2) / 2) <= 1e-3 and thr >= d1 / 2 and sep <= 1e-4
                      and trace.contradiction and verify_trace(trace))
    acceptance(7, fails == 0, f"20 mass pairs, worst |eps* - (d1+d2)/2| = {worst:.1e}, {fails} failures")
    assert fails == 0


def test_c08_density_transfer(acceptance):
    worst, fails = 0.0, 0
    for seed in range(10):
        rng = np.random.default_rng(8000 + seed)
        sys_ = random_system(rng, max_x=6, max_y=3, min_y=2)
        while len(sys_.source) != 6:
            sys_ = random_system(rng, max_x=6, max_y=3, min_y=2)
        mod = full_module(sys_)
        X = sys_.source
        phi = RiemannIntegrableDescriptor(SampledFunction.indicator(X, [X.points[int(rng.integers(6))]]))
        mu = sys_.measure_upstairs
        nu = rng.uniform(0, 1, 6)
        for eps in (0.5, 0.1):
            cert = main_theorem_pipeline(phi, mod, None, eps)
            rep = transfer_convergence(MeasureSequence.perturbation(mu, nu, "1/n"), phi, mod, eps, 200,
                                       certificate=cert)
            worst = max(worst, rep.tail_max_lhs / (2 * eps))
            fails += not (rep.status == "transferred" and rep.triangle_ok
                          and rep.tail_max_lhs <= 2 * eps + 1e-6)
        adv = transfer_convergence(MeasureSequence.perturbation(mu, nu, "parity"), phi, mod, 0.1, 200)
        fails += adv.status != "hypothesis-failure"
    acceptance(8, fails == 0, f"10 seeds x 2 eps, worst tail/(2 eps) = {worst:.3f}; adversarial rejected; "
                              f"{fails} failures")
    assert fails == 0


def test_c09_bad_set_checker(acceptance):
    clean_bad, tamper_bad = 0, []
    for seed in range(20):
        n = 1 + seed % 2
        fx = bad_set_fixture(np.random.default_rng(9000 + seed), n=n, grid=32 if n == 1 else 12)
        rep = verify_bad_set_estimates(fx)
        clean_bad += not (rep.passed and fx.c_prime_G == 2 ** n and rep.mass < fx.eps / 2)
    fx = bad_set_fixture(np.random.default_rng(9100), n=2, grid=12)
    for kind in TAMPER_KINDS:
        got = verify_bad_set_estimates(tamper_bad_set(fx, kind)).rejected_set
        if got != kind:
            tamper_bad.append((kind, got))
    ok = clean_bad == 0 and not tamper_bad
    acceptance(9, ok, f"20 cover-built fixtures ({clean_bad} failing), 5 violated fixtures "
                      f"(misnamed: {tamper_bad})")
    assert ok


def test_c10_hyperplane_avoidance(acceptance):
    margin_bad, disagree, oracle_runs = 0, 0, 0
    for seed in range(1000):
        inst = random_instance(np.random.default_rng(10_000 + seed), max_dim=6, kill_probability=0.1)
        try:
            v = find_regular_vector(inst).v
            found = True
            vf = np.array([float(c) for c in v])
            S = np.array([[float(c) for c in s] for s in inst.S]).T
            coef, *_ = np.linalg.lstsq(S, vf, rcond=None)
            in_span = np.linalg.norm(S @ coef - vf) <= 1e-9 * max(1.0, np.linalg.norm(vf))
            for lam in inst.T:
                lf = np.array([float(c) for c in lam])
                exact = sum(a * b for a, b in zip(lam, v))
                margin_bad += not (exact != 0 and abs(float(exact)) > 1e-12 * np.linalg.norm(lf)
                                   * np.linalg.norm(vf))
            margin_bad += not in_span
        except PreconditionViolation:
            found = False
        if len(inst.S) <= 3:
            oracle_runs += 1
            disagree += (brute_force_avoidance_oracle(inst) is not None) != found
    ok = margin_bad == 0 and disagree == 0
    acceptance(10, ok, f"1000 instances, margin failures {margin_bad}, oracle disagreements "
                       f"{disagree}/{oracle_runs}")
    assert ok


def test_c11_solver_soundness(acceptance):
    rng = np.random.default_rng(1011)
    cheb_bad = 0
    for k in range(50):
        n = int(rng.integers(3, 10))
        X = FiniteSpace(tuple(f"p{i}" for i in range(n)))
        complex_data = k % 5 == 0
        d = 1 if complex_data else int(rng.integers(1, 3))
        basis = [SampledFunction(X, rng.uniform(-1, 1, n).astype(complex)) for _ in range(d)]
        vals = rng.uniform(-1, 1, n) + (1j * rng.uniform(-1, 1, n) if complex_data else 0)
        f = SampledFunction(X, np.asarray(vals, dtype=complex))
        sol = cheb_best_approx(f, basis)
        R = 1.0 + 2 * float(np.abs(sol.coefficients).max())
        steps = 201 if (d == 1 and not complex_data) else 101
        oracle = brute_force_cheb_oracle(f, basis, None, R, steps)
        res = grid_resolution(basis, X, None, R, steps)
        cheb_bad += not abs(oracle.distance - sol.distance) <= 2 * res
    mono_bad = 0
    ladder = [0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0]
    for _ in range(100):
        sys_ = random_system(rng, max_x=12, max_y=5)
        mod = dense_module(rng, sys_, max_dim=8)
        h = random_real_function(rng, sys_.source, 0.3)
        feas = [envelope_feasible(h, mod, sys_.measure_upstairs, e).feasible for e in ladder]
        mono_bad += any(a and not b for a, b in zip(feas, feas[1:]))
    ok = cheb_bad == 0 and mono_bad == 0
    acceptance(11, ok, f"Chebyshev vs oracle 50 instances ({cheb_bad} off), envelope monotone on 100 "
                       f"({mono_bad} violations)")
    assert ok


def test_c12_reproducibility(tmp_path, acceptance):
    codes = [run_suite(BUNDLED, tmp_path / "first"), run_suite(BUNDLED, tmp_path / "second")]
    files = sorted(p.name for p in (tmp_path / "first").iterdir())
    differing = [name for name in files
                 if (tmp_path / "first" / name).read_bytes() != (tmp_path / "second" / name).read_bytes()]
    ok = codes == [0, 0] and not differing and files
    acceptance(12, bool(ok), f"{len(files)} report files, {len(differing)} differ, exit codes {codes}")
    assert ok
