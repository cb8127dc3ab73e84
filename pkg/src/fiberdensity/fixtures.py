"""Seeded generators for fibered systems and modules.

All randomness comes from an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

import numpy as np

from .functions import BaseAlgebra, PullbackModule, SampledFunction
from .spaces import FiberedMap, FiberedSystem, FiniteSpace, WeightedMeasure


def random_system(rng: np.random.Generator, max_x: int = 40, max_y: int = 10,
                  min_y: int = 1, surjective: bool = True, with_infinity: bool = False,
                  zero_weight_fraction: float = 0.0) -> FiberedSystem:
    ny = int(rng.integers(min_y, max_y + 1))
    nx = int(rng.integers(ny, max(ny, max_x) + 1))
    ys = [f"y{j}" for j in range(ny)]
    xs = [f"x{i}" for i in range(nx)]
    if surjective:
        assign = list(range(ny)) + list(rng.integers(0, ny, nx - ny))
        assign = [int(a) for a in rng.permutation(assign)]
    else:
        assign = [int(a) for a in rng.integers(0, ny, nx)]
    mapping = {x: ys[a] for x, a in zip(xs, assign)}
    weights = rng.uniform(0.05, 1.0, nx)
    if zero_weight_fraction:
        weights[rng.random(nx) < zero_weight_fraction] = 0.0
    x_inf = y_inf = None
    if with_infinity:
        xs.append("x_inf")
        ys.append("y_inf")
        mapping["x_inf"] = "y_inf"
        weights = np.append(weights, 0.0)
        x_inf, y_inf = "x_inf", "y_inf"
    X = FiniteSpace(tuple(xs), x_inf)
    Y = FiniteSpace(tuple(ys), y_inf)
    return FiberedSystem(FiberedMap(X, Y, mapping), WeightedMeasure(X, weights))


def random_real_function(rng, space: FiniteSpace, scale: float = 1.0) -> SampledFunction:
    v = rng.normal(scale=scale, size=len(space)).astype(complex)
    if space.infinity_index is not None:
        v[space.infinity_index] = 0
    return SampledFunction(space, v)


def random_complex_function(rng, space: FiniteSpace, scale: float = 1.0) -> SampledFunction:
    v = rng.normal(scale=scale, size=len(space)) + 1j * rng.normal(scale=scale, size=len(space))
    if space.infinity_index is not None:
        v[space.infinity_index] = 0
    return SampledFunction(space, v)


def dense_module(rng, system: FiberedSystem, max_dim: int = 12, complex_pairs: bool = False,
                 n_generators: int | None = None) -> PullbackModule:
    """A module satisfying the localization hypotheses.

    The algebra is generated by base point indicators (dense on a finite
    base).  Module generators are random; with ``complex_pairs`` each complex
    generator comes with its conjugate so the module is conjugation-stable.
    """
    ny = len(system.target.finite_points)
    algebra = BaseAlgebra.all_functions(system.target)
    per_gen = max(1, ny)
    cap = max(1, max_dim // per_gen)
    if n_generators is None:
        n_generators = int(rng.integers(1, cap + 1))
    gens = []
    X = system.source
    while len(gens) < n_generators:
        if complex_pairs and len(gens) + 2 <= n_generators:
            g = random_complex_function(rng, X)
            gens.extend([g, g.conj()])
        else:
            gens.append(random_real_function(rng, X))
    return PullbackModule(system, algebra, tuple(gens), closure_degree=1)


def broken_module(rng, system: FiberedSystem, kind: str, max_dim: int = 12) -> PullbackModule:
    """Modules that deliberately violate one localization hypothesis.

    kinds: ``"constants"`` (algebra = constants, not dense), ``"nonconjugate"``
    (a complex generator without its conjugate), ``"truncated"`` (algebra
    generated by one function at too low a degree).
    """
    X, Y = system.source, system.target
    ngen = int(rng.integers(1, 4))
    if kind == "constants":
        alg = BaseAlgebra.constants(Y)
        gens = tuple(random_real_function(rng, X) for _ in range(ngen))
        return PullbackModule(system, alg, gens, closure_degree=1)
    if kind == "nonconjugate":
        alg = BaseAlgebra.all_functions(Y)
        gens = (random_complex_function(rng, X),)
        return PullbackModule(system, alg, gens, closure_degree=1)
    if kind == "truncated":
        vals = rng.uniform(-1, 1, len(Y))
        if Y.infinity_index is not None:
            vals[Y.infinity_index] = 0
        alg = BaseAlgebra(Y, (SampledFunction(Y, vals),), closure_degree=1)
        gens = tuple(random_real_function(rng, X) for _ in range(ngen))
        return PullbackModule(system, alg, gens, closure_degree=1)
    raise ValueError(f"unknown broken-module kind {kind!r}")


def full_module(system: FiberedSystem) -> PullbackModule:
    """The module of all functions on the source (fiber-separating, dense algebra)."""
    X = system.source
    gens = tuple(SampledFunction.indicator(X, [x]) for x in X.finite_points)
    return PullbackModule(system, BaseAlgebra.all_functions(system.target), gens, closure_degree=1)


def pullback_only_module(system: FiberedSystem) -> PullbackModule:
    X = system.source
    return PullbackModule(system, BaseAlgebra.all_functions(system.target),
                          (SampledFunction.constant(X),), closure_degree=1)


def bad_set_fixture(rng, n: int = 2, eps: float = 0.5, grid: int = 16, c_G: float = 3.0):
    """A bad-set estimate fixture built from an actual dyadic box cover.

    The base is the grid ``((j + 1/2)/grid)`` in ``[0, 1]^n``; ``C`` is a random
    box, the cover comes from :func:`boxcover.build_cover`, ``W'_i`` is the
    closed region widened by one grid step (inside ``V_i``), and ``eps1``,
    ``eps2``, ``eps3`` are chosen small enough, given ``N`` and ``M = c_G``,
    for each majorant to contribute at most ``eps/8``.
    """
    from fractions import Fraction

    from .boxcover import CompactRegion, NeighborhoodFamily, TorusQuotient, build_cover
    from .density import BadSetEstimateFixture

    space = TorusQuotient(n, 0)
    step = Fraction(1, grid)
    cells = list(np.ndindex(*([grid] * n)))
    coords = [tuple((Fraction(2 * j + 1, 2 * grid)) for j in c) for c in cells]
    lo = [Fraction(int(rng.integers(grid // 4, grid // 2)), grid) for _ in range(n)]
    hi = [l + Fraction(int(rng.integers(1, grid // 4 + 1)), grid) for l in lo]
    K = CompactRegion(space, (tuple(zip(lo, hi)),))
    r = Fraction(int(rng.integers(8, 16)), 100)
    cover = build_cover(space, K, NeighborhoodFamily.constant(r))
    N = len(cover.boxes)
    Y = FiniteSpace(tuple("y" + "_".join(map(str, c)) for c in cells))

    def in_closed(b, y, pad=Fraction(0)):
        return all(l - pad <= t <= h + pad for (l, h), t in zip(b.intervals(), y))

    def in_open(b, y, pad):
        return all(l - pad < t < h + pad for (l, h), t in zip(b.intervals(), y))

    def in_ball(x, y):
        return max(abs(a - t) for a, t in zip(x, y)) < r

    W_bar = np.array([[in_closed(b, y) for y in coords] for b in cover.boxes])
    V = np.array([[in_ball(cover.subordination[i], y) for y in coords] for i in range(N)])
    W_prime = np.array([[in_open(b, y, step) for y in coords] for b in cover.boxes]) & V | W_bar
    C = np.array([K.contains(y) for y in coords])
    C1 = V.any(axis=0)
    ann_y = (W_prime & ~W_bar).any(axis=0)

    # source: one or two points per base point; bad points carry no mass
    xs, mapping, good = [], {}, []
    for j, c in enumerate(cells):
        for s in range(1 + int(rng.random() < 0.5)):
            name = f"x{j}_{s}"
            xs.append(name)
            mapping[name] = Y.points[j]
            good.append(not (C[j] and rng.random() < 0.2))
    # make sure the bad set over C is nonempty
    cj = int(np.nonzero(C)[0][0])
    name = f"x{cj}_bad"
    xs.append(name)
    mapping[name] = Y.points[cj]
    good.append(False)
    good = np.array(good)
    X = FiniteSpace(tuple(xs))
    idx = np.array([Y.index(mapping[x]) for x in xs])
    M = float(c_G)
    weights = rng.uniform(0.5, 1.0, len(xs)) / len(xs)
    weights[~good] = 0.0
    n_ann = int(ann_y[idx].sum())
    eps3 = eps / (8 * M * N * (1.0 + 1.0 + 1.0))       # mu(X) <= 1, mu(h2) <= 1
    if n_ann:
        weights[ann_y[idx] & good] = eps / (16 * (1 + eps3) * M * N * n_ann)
    mu_C1_good = float(weights[C1[idx] & good].sum())
    eps1 = eps / (8 * (1 + eps3) * 2 ** n * max(mu_C1_good, 1e-300))
    eps1 = min(eps1, 0.5)
    eps2 = float(weights[ann_y[idx]].sum())
    system = FiberedSystem(FiberedMap(X, Y, mapping), WeightedMeasure(X, weights))

    hat_h = np.empty((N, len(xs)))
    for i in range(N):
        inV = V[i][idx]
        hat_h[i] = np.where(inV & good, rng.uniform(0, eps1, len(xs)),
                            np.where(inV, rng.uniform(1, c_G, len(xs)), rng.uniform(-0.5, 0.5, len(xs))))
    a = np.where(W_bar, rng.uniform(1, 1 + eps3, W_bar.shape),
                 np.where(W_prime, rng.uniform(0, 1 + eps3, W_bar.shape), rng.uniform(0, eps3, W_bar.shape)))
    h2 = np.where(C1[idx], 1.0, 0.5)
    return BadSetEstimateFixture(system, good, hat_h, a, W_bar, W_prime, V, C, C1,
                                 np.ones(len(cells), dtype=bool), h2, c_G, float(2 ** n),
                                 eps1, eps2, eps3, M, eps)


TAMPER_KINDS = ("good", "bad", "annulus", "elsewhere", "mass")


def tamper_bad_set(fx, kind: str):
    """A copy of ``fx`` violating exactly the estimate named ``kind``."""
    import copy

    g = copy.deepcopy(fx)
    idx = g.system.map.image_index
    cov = g.W_bar[:, idx]
    if kind == "mass":
        g.eps = 1e-9
        return g
    if kind in ("good", "bad"):
        want = g.good if kind == "good" else ~g.good
        i, x = map(int, np.argwhere(cov & want)[0])
        cap = g.eps1 if kind == "good" else g.c_G
        g.hat_h[i, x] = 2 * (1 + g.eps3) * cap * g.c_prime_G + 1
        return g
    if kind == "annulus":
        ann = g.W_prime[:, idx] & ~cov
        i, x = map(int, np.argwhere(ann)[0])
        g.a[i, idx[x]] = 2 * (1 + g.eps3) * g.N + 2
        g.hat_h[i, x] = g.M
        return g
    if kind == "elsewhere":
        far = ~g.W_prime[:, idx]
        i, x = map(int, np.argwhere(far)[0])
        g.a[i, idx[x]] = 1.0
        g.hat_h[i, x] = 0.5
        return g
    raise ValueError(f"unknown tamper kind {kind!r}")


def random_region(rng, n: int | None = None, m: int | None = None):
    """A seeded compact region on ``R^n / Z^m`` with a constant neighborhood family.

    One to three boxes (or a small point cloud) with rational corners; the
    radius shrinks with the dimension to keep covers desk-sized.
    """
    from fractions import Fraction

    from .boxcover import CompactRegion, NeighborhoodFamily, TorusQuotient

    n = int(rng.integers(1, 4)) if n is None else n
    m = int(rng.integers(0, n + 1)) if m is None else m
    space = TorusQuotient(n, m)
    den = 64
    if rng.random() < 0.25:
        pts = [tuple(Fraction(int(rng.integers(0, den)), den) for _ in range(n))
               for _ in range(int(rng.integers(1, 5)))]
        K = CompactRegion.from_points(space, pts, Fraction(int(rng.integers(0, 4)), den))
    else:
        boxes = []
        for _ in range(int(rng.integers(1, 4))):
            lo = [Fraction(int(rng.integers(0, den)), den) for _ in range(n)]
            boxes.append(tuple((l, l + Fraction(int(rng.integers(0, den // (2 * n))), den)) for l in lo))
        K = CompactRegion(space, tuple(boxes))
    lo_r = {1: 8, 2: 12, 3: 18}[n]
    r = Fraction(int(rng.integers(lo_r, 27)), 64)
    return space, K, NeighborhoodFamily.constant(r)
