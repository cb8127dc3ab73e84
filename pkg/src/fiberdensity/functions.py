"""Sampled functions, base algebras and pullback modules on finite spaces.

Infinite-dimensional algebras and modules are truncated by a closure degree:
the algebra is the span of monomials in its generators (conjugates included)
up to ``closure_degree``, and the module is the span of products
``pullback(monomial) * generator`` for monomials of degree at most the
module's own degree.  Candidates are enumerated degree by degree, then by
module generator, then lexicographically in algebra-generator index; modified
Gram-Schmidt runs in that order so materialized bases are reproducible and
every basis vector only mixes candidates of degree at most its own.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError
from .spaces import FiberedMap, FiberedSystem, FiniteSpace, WeightedMeasure

log = logging.getLogger(__name__)

RANK_CUTOFF = 1e-10
SPAN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SampledFunction:
    space: FiniteSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).copy()
        if v.shape != (len(self.space),):
            raise ConfigurationError(
                f"expected {len(self.space)} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("function values must be finite")
        inf = self.space.infinity_index
        if inf is not None and v[inf] != 0:
            raise ConfigurationError(
                f"function must vanish at the infinity point {self.space.infinity_point!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    # -- constructors --------------------------------------------------
    @classmethod
    def from_mapping(cls, space: FiniteSpace, values: Mapping) -> "SampledFunction":
        return cls(space, np.array([complex(values.get(p, 0.0)) for p in space.points]))

    @classmethod
    def constant(cls, space: FiniteSpace, value: complex = 1.0) -> "SampledFunction":
        v = np.full(len(space), complex(value))
        if space.infinity_index is not None:
            v[space.infinity_index] = 0.0
        return cls(space, v)

    @classmethod
    def indicator(cls, space: FiniteSpace, points) -> "SampledFunction":
        v = np.zeros(len(space), dtype=complex)
        v[space.indices(points)] = 1.0
        return cls(space, v)

    @classmethod
    def zero(cls, space: FiniteSpace) -> "SampledFunction":
        return cls(space, np.zeros(len(space), dtype=complex))

    # -- pointwise algebra ---------------------------------------------
    def _check(self, other: "SampledFunction"):
        if other.space != self.space:
            raise ConfigurationError("functions live on different spaces")

    def __add__(self, other):
        if isinstance(other, SampledFunction):
            self._check(other)
            return SampledFunction(self.space, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SampledFunction):
            self._check(other)
            return SampledFunction(self.space, self.values - other.values)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, SampledFunction):
            self._check(other)
            return SampledFunction(self.space, self.values * other.values)
        if np.isscalar(other):
            return SampledFunction(self.space, self.values * other)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return SampledFunction(self.space, -self.values)

    def conj(self) -> "SampledFunction":
        return SampledFunction(self.space, np.conj(self.values))

    def abs(self) -> "SampledFunction":
        return SampledFunction(self.space, np.abs(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def is_real(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.values.imag) <= tol))

    def __call__(self, point) -> complex:
        return complex(self.values[self.space.index(point)])

    def support(self) -> tuple:
        return tuple(p for p, v in zip(self.space.points, self.values) if v != 0)

    # -- serialization -------------------------------------------------
    def to_json(self, space_ref: str) -> dict:
        return {"space": space_ref,
                "values": {str(p): [float(v.real), float(v.imag)]
                           for p, v in zip(self.space.points, self.values)}}

    @classmethod
    def from_json(cls, doc: Mapping, spaces: Mapping[str, FiniteSpace]) -> "SampledFunction":
        try:
            space = spaces[doc["space"]]
            raw = doc["values"]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed function document: {exc}") from None
        by_str = {str(p): p for p in space.points}
        vals = {}
        for key, v in raw.items():
            if key not in by_str:
                raise ConfigurationError(f"unknown point id {key!r}")
            vals[by_str[key]] = complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)
        return cls.from_mapping(space, vals)


@dataclass(frozen=True)
class NormReport:
    sup_norm: float
    l1_norm: float


def pullback(fmap: FiberedMap, f: SampledFunction) -> SampledFunction:
    if f.space != fmap.target:
        raise ConfigurationError("function does not live on the target of the map")
    return SampledFunction(fmap.source, f.values[fmap.image_index])


def sup_norm(f: SampledFunction) -> float:
    if len(f.values) == 0:
        return 0.0
    return float(np.max(np.abs(f.values)))


def integrate(f: SampledFunction, mu: WeightedMeasure) -> complex:
    if f.space != mu.space:
        raise ConfigurationError("function and measure live on different spaces")
    return complex(np.dot(f.values, mu.weights))


def norms(f: SampledFunction, mu: WeightedMeasure) -> NormReport:
    return NormReport(sup_norm(f), float(integrate(f.abs(), mu).real))


def restrict_to_fiber(f: SampledFunction, fiber: Sequence) -> SampledFunction:
    idx = f.space.indices(fiber)
    sub = f.space.subspace(list(fiber))
    return SampledFunction(sub, f.values[idx])


# ----------------------------------------------------------------------
# linear algebra helpers


def monomials(n_generators: int, max_degree: int, min_degree: int = 0) -> list[tuple]:
    """Exponent multisets, degree by degree, lexicographic within a degree."""
    out = []
    for d in range(min_degree, max_degree + 1):
        out.extend(itertools.combinations_with_replacement(range(n_generators), d))
    return out


def _evaluate_monomial(gens: np.ndarray, mono: tuple, npoints: int) -> np.ndarray:
    v = np.ones(npoints, dtype=complex)
    for g in mono:
        v = v * gens[g]
    return v


def orthonormalize(vectors: np.ndarray, cutoff: float = RANK_CUTOFF) -> tuple[np.ndarray, list[int]]:
    """Modified Gram-Schmidt (two passes) over the columns of ``vectors``.

    Returns the orthonormal columns and the indices of the accepted inputs.
    A column is accepted when its residual exceeds ``cutoff`` times the
    largest singular value of the whole set.
    """
    V = np.asarray(vectors, dtype=complex)
    if V.ndim != 2 or V.shape[1] == 0:
        return np.zeros((V.shape[0] if V.ndim == 2 else 0, 0), dtype=complex), []
    smax = np.linalg.norm(V, 2)
    if smax == 0:
        return np.zeros((V.shape[0], 0), dtype=complex), []
    tol = cutoff * smax
    Q: list[np.ndarray] = []
    kept: list[int] = []
    for j in range(V.shape[1]):
        v = V[:, j].copy()
        for _ in range(2):
            for q in Q:
                v -= np.vdot(q, v) * q
        nv = np.linalg.norm(v)
        if nv > tol:
            Q.append(v / nv)
            kept.append(j)
    if not Q:
        return np.zeros((V.shape[0], 0), dtype=complex), []
    return np.column_stack(Q), kept


def span_residual(Q: np.ndarray, v: np.ndarray) -> float:
    """Norm of the component of ``v`` orthogonal to the orthonormal columns ``Q``."""
    v = np.asarray(v, dtype=complex)
    if Q.shape[1] == 0:
        return float(np.linalg.norm(v))
    r = v - Q @ (Q.conj().T @ v)
    r = r - Q @ (Q.conj().T @ r)
    return float(np.linalg.norm(r))


def real_orthonormal(Q: np.ndarray, cutoff: float = RANK_CUTOFF) -> np.ndarray:
    """Orthonormal real basis of the real-valued functions spanned by Re/Im parts."""
    cols = []
    for j in range(Q.shape[1]):
        cols.append(Q[:, j].real)
        cols.append(Q[:, j].imag)
    if not cols:
        return np.zeros((Q.shape[0], 0))
    R, _ = orthonormalize(np.column_stack(cols).astype(complex), cutoff)
    return R.real.copy()


# ----------------------------------------------------------------------
# algebras and modules


@dataclass(frozen=True, eq=False)
class BaseAlgebra:
    space: FiniteSpace
    generators: tuple
    closure_degree: int = 3
    span: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple(self.generators)
        for g in gens:
            if g.space != self.space:
                raise ConfigurationError("algebra generator lives on another space")
        if self.closure_degree < 1:
            raise ConfigurationError("closure degree must be positive")
        # conjugates are included by construction
        full = list(gens)
        for g in gens:
            if not g.is_real():
                c = g.conj()
                if not any(np.array_equal(c.values, h.values) for h in full):
                    full.append(c)
        object.__setattr__(self, "generators", tuple(full))
        n = len(self.space)
        G = np.array([g.values for g in full]) if full else np.zeros((0, n), dtype=complex)
        min_deg = 1 if self.space.infinity_point is not None else 0
        cols = [_evaluate_monomial(G, m, n) for m in monomials(len(full), self.closure_degree, min_deg)]
        Q, _ = orthonormalize(np.column_stack(cols) if cols else np.zeros((n, 0)))
        object.__setattr__(self, "span", Q)

    @classmethod
    def all_functions(cls, space: FiniteSpace) -> "BaseAlgebra":
        """Indicators of the finite points generate every function on ``space``."""
        gens = [SampledFunction.indicator(space, [p]) for p in space.finite_points]
        return cls(space, tuple(gens), closure_degree=1)

    @classmethod
    def constants(cls, space: FiniteSpace) -> "BaseAlgebra":
        return cls(space, (SampledFunction.constant(space),), closure_degree=1)

    @property
    def generator_matrix(self) -> np.ndarray:
        n = len(self.space)
        if not self.generators:
            return np.zeros((0, n), dtype=complex)
        return np.array([g.values for g in self.generators])

    def monomial_values(self, max_degree: int, min_degree: int = 0) -> list[tuple[tuple, np.ndarray]]:
        G = self.generator_matrix
        n = len(self.space)
        return [(m, _evaluate_monomial(G, m, n))
                for m in monomials(len(self.generators), max_degree, min_degree)]

    @property
    def dimension(self) -> int:
        return self.span.shape[1]

    def to_json(self, space_ref: str = "Y") -> list:
        return [g.to_json(space_ref) for g in self.generators]


@dataclass(frozen=True, eq=False)
class PullbackModule:
    system: FiberedSystem
    algebra: BaseAlgebra
    module_generators: tuple
    closure_degree: int = 2
    basis: tuple = field(init=False, repr=False)
    # degree of the algebra monomial that contributed each basis element
    basis_degrees: tuple = field(init=False, repr=False)
    _Q: np.ndarray = field(init=False, repr=False)
    _R: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple(self.module_generators)
        object.__setattr__(self, "module_generators", gens)
        if self.algebra.space != self.system.target:
            raise ConfigurationError("algebra must live on the target space")
        for g in gens:
            if g.space != self.system.source:
                raise ConfigurationError("module generator must live on the source space")
        if self.closure_degree < 1:
            raise ConfigurationError("closure degree must be positive")
        Q, degrees = _materialize(self)
        object.__setattr__(self, "_Q", Q)
        object.__setattr__(self, "basis_degrees", tuple(degrees))
        object.__setattr__(self, "basis", tuple(
            SampledFunction(self.system.source, Q[:, j]) for j in range(Q.shape[1])))
        object.__setattr__(self, "_R", real_orthonormal(Q))

    @property
    def source(self) -> FiniteSpace:
        return self.system.source

    @property
    def target(self) -> FiniteSpace:
        return self.system.target

    @property
    def measure(self) -> WeightedMeasure:
        return self.system.measure_upstairs

    @property
    def dimension(self) -> int:
        return self._Q.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        """Orthonormal basis as columns (points x dimension)."""
        return self._Q

    @property
    def real_matrix(self) -> np.ndarray:
        """Orthonormal real basis of the real-valued elements spanned by Re and Im parts.

        Equals the real-valued part of the module exactly when the module is
        stable under conjugation.
        """
        return self._R

    def residual(self, f: SampledFunction | np.ndarray) -> float:
        v = f.values if isinstance(f, SampledFunction) else f
        return span_residual(self._Q, v)

    def contains(self, f: SampledFunction | np.ndarray, tol: float = SPAN_TOL) -> bool:
        v = f.values if isinstance(f, SampledFunction) else np.asarray(f)
        return self.residual(v) <= tol * max(1.0, float(np.linalg.norm(v)))

    def element(self, coefficients) -> SampledFunction:
        return SampledFunction(self.source, self._Q @ np.asarray(coefficients, dtype=complex))

    def real_element(self, coefficients) -> SampledFunction:
        return SampledFunction(self.source, self._R @ np.asarray(coefficients, dtype=float))

    def to_json(self) -> dict:
        return {"algebra_generators": self.algebra.to_json("Y"),
                "module_generators": [g.to_json("X") for g in self.module_generators],
                "degree_A": self.algebra.closure_degree,
                "degree_M": self.closure_degree}

    @classmethod
    def from_json(cls, doc: Mapping, system: FiberedSystem) -> "PullbackModule":
        spaces = {"X": system.source, "Y": system.target}
        try:
            alg = BaseAlgebra(system.target,
                              tuple(SampledFunction.from_json(g, spaces) for g in doc["algebra_generators"]),
                              int(doc.get("degree_A", 3)))
            gens = tuple(SampledFunction.from_json(g, spaces) for g in doc["module_generators"])
            return cls(system, alg, gens, int(doc.get("degree_M", 2)))
        except KeyError as exc:
            raise ConfigurationError(f"malformed module descriptor: missing {exc}") from None


def _materialize(module: PullbackModule) -> tuple[np.ndarray, list[int]]:
    src = module.system.source
    n = len(src)
    if not module.module_generators:
        raise ConfigurationError("module needs at least one generator")
    idx = module.system.map.image_index
    cols, degrees = [], []
    monos = module.algebra.monomial_values(module.closure_degree)
    # degree-major: every basis vector mixes only candidates of degree <= its own
    for d in range(module.closure_degree + 1):
        for g in module.module_generators:
            for mono, vals in monos:
                if len(mono) == d:
                    cols.append(vals[idx] * g.values)
                    degrees.append(d)
    Q, kept = orthonormalize(np.column_stack(cols) if cols else np.zeros((n, 0)))
    if not kept:
        log.warning("all module generators vanish; materialized basis is empty")
    return Q, [degrees[k] for k in kept]


def materialize_basis(module: PullbackModule) -> list[SampledFunction]:
    return list(module.basis)


@dataclass(frozen=True)
class ConjugationReport:
    closed: bool
    worst_residual: float


def conjugate_closure_check(module: PullbackModule, tol: float = SPAN_TOL) -> ConjugationReport:
    worst = 0.0
    for b in module.basis:
        worst = max(worst, module.residual(np.conj(b.values)))
    return ConjugationReport(worst <= tol, worst)


def module_stability_residual(module: PullbackModule) -> float:
    """Worst relative residual of (p* a) b outside the span, over generators a and
    basis elements b of internal degree below the module's closure degree."""
    idx = module.system.map.image_index
    worst = 0.0
    for a in module.algebra.generators:
        pa = a.values[idx]
        for b, d in zip(module.basis, module.basis_degrees):
            if d >= module.closure_degree:
                continue
            prod = pa * b.values
            nrm = np.linalg.norm(prod)
            if nrm > 0:
                worst = max(worst, module.residual(prod) / nrm)
    return worst
