"""Pick a vector in span(S) on which no functional of a finite family vanishes.

``v(t) = sum_i t^i s_i``: each ``lambda(v(t))`` is a polynomial in ``t`` of
degree below ``|S|``, nonzero when ``lambda`` does not kill all of ``S``, so
among ``|S| |T| + 1`` consecutive integers some ``t`` avoids every root.
Arithmetic is exact (``Fraction``); floats enter as their exact binary value.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, PreconditionViolation

MARGIN = 1e-12


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x)


@dataclass(frozen=True)
class AvoidanceInstance:
    dimension: int
    S: tuple
    T: tuple

    def __post_init__(self):
        S = tuple(tuple(_frac(c) for c in s) for s in self.S)
        T = tuple(tuple(_frac(c) for c in t) for t in self.T)
        if any(len(v) != self.dimension for v in S + T):
            raise ConfigurationError("vectors and covectors must share the dimension")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "T", T)

    @classmethod
    def from_json(cls, doc: dict) -> "AvoidanceInstance":
        S, T = doc["S"], doc["T"]
        dim = int(doc.get("dimension", len(S[0]) if S else len(T[0]) if T else 0))
        return cls(dim, tuple(S), tuple(T))

    def to_json(self) -> dict:
        return {"dimension": self.dimension, "S": [[str(c) for c in s] for s in self.S],
                "T": [[str(c) for c in t] for t in self.T]}


def _pair(lam: Sequence[Fraction], v: Sequence[Fraction]) -> Fraction:
    return sum((a * b for a, b in zip(lam, v)), Fraction(0))


def _norm(v) -> float:
    return math.sqrt(sum(float(c) ** 2 for c in v))


def passes_margin(lam, v) -> bool:
    val = abs(float(_pair(lam, v)))
    return _pair(lam, v) != 0 and val > MARGIN * _norm(lam) * _norm(v)


@dataclass
class AvoidanceResult:
    v: tuple                 # exact coordinates
    t: int

    @property
    def vector(self) -> np.ndarray:
        return np.array([float(c) for c in self.v])

    def to_json(self) -> dict:
        return {"t": self.t, "v": [str(c) for c in self.v]}


def check_precondition(inst: AvoidanceInstance) -> None:
    for k, lam in enumerate(inst.T):
        if all(_pair(lam, s) == 0 for s in inst.S):
            raise PreconditionViolation(f"functional #{k} {[str(c) for c in lam]} vanishes on all of S")


def find_regular_vector(inst: AvoidanceInstance) -> AvoidanceResult:
    check_precondition(inst)
    if not inst.S:
        raise PreconditionViolation("S is empty")
    bound = len(inst.S) * len(inst.T) + 1
    # beyond the guaranteed range only the float margin can fail; allow a few extra tries
    for t in range(1, 4 * bound + 1):
        v = [Fraction(0)] * inst.dimension
        for i, s in enumerate(inst.S):
            w = Fraction(t) ** i
            v = [a + w * b for a, b in zip(v, s)]
        if all(passes_margin(lam, v) for lam in inst.T):
            return AvoidanceResult(tuple(v), t)
    raise PreconditionViolation("no candidate met the numerical margin")


def brute_force_avoidance_oracle(inst: AvoidanceInstance, grid: Sequence[int] = range(-3, 4)):
    """Scan integer combinations of ``S`` with coefficients from ``grid``."""
    if len(inst.S) > 3:
        raise PreconditionViolation("oracle handles at most three vectors")
    for coeffs in itertools.product(grid, repeat=len(inst.S)):
        if not any(coeffs):
            continue
        v = [Fraction(0)] * inst.dimension
        for c, s in zip(coeffs, inst.S):
            v = [a + c * b for a, b in zip(v, s)]
        if any(v) and all(passes_margin(lam, v) for lam in inst.T):
            return tuple(v)
    return None


def random_instance(rng: np.random.Generator, max_dim: int = 6, max_s: int = 4, max_t: int = 6,
                    kill_probability: float = 0.0) -> AvoidanceInstance:
    """Small integer instances; with ``kill_probability`` one functional is made to vanish on S."""
    dim = int(rng.integers(1, max_dim + 1))
    ns = int(rng.integers(1, max_s + 1))
    nt = int(rng.integers(1, max_t + 1))
    S = [tuple(int(c) for c in rng.integers(-3, 4, dim)) for _ in range(ns)]
    T = [tuple(int(c) for c in rng.integers(-3, 4, dim)) for _ in range(nt)]
    if rng.random() < kill_probability:
        M = np.array(S, dtype=float)
        _, s, vt = np.linalg.svd(M)
        rank = int(np.sum(s > 1e-9))
        if rank < dim:
            # integer covector orthogonal to span(S), exactly
            null = _integer_null_vector(S, dim)
            if null is not None:
                T[0] = null
    else:
        # resample functionals that happen to kill all of S
        for k in range(nt):
            tries = 0
            while all(sum(a * b for a, b in zip(T[k], s)) == 0 for s in S) and tries < 50:
                T[k] = tuple(int(c) for c in rng.integers(-3, 4, dim))
                tries += 1
    return AvoidanceInstance(dim, tuple(S), tuple(T))


def _integer_null_vector(S, dim) -> tuple | None:
    """A nonzero integer vector orthogonal to every s in S (exact elimination)."""
    rows = [list(map(Fraction, s)) for s in S]
    pivots, r = [], 0
    for c in range(dim):
        p = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        piv = rows[r][c]
        rows[r] = [x / piv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(dim) if c not in pivots]
    if not free:
        return None
    fc = free[0]
    v = [Fraction(0)] * dim
    v[fc] = Fraction(1)
    for i, c in enumerate(pivots):
        v[c] = -rows[i][fc]
    den = math.lcm(*(x.denominator for x in v))
    return tuple(int(x * den) for x in v)
