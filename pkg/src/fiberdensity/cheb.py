"""Best sup-norm approximation and envelope feasibility as small linear programs.

Real data gives an exact LP.  Complex moduli are outer-approximated by 16
half-planes per point; the relaxed solve is then refined with cuts aligned to
the current error phases until the certified gap (true error minus LP lower
bound) is within ``GAP_TOL`` relative.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, PreconditionViolation
from .functions import SampledFunction, orthonormalize, real_orthonormal
from .simplex import linprog, linprog_ineq
from .spaces import WeightedMeasure

FACETS = 16
GAP_TOL = 1e-9   # well inside the 1e-7 contract, so upper bounds compare cleanly
ACTIVE_TOL = 1e-9
STRICT_SLACK = 1e-9
MAX_REFINEMENTS = 80


@dataclass
class ChebSolution:
    coefficients: np.ndarray
    distance: float
    active_points: list
    lower_bound: float = 0.0
    refinements: int = 0

    def to_json(self) -> dict:
        return {"coefficients": [[float(c.real), float(c.imag)] for c in self.coefficients],
                "distance": self.distance,
                "lower_bound": self.lower_bound,
                "active_points": [str(p) for p in self.active_points]}


@dataclass
class FeasibilityCertificate:
    status: str                     # "feasible" | "infeasible"
    eps: float
    witness: np.ndarray | None = None          # real coefficients over the real span
    witness_function: SampledFunction | None = None
    achieved_mass: float | None = None
    min_mass: float | None = None              # LP optimum (inf if no dominator exists)
    lower_bound: float | None = None           # dual certificate for min_mass
    separating_point: object = None            # set when no dominator exists at all
    extra: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"

    def to_json(self) -> dict:
        return {"status": self.status, "eps": self.eps,
                "achieved_mass": self.achieved_mass, "min_mass": self.min_mass,
                "lower_bound": self.lower_bound,
                "separating_point": None if self.separating_point is None else str(self.separating_point)}


def _as_matrix(basis, space, points_idx) -> np.ndarray:
    if isinstance(basis, np.ndarray):
        M = np.asarray(basis, dtype=complex)
        return M[points_idx] if M.ndim == 2 else np.zeros((len(points_idx), 0), dtype=complex)
    cols = []
    for b in basis:
        if b.space != space:
            raise ConfigurationError("basis element lives on another space")
        cols.append(b.values[points_idx])
    if not cols:
        return np.zeros((len(points_idx), 0), dtype=complex)
    return np.column_stack(cols)


def _independent_columns(B: np.ndarray) -> list[int]:
    if B.shape[1] == 0:
        return []
    _, kept = orthonormalize(B)
    return kept


def _solve_real(fv: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, float]:
    k, d = B.shape
    # variables: c (free), t >= 0
    A = np.zeros((2 * k, d + 1))
    A[:k, :d] = B
    A[k:, :d] = -B
    A[:, d] = -1.0
    b = np.concatenate([fv, -fv])
    cost = np.zeros(d + 1)
    cost[d] = 1.0
    free = np.ones(d + 1, dtype=bool)
    free[d] = False
    res = linprog_ineq(cost, A, b, free=free)
    if not res.success:
        raise RuntimeError(f"Chebyshev LP failed: {res.status}")
    return res.x[:d], float(res.x[d])


def _facet_rows(fv, B, thetas, rows_idx):
    Br, Bi = B.real, B.imag
    fr, fi = fv.real, fv.imag
    d = B.shape[1]
    rows, rhs = [], []
    for i, th in zip(rows_idx, thetas):
        c, s = np.cos(th), np.sin(th)
        row = np.zeros(2 * d + 1)
        row[:d] = -c * Br[i] - s * Bi[i]
        row[d:2 * d] = c * Bi[i] - s * Br[i]
        row[2 * d] = -1.0
        rows.append(row)
        rhs.append(-(c * fr[i] + s * fi[i]))
    return rows, rhs


def _solve_complex(fv: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, float, int]:
    k, d = B.shape
    base = np.arange(FACETS) * (2 * np.pi / FACETS)
    rows, rhs = _facet_rows(fv, B, np.tile(base, k), np.repeat(np.arange(k), FACETS))
    cost = np.zeros(2 * d + 1)
    cost[-1] = 1.0
    free = np.ones(2 * d + 1, dtype=bool)
    free[-1] = False
    refinements = 0
    while True:
        res = linprog_ineq(cost, np.array(rows), np.array(rhs), free=free)
        if not res.success:
            raise RuntimeError(f"Chebyshev LP failed: {res.status}")
        coef = res.x[:d] + 1j * res.x[d:2 * d]
        lower = float(res.x[-1])
        err = fv - B @ coef
        mods = np.abs(err)
        upper = float(mods.max()) if k else 0.0
        if upper - lower <= GAP_TOL * max(upper, 1e-300) or upper <= 1e-14 \
                or refinements >= MAX_REFINEMENTS:
            return coef, lower, refinements
        # cuts at the current error phases of the worst points
        hot = np.nonzero(mods > lower + 0.5 * (upper - lower))[0]
        new_rows, new_rhs = _facet_rows(fv, B, np.angle(err[hot]), hot)
        rows.extend(new_rows)
        rhs.extend(new_rhs)
        refinements += 1


def cheb_best_approx(f: SampledFunction, basis, points: Sequence | None = None) -> ChebSolution:
    """Minimize ``max_{x in points} |f(x) - sum_i c_i b_i(x)|`` over complex ``c``."""
    space = f.space
    pts = list(space.points) if points is None else list(points)
    if not pts:
        raise PreconditionViolation("points must be nonempty")
    idx = space.indices(pts)
    fv = f.values[idx]
    B = _as_matrix(basis, space, idx)
    d = B.shape[1]
    coef = np.zeros(d, dtype=complex)
    lower = 0.0
    refinements = 0
    keep = _independent_columns(B)
    if keep:
        Bk = B[:, keep]
        if np.all(fv.imag == 0) and np.all(Bk.imag == 0):
            ck, lower = _solve_real(fv.real, Bk.real)
            ck = ck.astype(complex)
        else:
            ck, lower, refinements = _solve_complex(fv, Bk)
        coef[keep] = ck
    err = np.abs(fv - B @ coef) if d else np.abs(fv)
    dist = float(err.max())
    lower = min(lower, dist) if keep else dist
    active = [p for p, e in zip(pts, err) if e >= dist - ACTIVE_TOL]
    return ChebSolution(coef, dist, active, lower, refinements)


def brute_force_cheb_oracle(f: SampledFunction, basis, points: Sequence | None,
                            grid_radius: float, grid_steps: int) -> ChebSolution:
    """Exhaustive coefficient-grid search; an independent check on the LP.

    Real data searches real coefficients; complex data searches real and
    imaginary parts.  At most three real parameters.
    """
    space = f.space
    pts = list(space.points) if points is None else list(points)
    idx = space.indices(pts)
    fv = f.values[idx]
    B = _as_matrix(basis, space, idx)
    d = B.shape[1]
    real = bool(np.all(fv.imag == 0) and np.all(B.imag == 0))
    nparams = d if real else 2 * d
    if nparams > 3:
        raise PreconditionViolation(f"oracle refuses {nparams} real parameters (max 3)")
    if grid_steps > 201 or grid_steps < 2:
        raise PreconditionViolation("grid_steps must lie in [2, 201]")
    if d == 0:
        err = np.abs(fv)
        dist = float(err.max())
        return ChebSolution(np.zeros(0, dtype=complex), dist,
                            [p for p, e in zip(pts, err) if e >= dist - ACTIVE_TOL], dist)
    axis = np.linspace(-grid_radius, grid_radius, grid_steps)
    grids = np.array(list(itertools.product(axis, repeat=nparams)))
    if real:
        C = grids.astype(complex)
    else:
        C = grids[:, :d] + 1j * grids[:, d:]
    best_val, best_c = np.inf, None
    for start in range(0, len(C), 20000):
        chunk = C[start:start + 20000]
        errs = np.abs(fv[None, :] - chunk @ B.T).max(axis=1)
        j = int(np.argmin(errs))
        if errs[j] < best_val:
            best_val, best_c = float(errs[j]), chunk[j]
    err = np.abs(fv - B @ best_c)
    return ChebSolution(best_c, best_val,
                        [p for p, e in zip(pts, err) if e >= best_val - ACTIVE_TOL], best_val)


def grid_resolution(basis, space, points, grid_radius: float, grid_steps: int) -> float:
    """Distance-units resolution of the oracle grid.

    Moving each coefficient by half a grid step changes the error by at most
    ``h/2 * max_x sum_i |b_i(x)|`` (twice that with complex coefficients).
    """
    idx = space.indices(list(space.points) if points is None else list(points))
    B = _as_matrix(basis, space, idx)
    h = 2 * grid_radius / (grid_steps - 1)
    lip = float(np.abs(B).sum(axis=1).max()) if B.size else 0.0
    factor = 1.0 if np.all(B.imag == 0) else np.sqrt(2.0)
    return 0.5 * h * lip * factor


def real_span(basis) -> np.ndarray:
    """Real orthonormal basis (columns) of the real parts and imaginary parts of ``basis``."""
    if isinstance(basis, np.ndarray):
        return real_orthonormal(np.asarray(basis, dtype=complex))
    if hasattr(basis, "real_matrix"):
        return basis.real_matrix
    if not basis:
        raise PreconditionViolation("empty basis")
    return real_orthonormal(np.column_stack([b.values for b in basis]))


def min_mass_dominator(target: np.ndarray, R: np.ndarray, weights: np.ndarray):
    """LP: minimize ``weights @ (R c)`` subject to ``R c >= target`` pointwise.

    Returns the simplex result; the caller interprets infeasibility.
    """
    cost = weights @ R
    return linprog_ineq(cost, -R, -np.asarray(target, dtype=float), free=np.ones(R.shape[1], dtype=bool))


def envelope_feasible(h: SampledFunction, module_basis, mu: WeightedMeasure,
                      eps: float) -> FeasibilityCertificate:
    """Is there a real module element m with ``|h| <= m`` and ``mu(m) < eps``?"""
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    if h.space != mu.space:
        raise ConfigurationError("function and measure live on different spaces")
    target = np.abs(h.values)
    if not np.any(target):
        return FeasibilityCertificate("feasible", eps, witness=np.zeros(0),
                                      witness_function=SampledFunction.zero(h.space),
                                      achieved_mass=0.0, min_mass=0.0, lower_bound=0.0)
    R = real_span(module_basis)
    if R.shape[1] == 0:
        pt = h.space.points[int(np.argmax(target))]
        return FeasibilityCertificate("infeasible", eps, min_mass=np.inf, lower_bound=np.inf,
                                      separating_point=pt)
    res = min_mass_dominator(target, R, mu.weights)
    if res.status == "infeasible":
        # Farkas ray: nonnegative multipliers on points whose weighted sum of
        # basis values vanishes while the weighted target is positive
        ray = -res.farkas_ub
        pt = h.space.points[int(np.argmax(ray * target))]
        return FeasibilityCertificate("infeasible", eps, min_mass=np.inf, lower_bound=np.inf,
                                      separating_point=pt, extra={"farkas": ray.tolist()})
    if res.status != "optimal":
        raise RuntimeError(f"envelope LP returned {res.status}")
    m = R @ res.x
    mass = float(mu.weights @ m)
    lower = float(-target @ res.y_ub)
    if mass <= eps - STRICT_SLACK and np.all(target <= m + 1e-9):
        return FeasibilityCertificate("feasible", eps, res.x, SampledFunction(h.space, m),
                                      mass, mass, lower)
    return FeasibilityCertificate("infeasible", eps, min_mass=mass, lower_bound=lower)
