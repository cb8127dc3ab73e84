"""Fiberwise localization of Chebyshev distance to a pullback module.

On finite spaces the neighborhoods of the covering argument shrink to single
target points, so the partition of unity is the family of point indicators
of the base and each indicator is replaced by its best approximation from the
base algebra.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .cheb import cheb_best_approx
from .errors import BudgetUnreachable, HypothesisViolation
from .functions import (PullbackModule, SampledFunction, conjugate_closure_check,
                        span_residual, sup_norm)

DENSITY_TOL = 1e-8
STABILITY_TOL = 1e-9
EASY_TOL = 1e-7
EQUALITY_TOL = 1e-6


@dataclass
class Preflight:
    density_defect: float
    conjugation_residual: float
    stability_residual: float
    # best algebra approximant of each base point indicator, with its sup error
    indicator_approximants: dict = field(repr=False, default_factory=dict)

    @property
    def dense(self) -> bool:
        return self.density_defect <= DENSITY_TOL

    @property
    def passed(self) -> bool:
        return (self.dense and self.conjugation_residual <= STABILITY_TOL
                and self.stability_residual <= STABILITY_TOL)

    def failures(self) -> list[str]:
        out = []
        if not self.dense:
            out.append(f"algebra not dense: indicator distance {self.density_defect:.3g}")
        if self.conjugation_residual > STABILITY_TOL:
            out.append(f"module not conjugation-stable: residual {self.conjugation_residual:.3g}")
        if self.stability_residual > STABILITY_TOL:
            out.append(f"module not stable under indicator approximants: residual "
                       f"{self.stability_residual:.3g}")
        return out

    def to_json(self) -> dict:
        return {"density_defect": self.density_defect,
                "conjugation_residual": self.conjugation_residual,
                "stability_residual": self.stability_residual,
                "passed": self.passed}


def preflight(module: PullbackModule) -> Preflight:
    """Desk-scale check of the localization hypotheses.

    Density: every base point indicator is within ``DENSITY_TOL`` of the
    algebra span.  Module property: multiplying any basis element by the
    pullback of an indicator approximant stays in the span.
    """
    Y = module.target
    A = module.algebra.span
    approx = {}
    defect = 0.0
    for y in Y.finite_points:
        ind = SampledFunction.indicator(Y, [y])
        sol = cheb_best_approx(ind, A)
        sigma = A @ sol.coefficients if A.shape[1] else np.zeros(len(Y), dtype=complex)
        approx[y] = (sigma, sol.distance)
        defect = max(defect, sol.distance)
    conj = conjugate_closure_check(module).worst_residual
    idx = module.system.map.image_index
    stab = 0.0
    Q = module.matrix
    for sigma, _ in approx.values():
        ps = sigma[idx]
        # columns of Q are unit vectors, so the product has norm <= sup|sigma|
        scale = max(float(np.abs(sigma).max()), 1e-300)
        for j in range(Q.shape[1]):
            stab = max(stab, span_residual(Q, ps * Q[:, j]) / scale)
    return Preflight(defect, conj, stab, approx)


@dataclass
class LocalizationReport:
    global_distance: float
    fiber_distances: dict
    sup_fiber_distance: float
    gap: float
    status: str                      # "ok" | "hypotheses-violated"
    preflight: Preflight
    fiber_sizes: dict = field(default_factory=dict)
    maximizing_fibers: list = field(default_factory=list)
    fiber_coefficients: dict = field(default_factory=dict, repr=False)
    global_coefficients: np.ndarray | None = field(default=None, repr=False)
    f_sup_norm: float = 0.0

    @property
    def flagged(self) -> bool:
        return self.status != "ok"

    def to_json(self) -> dict:
        return {"status": self.status,
                "global_distance": self.global_distance,
                "sup_fiber_distance": self.sup_fiber_distance,
                "gap": self.gap,
                "maximizing_fibers": [str(y) for y in self.maximizing_fibers],
                "fibers": [{"fiber_id": str(y), "fiber_size": self.fiber_sizes[y],
                            "fiber_distance": d} for y, d in self.fiber_distances.items()],
                "preflight": self.preflight.to_json()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["fiber_id", "fiber_size", "fiber_distance"])
        for y, d in self.fiber_distances.items():
            w.writerow([y, self.fiber_sizes[y], repr(d)])
        return buf.getvalue()


def _fibers(module: PullbackModule) -> dict:
    """Nonempty fibers over finite base points (the image of the map)."""
    Y = module.target
    out = {}
    for y, fib in module.system.fibers().items():
        if fib and y != Y.infinity_point:
            out[y] = fib
    return out


def localize_distance(f: SampledFunction, module: PullbackModule,
                      check: Preflight | None = None) -> LocalizationReport:
    pf = preflight(module) if check is None else check
    Q = module.matrix
    glob = cheb_best_approx(f, Q)
    dists, sizes, coefs = {}, {}, {}
    fiber_lower = 0.0
    for y, fib in _fibers(module).items():
        sol = cheb_best_approx(f, Q, fib)
        dists[y] = sol.distance
        fiber_lower = max(fiber_lower, sol.lower_bound)
        sizes[y] = len(fib)
        coefs[y] = sol.coefficients
    sup_fiber = max(dists.values()) if dists else 0.0
    maxers = [y for y, d in dists.items() if d >= sup_fiber - EASY_TOL]
    gap = glob.distance - sup_fiber
    fnorm = sup_norm(f)
    report = LocalizationReport(glob.distance, dists, sup_fiber, gap,
                                "ok" if pf.passed else "hypotheses-violated", pf,
                                sizes, maxers, coefs, glob.coefficients, fnorm)
    # distances are certified upper bounds; compare against certified lower bounds
    if glob.distance < fiber_lower - EASY_TOL * (1 + fnorm):
        raise AssertionError(
            f"global distance {glob.distance} below fiber distance {fiber_lower}")
    if pf.passed and abs(gap) > EQUALITY_TOL * (1 + fnorm):
        raise AssertionError(f"localization equality failed: gap {gap}")
    return report


@dataclass
class PartitionApproximant:
    partition: list                  # (base point, indicator approximant values, sup residual)
    locals: list                     # module elements g_i on the source
    assembled: SampledFunction
    achieved_error: float
    sup_fiber_distance: float
    eps: float
    budget: float
    span_residual: float

    def to_json(self) -> dict:
        return {"eps": self.eps, "sup_fiber_distance": self.sup_fiber_distance,
                "achieved_error": self.achieved_error, "sigma_budget": self.budget,
                "regions": [str(y) for y, _, _ in self.partition],
                "worst_sigma_residual": max((r for _, _, r in self.partition), default=0.0),
                "span_residual": self.span_residual}


def construct_approximant(f: SampledFunction, module: PullbackModule, eps: float,
                          report: LocalizationReport | None = None) -> PartitionApproximant:
    """Glue fiberwise best approximants with algebra approximants of the indicators.

    Half of ``eps`` is reserved for the fiberwise choice and half for the
    replacement of the exact indicators; the result satisfies
    ``sup|f - assembled| <= D + eps`` with ``D`` the largest fiber distance.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    rep = localize_distance(f, module) if report is None else report
    if rep.flagged:
        raise HypothesisViolation("; ".join(rep.preflight.failures()), condition="preflight")
    D = rep.sup_fiber_distance
    Q = module.matrix
    idx = module.system.map.image_index
    locals_, regions = [], []
    for y, coef in rep.fiber_coefficients.items():
        g = Q @ coef
        fib = module.target.index(y)
        on = idx == fib
        err = float(np.abs(f.values[on] - g[on]).max())
        if err >= D + eps / 2:
            raise BudgetUnreachable("fiber", D + eps / 2, err, f"fiber {y!r}")
        locals_.append(g)
        regions.append(y)
    N = len(regions)
    G = max((float(np.abs(g).max()) for g in locals_), default=0.0)
    budget = eps / (4 * (1 + G) * max(N, 1))
    partition = []
    total = np.zeros(len(module.source), dtype=complex)
    worst = (None, 0.0)
    for y, g in zip(regions, locals_):
        sigma, res = rep.preflight.indicator_approximants[y]
        if res > worst[1]:
            worst = (y, res)
        partition.append((y, sigma, res))
        total += sigma[idx] * g
    if worst[1] > budget:
        raise BudgetUnreachable("indicator", budget, worst[1],
                                f"worst indicator residual at base point {worst[0]!r}")
    assembled = SampledFunction(module.source, total)
    err = float(np.abs(f.values - total).max())
    nrm = float(np.linalg.norm(total))
    res = module.residual(total) / max(nrm, 1.0)
    return PartitionApproximant(partition, [SampledFunction(module.source, g) for g in locals_],
                                assembled, err, D, eps, budget, res)
