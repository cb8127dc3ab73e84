"""The envelope topology of a module and the closure arguments built on it.

``U_eps`` holds the functions dominated by a real module element of mass
below ``eps``.  Closure membership at resolution ``eps`` is witnessed by a pair
``(m1, m2)`` with ``|h - m1| <= m2`` and ``mu(m2) < eps``; every such search
here is a linear program over the real span of the module basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cheb import FACETS, STRICT_SLACK, cheb_best_approx, envelope_feasible, min_mass_dominator, real_span
from .errors import BudgetUnreachable, ConfigurationError, HypothesisViolation, PreconditionViolation
from .functions import PullbackModule, SampledFunction, sup_norm
from .simplex import linprog_ineq
from .spaces import WeightedMeasure

DOMINATION_TOL = 1e-9


def _mu(module: PullbackModule, mu: WeightedMeasure | None) -> WeightedMeasure:
    mu = module.measure if mu is None else mu
    if mu.space != module.source:
        raise ConfigurationError("measure lives on another space than the module")
    return mu


# ----------------------------------------------------------------------
# descriptors and certificates


@dataclass(frozen=True)
class RiemannIntegrableDescriptor:
    """A function with designated discontinuity points.

    ``local_ranges`` optionally gives, per bad point, the interval (segment in
    the complex plane) of values the function approaches there.  The default
    range is the segment from 0 to the value: the function jumps off its
    support.
    """
    function: SampledFunction
    bad_points: frozenset = frozenset()
    support: frozenset | None = None
    local_ranges: dict = field(default_factory=dict)
    strict: bool = False

    def __post_init__(self):
        space = self.function.space
        bad = frozenset(self.bad_points)
        object.__setattr__(self, "bad_points", bad)
        for p in bad:
            space.index(p)
        supp = frozenset(self.function.support()) if self.support is None else frozenset(self.support)
        object.__setattr__(self, "support", supp)
        off = [p for p in space.points if p not in supp and self.function(p) != 0]
        if off:
            raise ConfigurationError(f"function does not vanish outside its support at {off[0]!r}")
        for p in self.local_ranges:
            if p not in bad:
                raise ConfigurationError(f"local range given for non-bad point {p!r}")

    def bad_mass(self, mu: WeightedMeasure) -> float:
        return mu.mass_of(self.bad_points)

    def check_strict(self, mu: WeightedMeasure) -> None:
        if self.strict and self.bad_mass(mu) > 0:
            raise HypothesisViolation("discontinuity set has positive measure",
                                      condition="riemann-integrable")


@dataclass
class CertificateCheck:
    domination_margin: float        # min over points of m2 - |phi - m1|
    mass: float
    eps: float
    worst_point: object = None

    @property
    def domination_ok(self) -> bool:
        return self.domination_margin >= -DOMINATION_TOL

    @property
    def mass_ok(self) -> bool:
        return self.mass < self.eps

    @property
    def ok(self) -> bool:
        return self.domination_ok and self.mass_ok

    def to_json(self) -> dict:
        return {"domination_margin": self.domination_margin, "mass": self.mass, "eps": self.eps,
                "domination_ok": self.domination_ok, "mass_ok": self.mass_ok,
                "worst_point": None if self.worst_point is None else str(self.worst_point)}


def check_certificate(phi, m1, m2, mu: WeightedMeasure, eps: float) -> CertificateCheck:
    """Recheck ``|phi - m1| <= m2`` and ``mu(m2) < eps`` by plain arithmetic.

    Deliberately elementwise Python with ``math.fsum``; shares nothing with the
    solvers that produced the witnesses.
    """
    pv = phi.values if isinstance(phi, SampledFunction) else phi
    a = m1.values if isinstance(m1, SampledFunction) else m1
    b = m2.values if isinstance(m2, SampledFunction) else m2
    points = mu.space.points
    margin, worst = math.inf, None
    for i, p in enumerate(points):
        bi = complex(b[i])
        if abs(bi.imag) > DOMINATION_TOL:
            margin, worst = -math.inf, p
            break
        gap = bi.real - abs(complex(pv[i]) - complex(a[i]))
        if gap < margin:
            margin, worst = gap, p
    mass = math.fsum(float(w) * complex(v).real for w, v in zip(mu.weights, b))
    return CertificateCheck(margin, mass, eps, worst)


@dataclass
class BudgetLedger:
    eps: float
    eps1: float
    cutoff_c: SampledFunction
    dominating_mc: SampledFunction
    sandwich_c1: SampledFunction
    sandwich_c2: SampledFunction
    sw_m1: SampledFunction
    sw_m2: SampledFunction
    mc_sup: float = 0.0
    mc_mass: float = 0.0
    c_sup: float = 0.0
    mc_source: str = ""
    stages: list = field(default_factory=list)   # (stage, bound, achieved)

    @property
    def stated_factor(self) -> float:
        return 3 * self.mc_sup + self.mc_mass

    @property
    def derived_factor(self) -> float:
        # mu((p*c) m2) <= eps1 mu(p*c) + eps1 ||c||, plus 2 eps1 mu(mc)
        return 3 * self.mc_mass + self.c_sup

    def budget_inequality_holds(self) -> bool:
        return self.eps1 < self.eps / self.stated_factor

    def to_json(self) -> dict:
        return {"eps": self.eps, "eps1": self.eps1, "mc_sup": self.mc_sup, "mc_mass": self.mc_mass,
                "c_sup": self.c_sup, "mc_source": self.mc_source,
                "stated_factor": self.stated_factor, "derived_factor": self.derived_factor,
                "budget_inequality": self.budget_inequality_holds(),
                "stages": [{"stage": s, "bound": b, "achieved": a} for s, b, a in self.stages]}


@dataclass
class EnvelopeCertificate:
    m1: SampledFunction
    m2: SampledFunction
    eps: float
    mu: WeightedMeasure = field(repr=False)
    ledger: BudgetLedger | None = None
    level: str = "module"                    # "module" | "closure"
    span_residual: float = 0.0
    stages: list = field(default_factory=list)

    def recheck(self, phi) -> CertificateCheck:
        return check_certificate(phi, self.m1, self.m2, self.mu, self.eps)

    @property
    def mass(self) -> float:
        return float(self.mu.weights @ self.m2.values.real)

    def budget_table(self) -> list[tuple]:
        rows = list(self.ledger.stages) if self.ledger else []
        return rows + list(self.stages)

    def to_json(self) -> dict:
        out = {"eps": self.eps, "level": self.level, "mass": self.mass,
               "span_residual": self.span_residual,
               "m1": self.m1.to_json("X"), "m2": self.m2.to_json("X"),
               "stages": [{"stage": s, "bound": b, "achieved": a} for s, b, a in self.budget_table()]}
        if self.ledger is not None:
            out["ledger"] = self.ledger.to_json()
        return out


# ----------------------------------------------------------------------
# the closure linear program


@dataclass
class ClosureSolution:
    status: str                         # "optimal" | "infeasible"
    m1: np.ndarray | None = None
    m2: np.ndarray | None = None
    mass: float = math.inf
    lower_bound: float = math.inf
    separating_point: object = None


def _span_matrix(module) -> np.ndarray:
    return real_span(module)


def closure_lp(h: SampledFunction, module: PullbackModule, mu: WeightedMeasure,
               dominate_on: np.ndarray | None = None) -> ClosureSolution:
    """Minimize ``mu(m2)`` over module pairs with ``|h - m1| <= m2`` and ``m2 >= 0``.

    Domination is imposed on the points of ``dominate_on`` (default: all).
    Real ``h`` gives an exact LP; complex ``h`` uses ``FACETS`` half-planes per
    point and rescales ``m2`` by ``1/cos(pi/FACETS)`` so the returned pair
    dominates exactly.
    """
    R = _span_matrix(module)
    n, r = R.shape
    mask = np.ones(n, dtype=bool) if dominate_on is None else np.asarray(dominate_on, dtype=bool)
    hv = h.values
    w = np.asarray(mu.weights, dtype=float)
    if r == 0:
        bad = np.nonzero(mask & (np.abs(hv) > 0))[0]
        if bad.size:
            return ClosureSolution("infeasible", separating_point=h.space.points[int(bad[0])])
        z = np.zeros(n)
        return ClosureSolution("optimal", z.astype(complex), z, 0.0, 0.0)
    real = bool(np.all(hv.imag == 0))
    D = np.nonzero(mask)[0]
    Rd = R[D]
    rows, rhs = [], []
    if real:
        hr = hv.real[D]
        # variables: a (m1 coefficients), b (m2 coefficients)
        rows.append(np.hstack([-Rd, -Rd]))
        rhs.append(-hr)
        rows.append(np.hstack([Rd, -Rd]))
        rhs.append(hr)
        rows.append(np.hstack([np.zeros_like(R), -R]))
        rhs.append(np.zeros(n))
        nvar = 2 * r
    else:
        hr, hi = hv.real[D], hv.imag[D]
        for k in range(FACETS):
            th = 2 * np.pi * k / FACETS
            c, s = np.cos(th), np.sin(th)
            rows.append(np.hstack([-c * Rd, -s * Rd, -Rd]))
            rhs.append(-(c * hr + s * hi))
        rows.append(np.hstack([np.zeros_like(R), np.zeros_like(R), -R]))
        rhs.append(np.zeros(n))
        nvar = 3 * r
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    cost = np.zeros(nvar)
    cost[-r:] = w @ R
    res = linprog_ineq(cost, A, b, free=np.ones(nvar, dtype=bool))
    if res.status == "infeasible":
        ray = -res.farkas_ub
        # a point carrying Farkas weight in a domination row
        k = len(D)
        per_point = np.zeros(n)
        nblocks = 2 if real else FACETS
        for blk in range(nblocks):
            per_point[D] += ray[blk * k:(blk + 1) * k]
        return ClosureSolution("infeasible", separating_point=h.space.points[int(np.argmax(per_point))])
    if res.status != "optimal":
        raise RuntimeError(f"closure LP returned {res.status}")
    x = res.x
    if real:
        m1 = (R @ x[:r]).astype(complex)
        m2 = R @ x[r:]
    else:
        m1 = R @ x[:r] + 1j * (R @ x[r:2 * r])
        m2 = (R @ x[2 * r:]) / np.cos(np.pi / FACETS)
    lower = float(b @ res.y_ub)
    return ClosureSolution("optimal", m1, m2, float(w @ m2), lower)


@dataclass
class ClosureRung:
    eps: float
    feasible: bool
    mass: float
    m1: SampledFunction | None = None
    m2: SampledFunction | None = None

    def to_json(self) -> dict:
        return {"eps": self.eps, "feasible": self.feasible, "mass": self.mass}


@dataclass
class ClosureReport:
    rungs: list
    min_mass: float
    lower_bound: float
    separating_point: object = None

    @property
    def in_closure(self) -> bool:
        return all(r.feasible for r in self.rungs)

    @property
    def resolution(self) -> float:
        return min(r.eps for r in self.rungs)

    def to_json(self) -> dict:
        return {"in_closure": self.in_closure, "resolution": self.resolution,
                "min_mass": self.min_mass, "lower_bound": self.lower_bound,
                "separating_point": None if self.separating_point is None else str(self.separating_point),
                "rungs": [r.to_json() for r in self.rungs]}


def membership_U_eps(h: SampledFunction, module: PullbackModule, mu: WeightedMeasure | None,
                     eps: float):
    """Is ``h`` in ``U_eps``: dominated by a real module element of mass below ``eps``?"""
    return envelope_feasible(h, module, _mu(module, mu), eps)


def closure_membership(h: SampledFunction, module: PullbackModule, mu: WeightedMeasure | None,
                       eps_ladder) -> ClosureReport:
    """Certify ``h`` against the closure of the module, one verdict per ladder rung.

    The minimal certificate mass does not depend on ``eps``, so one LP serves
    every rung; rung ``eps`` is feasible iff that minimum is below ``eps``.
    """
    mu = _mu(module, mu)
    ladder = [float(e) for e in eps_ladder]
    if not ladder or any(e <= 0 for e in ladder):
        raise ConfigurationError("ladder must be nonempty and positive")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigurationError("ladder must be strictly decreasing")
    sol = closure_lp(h, module, mu)
    rungs = []
    for e in ladder:
        ok = sol.status == "optimal" and sol.mass <= e - STRICT_SLACK
        rungs.append(ClosureRung(e, ok, sol.mass,
                                 SampledFunction(h.space, sol.m1) if ok else None,
                                 SampledFunction(h.space, sol.m2.astype(complex)) if ok else None))
    return ClosureReport(rungs, sol.mass, sol.lower_bound, sol.separating_point)


def closure_threshold(h: SampledFunction, module: PullbackModule, mu: WeightedMeasure | None = None,
                      resolution: float = 1e-4, hi: float | None = None) -> float:
    """Bisection for the smallest ``eps`` with a closure certificate, to ``resolution``."""
    mu = _mu(module, mu)
    sol = closure_lp(h, module, mu)
    if sol.status != "optimal":
        return math.inf

    def feasible(e):
        return sol.mass <= e - STRICT_SLACK

    lo = 0.0
    hi = max(2 * sol.mass, resolution) + resolution if hi is None else hi
    while not feasible(hi):
        hi *= 2
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ----------------------------------------------------------------------
# domination


def find_dominating(m, module: PullbackModule, mu: WeightedMeasure | None = None) -> SampledFunction:
    """Least-mass real module element ``n`` with ``n >= |m|`` pointwise."""
    mu = _mu(module, mu)
    vals = m.values if isinstance(m, SampledFunction) else np.asarray(m, dtype=complex)
    target = np.abs(vals)
    R = _span_matrix(module)
    space = module.source
    if R.shape[1] == 0:
        if np.any(target > 0):
            pt = space.points[int(np.argmax(target))]
            raise HypothesisViolation("module has no real elements", condition="(3)", point=pt)
        return SampledFunction.zero(space)
    res = min_mass_dominator(target, R, mu.weights)
    if res.status == "infeasible":
        ray = -res.farkas_ub
        pt = space.points[int(np.argmax(ray * np.maximum(target, 1e-300)))]
        raise HypothesisViolation(f"no module element dominates the function (separated at {pt!r})",
                                  condition="(3)", point=pt)
    if res.status != "optimal":
        raise RuntimeError(f"dominator LP returned {res.status}")
    return SampledFunction(space, (R @ res.x).astype(complex))


def find_positive_at(x, module: PullbackModule, mu: WeightedMeasure | None = None) -> SampledFunction:
    """A module element ``m_x >= 0`` with ``m_x(x) > 0``.

    First ``n_x``: the basis element largest in modulus at ``x``, normalized to
    ``n_x(x) = 1``; then ``m_x`` dominates ``|n_x|``.
    """
    space = module.source
    i = space.index(x)
    Q = module.matrix
    row = np.abs(Q[i]) if Q.shape[1] else np.zeros(0)
    if row.size == 0 or row.max() <= 1e-12:
        raise HypothesisViolation(f"every module element vanishes at {x!r}", condition="(2)", point=x)
    j = int(np.argmax(row))
    nx = Q[:, j] / Q[i, j]
    mx = find_dominating(nx, module, mu)
    if mx.values[i].real <= 0:
        raise HypothesisViolation(f"dominator vanishes at {x!r}", condition="(3)", point=x)
    return mx


# ----------------------------------------------------------------------
# closure lemmas


def closure_module_mult(c: SampledFunction, m, module: PullbackModule,
                        mu: WeightedMeasure | None, eps: float) -> EnvelopeCertificate:
    """Witness that ``(p*c) m`` lies in the closure at resolution ``eps``.

    With ``|m| <= n`` and ``|c - a| <= delta`` for ``a`` in the algebra,
    ``|(p*c)m - (p*a)m| <= delta n``; ``delta <= eps/(1 + mu(n))`` makes the
    mass of ``delta n`` small enough.
    """
    mu = _mu(module, mu)
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    if c.space != module.target:
        raise ConfigurationError("c must live on the base space")
    mv = m.values if isinstance(m, SampledFunction) else np.asarray(m, dtype=complex)
    n = find_dominating(mv, module, mu)
    n_mass = float(mu.weights @ n.values.real)
    sol = cheb_best_approx(c, module.algebra.span)
    A = module.algebra.span
    a = A @ sol.coefficients if A.shape[1] else np.zeros(len(c.space), dtype=complex)
    if c.is_real():
        # a real approximant is as good: |c - Re a| <= |c - a|
        a = a.real.astype(complex)
    delta = float(np.abs(c.values - a).max())
    allowed = eps / (1 + n_mass)
    if delta > allowed:
        raise BudgetUnreachable("algebra-approximation", allowed, delta,
                                "the base algebra cannot approximate the cutoff closely enough")
    idx = module.system.map.image_index
    m1 = a[idx] * mv
    m2 = delta * n.values.real
    target = c.values[idx] * mv
    cert = EnvelopeCertificate(SampledFunction(module.source, m1),
                               SampledFunction(module.source, m2.astype(complex)), eps, mu,
                               level="module",
                               span_residual=module.residual(m1) / max(1.0, float(np.linalg.norm(m1))),
                               stages=[("algebra-approximation", allowed, delta),
                                       ("dominator-mass", math.inf, n_mass)])
    chk = cert.recheck(target)
    if not chk.ok:
        raise BudgetUnreachable("closure-module", eps, chk.mass,
                                f"domination margin {chk.domination_margin:.3g}")
    return cert


@dataclass
class NestingCase:
    eps_prime: float
    eps: float
    sample: int
    applicable: bool
    m_prime_kind: str = ""
    m_prime_mass: float = math.nan
    n2_mass: float = math.nan
    witness_mass: float = math.nan
    domination_margin: float = math.nan
    ok: bool = True

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("eps_prime", "eps", "sample", "applicable",
                                              "m_prime_kind", "m_prime_mass", "n2_mass",
                                              "witness_mass", "domination_margin", "ok")}


@dataclass
class NestingReport:
    cases: list

    @property
    def violations(self) -> list:
        return [c for c in self.cases if c.applicable and not c.ok]

    @property
    def checked(self) -> int:
        return sum(c.applicable for c in self.cases)

    def to_json(self) -> dict:
        return {"checked": self.checked, "violations": len(self.violations),
                "cases": [c.to_json() for c in self.cases]}


def verify_nesting(module: PullbackModule, mu: WeightedMeasure | None, eps_pairs, samples) -> NestingReport:
    """Witness-level check that ``U'_{eps'}`` sits inside ``U_eps`` for ``eps' < eps``.

    For each sample ``h`` a closure element ``m' >= |h|`` of mass below
    ``eps'`` is sought (``|h|`` itself when it is closure-certifiable, else the
    least-mass module dominator).  ``m'`` is then approximated by ``n1`` with
    ``|m' - n1| <= n2``, ``mu(n2) < delta/2``, and ``n1 + n2`` must lie in
    ``U_eps``.
    """
    mu = _mu(module, mu)
    cases = []
    for ep, e in eps_pairs:
        if not ep < e:
            raise PreconditionViolation(f"need eps' < eps, got {ep} >= {e}")
        delta = e - ep
        for k, h in enumerate(samples):
            habs = SampledFunction(h.space, np.abs(h.values).astype(complex))
            cand = []
            if float(mu.weights @ habs.values.real) < ep:
                sol = closure_lp(habs, module, mu)
                if sol.status == "optimal" and sol.mass < delta / 2:
                    cand.append(("abs", habs.values.real, sol))
            if not cand:
                try:
                    n = find_dominating(h, module, mu).values.real
                except HypothesisViolation:
                    n = None
                if n is not None and float(mu.weights @ n) < ep:
                    z = np.zeros(len(n))
                    cand.append(("dominator", n, ClosureSolution("optimal", n.astype(complex), z, 0.0, 0.0)))
            if not cand:
                cases.append(NestingCase(ep, e, k, False))
                continue
            kind, mprime, sol = cand[0]
            n1 = sol.m1.real
            n2 = sol.m2
            witness = n1 + n2
            chk = check_certificate(np.zeros(len(witness)), np.abs(h.values), witness, mu, e)
            # |h| <= m' <= n1 + n2 and mu(n1 + n2) < eps' + 2 (delta/2)
            cases.append(NestingCase(ep, e, k, True, kind, float(mu.weights @ mprime),
                                     sol.mass, chk.mass, chk.domination_margin, chk.ok))
    return NestingReport(cases)


def double_closure_splice(phi, m1p, m2p, module: PullbackModule, mu: WeightedMeasure | None,
                          eps: float) -> EnvelopeCertificate:
    """Turn a closure-level certificate at ``eps/2`` into a module-level one at ``eps``.

    ``m1p`` and ``m2p`` are approximated from the module by the closure LP,
    ``|m1p - n1| <= n2`` and ``|m2p - k1| <= k2``; then
    ``|phi - n1| <= k1 + k2 + n2`` and the mass grows by at most
    ``mu(n2) + 2 mu(k2)``, each kept below ``eps/8``.
    """
    mu = _mu(module, mu)
    pv = phi.values if isinstance(phi, SampledFunction) else np.asarray(phi, dtype=complex)
    a = m1p.values if isinstance(m1p, SampledFunction) else np.asarray(m1p, dtype=complex)
    b = m2p.values if isinstance(m2p, SampledFunction) else np.asarray(m2p, dtype=complex)
    outer = check_certificate(pv, a, b, mu, eps / 2)
    if not outer.domination_ok:
        raise HypothesisViolation("outer certificate does not dominate", condition="certificate",
                                  point=outer.worst_point)
    if not outer.mass_ok:
        raise BudgetUnreachable("outer-certificate", eps / 2, outer.mass)
    X = module.source
    s1 = closure_lp(SampledFunction(X, a), module, mu)
    s2 = closure_lp(SampledFunction(X, b.real.astype(complex)), module, mu)
    for name, s in (("close-m1", s1), ("close-m2", s2)):
        if s.status != "optimal":
            raise BudgetUnreachable(name, eps / 8, math.inf, f"separated at {s.separating_point!r}")
    if s1.mass >= eps / 8 or s2.mass >= eps / 8:
        worst = ("close-m1", s1.mass) if s1.mass >= eps / 8 else ("close-m2", s2.mass)
        raise BudgetUnreachable(worst[0], eps / 8, worst[1])
    M1 = s1.m1
    M2 = s2.m1.real + s2.m2 + s1.m2
    cert = EnvelopeCertificate(SampledFunction(X, M1), SampledFunction(X, M2.astype(complex)), eps, mu,
                               level="module",
                               span_residual=max(module.residual(M1) / max(1.0, float(np.linalg.norm(M1))),
                                                 module.residual(M2.astype(complex))
                                                 / max(1.0, float(np.linalg.norm(M2)))),
                               stages=[("outer-certificate", eps / 2, outer.mass),
                                       ("close-m1", eps / 8, s1.mass),
                                       ("close-m2", eps / 8, s2.mass)])
    chk = cert.recheck(pv)
    if not chk.ok:
        raise BudgetUnreachable("double-closure", eps, chk.mass,
                                f"domination margin {chk.domination_margin:.3g}")
    return cert


# ----------------------------------------------------------------------
# the main approximation pipeline


def bourbaki_sandwich(phi: RiemannIntegrableDescriptor, mu: WeightedMeasure,
                      eps1: float) -> tuple[SampledFunction, SampledFunction]:
    """Continuous ``c1, c2`` with ``|phi - c1| <= c2`` and ``mu(c2) <= eps1``.

    Off the bad points ``c1 = phi`` and ``c2 = 0``.  At a bad point with local
    range ``[lo, hi]``, ``c1`` is the midpoint and ``c2`` the half-length.
    """
    phi.check_strict(mu)
    f = phi.function
    c1 = f.values.copy()
    c2 = np.zeros(len(f.space))
    for p in sorted(phi.bad_points, key=f.space.index):
        i = f.space.index(p)
        v = complex(f.values[i])
        lo, hi = phi.local_ranges.get(p, (0, v))
        lo, hi = complex(lo), complex(hi)
        mid = 0.5 * (lo + hi)
        c1[i] = mid
        c2[i] = max(0.5 * abs(hi - lo), abs(v - mid))
    mass = float(mu.weights @ c2)
    if mass > eps1:
        raise BudgetUnreachable("sandwich", eps1, mass,
                                "oscillation mass on bad points too large; refine the bad-point model")
    return SampledFunction(f.space, c1), SampledFunction(f.space, c2.astype(complex))


def default_cutoff(phi: RiemannIntegrableDescriptor, module: PullbackModule) -> SampledFunction:
    """Indicator of the image of the support of ``phi``."""
    Y = module.target
    fmap = module.system.map
    img = {fmap(x) for x in phi.support}
    img.discard(Y.infinity_point)
    return SampledFunction.indicator(Y, sorted(img, key=Y.index))


def _dominating_mc(pc: np.ndarray, c: SampledFunction, module, mu) -> tuple[np.ndarray, str]:
    """Two constructions of ``mc >= p*c``; keep the one with the looser budget."""
    X = module.source
    cands = []
    try:
        lp = find_dominating(pc, module, mu).values.real
        cands.append(("lp-minimal", lp))
    except HypothesisViolation:
        pass
    total = np.zeros(len(X))
    try:
        for i in np.nonzero(pc > 0)[0]:
            mx = find_positive_at(X.points[i], module, mu).values.real
            total += (pc[i] / mx[i]) * mx
        cands.append(("positive-sum", total))
    except HypothesisViolation as exc:
        if not cands:
            raise exc
    c_sup = sup_norm(c)

    def factor(v):
        s, m = float(np.abs(v).max()), float(mu.weights @ v)
        return max(3 * s + m, 3 * m + c_sup)

    kind, mc = min(cands, key=lambda kv: factor(kv[1]))
    return mc, kind


def main_theorem_pipeline(phi: RiemannIntegrableDescriptor, module: PullbackModule,
                          mu: WeightedMeasure | None, eps: float,
                          cutoff: SampledFunction | None = None) -> EnvelopeCertificate:
    """Closure-level certificate ``|phi - m1'| <= m2'``, ``mu(m2') < eps``.

    Stages: cutoff ``c`` with ``p*c = 1`` on the support; dominator
    ``mc >= p*c``; ``eps1``; sandwich ``c1, c2``; module approximants
    ``m1, m2`` within ``eps1``; then ``m1' = (p*c) m1`` and
    ``m2' = (p*c) m2 + 2 eps1 mc``.

    ``eps1`` is half of ``eps / max(3|mc| + mu(mc), 3 mu(mc) + |c|)``: the
    first term is the configured budget inequality, the second is what the
    mass estimate of the chain actually needs.
    """
    mu = _mu(module, mu)
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    f = phi.function
    if f.space != module.source:
        raise ConfigurationError("phi lives on another space than the module")
    X = module.source
    idx = module.system.map.image_index
    c = default_cutoff(phi, module) if cutoff is None else cutoff
    pc = c.values.real[idx]
    if np.any(c.values.imag != 0) or np.any(c.values.real < 0):
        raise ConfigurationError("cutoff must be real and nonnegative")
    supp_idx = X.indices(sorted(phi.support, key=X.index))
    if len(supp_idx) and np.any(np.abs(pc[supp_idx] - 1) > 1e-12):
        raise ConfigurationError("cutoff pullback must equal 1 on the support of phi")
    mc, mc_kind = _dominating_mc(pc, c, module, mu)
    mc_sup, mc_mass = float(np.abs(mc).max()), float(mu.weights @ mc)
    c_sup = sup_norm(c)
    K = max(3 * mc_sup + mc_mass, 3 * mc_mass + c_sup)
    if K <= 0:
        # phi vanishes: the zero pair certifies it
        z = SampledFunction.zero(X)
        return EnvelopeCertificate(z, z, eps, mu, level="module")
    eps1 = eps / (2 * K)
    c1, c2 = bourbaki_sandwich(phi, mu, eps1)
    sol1 = cheb_best_approx(c1, module.matrix)
    m1 = module.matrix @ sol1.coefficients
    R = module.real_matrix
    sol2 = cheb_best_approx(SampledFunction(X, c2.values.real.astype(complex)), R.astype(complex))
    m2 = (R @ sol2.coefficients.real)
    err1 = float(np.abs(c1.values - m1).max())
    err2 = float(np.abs(c2.values.real - m2).max())
    if err1 >= eps1 - STRICT_SLACK:
        raise BudgetUnreachable("stone-weierstrass-c1", eps1, err1,
                                "module not fiber-dense enough to approximate c1")
    if err2 >= eps1 - STRICT_SLACK:
        raise BudgetUnreachable("stone-weierstrass-c2", eps1, err2,
                                "module not fiber-dense enough to approximate c2")
    m1p = pc * m1
    # |phi - (p*c) m1| <= (p*c) m2 + (err1 + err2) mc; the budget allows 2 eps1
    slack = min(2 * eps1, err1 + err2 + 1e-12 * (1 + sup_norm(f)))
    m2p = pc * m2 + slack * mc
    if not check_certificate(f, m1p, m2p, mu, eps).domination_ok:
        slack = 2 * eps1
        m2p = pc * m2 + slack * mc
    ledger = BudgetLedger(eps, eps1, c, SampledFunction(X, mc.astype(complex)), c1, c2,
                          SampledFunction(X, m1), SampledFunction(X, m2.astype(complex)),
                          mc_sup, mc_mass, c_sup, mc_kind)
    mass = float(mu.weights @ m2p)
    ledger.stages = [("sandwich", eps1, float(mu.weights @ c2.values.real)),
                     ("stone-weierstrass-c1", eps1, err1),
                     ("stone-weierstrass-c2", eps1, err2),
                     ("residual-slack", 2 * eps1, slack),
                     ("stated-mass-bound", ledger.stated_factor * eps1, mass),
                     ("derived-mass-bound", ledger.derived_factor * eps1, mass),
                     ("final-mass", eps, mass)]
    res = max(module.residual(m1p) / max(1.0, float(np.linalg.norm(m1p))),
              module.residual(m2p.astype(complex)) / max(1.0, float(np.linalg.norm(m2p))))
    cert = EnvelopeCertificate(SampledFunction(X, m1p), SampledFunction(X, m2p.astype(complex)),
                               eps, mu, ledger, level="closure", span_residual=res)
    chk = cert.recheck(f)
    if not chk.domination_ok:
        raise BudgetUnreachable("domination", 0.0, -chk.domination_margin,
                                f"at point {chk.worst_point!r}")
    if not mass <= eps - STRICT_SLACK:
        raise BudgetUnreachable("final-mass", eps, mass)
    return cert


def density_theorem_splice(phi: RiemannIntegrableDescriptor, module: PullbackModule,
                           c: SampledFunction, h3: SampledFunction, eps: float,
                           mu: WeightedMeasure | None = None,
                           bad_set=None) -> EnvelopeCertificate:
    """Splice a good-set certificate with a bad-set majorant, then close.

    ``eps1 < eps / (2(|c| + 1))``.  On the good set a module pair
    ``(h1', h2')`` certifies ``phi`` at ``eps1``; with ``c' = p*c``,
    ``|phi - c'h1'| <= c'h2' + h3`` must hold on the bad set too, giving a
    closure-level certificate of mass below ``(|c| + 1) eps1 < eps/2`` that
    the double-closure step brings back into the module at ``eps``.
    """
    mu = _mu(module, mu)
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    X = module.source
    f = phi.function
    bad = phi.bad_points if bad_set is None else frozenset(bad_set)
    bad_mask = np.zeros(len(X), dtype=bool)
    for p in bad:
        bad_mask[X.index(p)] = True
    c_sup = sup_norm(c)
    eps1 = eps / (2 * (c_sup + 1)) * (1 - 1e-6)
    sol = closure_lp(f, module, mu, dominate_on=~bad_mask)
    if sol.status != "optimal":
        raise HypothesisViolation("no good-set certificate", condition="good-set",
                                  point=sol.separating_point)
    if sol.mass >= eps1:
        raise BudgetUnreachable("good-set", eps1, sol.mass)
    idx = module.system.map.image_index
    cp = c.values.real[idx]
    h1, h2 = sol.m1, sol.m2
    h3v = h3.values.real
    h3_mass = float(mu.weights @ h3v)
    if np.any(h3v < -DOMINATION_TOL):
        raise ConfigurationError("bad-set majorant must be nonnegative")
    need = np.abs(f.values - cp * h1) + cp * h2
    short = need - h3v
    if np.any(short[bad_mask] > DOMINATION_TOL):
        worst = int(np.argmax(np.where(bad_mask, short, -np.inf)))
        raise HypothesisViolation(f"bad-set majorant too small at {X.points[worst]!r} "
                                  f"(short by {short[worst]:.3g})", condition="bad-set-domination",
                                  point=X.points[worst])
    if h3_mass >= eps1:
        raise BudgetUnreachable("bad-set-majorant", eps1, h3_mass)
    m1p = cp * h1
    m2p = cp * h2 + h3v
    spliced_mass = float(mu.weights @ m2p)
    bound = (c_sup + 1) * eps1
    if spliced_mass >= bound:
        raise BudgetUnreachable("splice", bound, spliced_mass)
    cert = double_closure_splice(f, m1p, m2p.astype(complex), module, mu, eps)
    cert.stages = [("good-set", eps1, sol.mass), ("bad-set-majorant", eps1, h3_mass),
                   ("splice", bound, spliced_mass)] + cert.stages
    return cert
