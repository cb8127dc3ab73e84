"""Convergence of measure sequences and the bad-set estimate checker.

``transfer_convergence`` replays the three-term triangle inequality that
moves convergence on a module to convergence on a Riemann-integrable
function, gated on the module hypothesis.  ``verify_bad_set_estimates``
checks the four pointwise majorizations of a sum of localized functions.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .envelope import EnvelopeCertificate, RiemannIntegrableDescriptor, check_certificate
from .errors import ConfigurationError, PreconditionViolation
from .functions import PullbackModule, SampledFunction
from .spaces import FiberedSystem, WeightedMeasure

DEFAULT_N = 200
SLOPE_THRESHOLD = -0.5
SLOPE_SLACK = 1e-6             # 1/sqrt(n) sits exactly on the threshold
TRIANGLE_TOL = 1e-12


@dataclass
class MeasureSequence:
    """``terms(n)`` gives the n-th measure, n = 1..n_max."""
    base: WeightedMeasure
    terms: Callable[[int], WeightedMeasure]
    n_max: int = 10**9
    description: dict = field(default_factory=dict)

    def term(self, n: int) -> WeightedMeasure:
        if not 1 <= n <= self.n_max:
            raise PreconditionViolation(f"term {n} outside 1..{self.n_max}")
        mu = self.terms(n)
        if mu.space != self.base.space:
            raise ConfigurationError("sequence term lives on another space")
        if np.any(mu.weights < 0):
            raise ConfigurationError(f"term {n} is not a nonnegative measure")
        return mu

    @classmethod
    def constant(cls, base: WeightedMeasure) -> "MeasureSequence":
        return cls(base, lambda n: base, description={"kind": "constant"})

    @classmethod
    def perturbation(cls, base: WeightedMeasure, nu: np.ndarray, rate: str = "1/n") -> "MeasureSequence":
        """``mu_n = mu + r(n) nu``; ``rate`` is ``"1/n"``, ``"1/sqrt(n)"`` or ``"parity"``
        (``r(n) = (1 + (-1)^n)/2``, which does not converge)."""
        nu = np.asarray(nu, dtype=float)
        rates = {"1/n": lambda n: 1.0 / n, "1/sqrt(n)": lambda n: 1.0 / math.sqrt(n),
                 "parity": lambda n: (1 + (-1) ** n) / 2}
        if rate not in rates:
            raise ConfigurationError(f"unknown rate {rate!r}")
        r = rates[rate]
        space = base.space
        return cls(base, lambda n: WeightedMeasure(space, base.weights + r(n) * nu),
                   description={"kind": "perturbation", "rate": rate, "nu": nu.tolist()})

    @classmethod
    def alternating(cls, base: WeightedMeasure, nu: np.ndarray) -> "MeasureSequence":
        """``mu_n = mu + (-1)^n nu`` with ``|nu| <= mu`` (signed ``nu``)."""
        nu = np.asarray(nu, dtype=float)
        if np.any(np.abs(nu) > base.weights + 1e-15):
            raise ConfigurationError("alternating perturbation must satisfy |nu| <= mu")
        space = base.space
        return cls(base, lambda n: WeightedMeasure(space, np.maximum(base.weights + (-1) ** n * nu, 0.0)),
                   description={"kind": "alternating", "nu": nu.tolist()})

    @classmethod
    def from_terms(cls, base: WeightedMeasure, terms: Sequence[WeightedMeasure]) -> "MeasureSequence":
        terms = list(terms)
        return cls(base, lambda n: terms[n - 1], n_max=len(terms), description={"kind": "explicit"})


def orthogonal_perturbation(base: WeightedMeasure, module: PullbackModule,
                            rng: np.random.Generator) -> np.ndarray:
    """A signed ``nu`` with ``nu(b) = 0`` on the module and ``|nu| <= mu/2``."""
    Q = module.matrix
    B = np.hstack([Q.real, Q.imag])
    # orthogonal complement of the real and imaginary parts
    u, s, _ = np.linalg.svd(B, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(1.0, s.max() if s.size else 1.0)))
    comp = u[:, rank:]
    if comp.shape[1] == 0:
        raise PreconditionViolation("module spans every function; no orthogonal perturbation")
    nu = comp @ rng.normal(size=comp.shape[1])
    w = base.weights
    pos = w > 0
    if np.any(np.abs(nu[~pos]) > 1e-12):
        # restrict to the support of mu by projecting again
        raise PreconditionViolation("base measure must have full support")
    scale = 0.5 * float(np.min(w[pos] / np.maximum(np.abs(nu[pos]), 1e-300)))
    return nu * scale


def _tail(N: int) -> range:
    return range(max(1, N // 2), N + 1)


def _slope(ns: np.ndarray, devs: np.ndarray) -> float:
    keep = devs > 0
    if keep.sum() < 2:
        return -math.inf
    x, y = np.log(ns[keep]), np.log(devs[keep])
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ConvergenceReport:
    N: int
    tolerance: float
    deviations: np.ndarray          # (N, dim): |mu_n(b) - mu(b)|
    tail_max: np.ndarray
    slopes: np.ndarray
    converged: np.ndarray            # per basis direction

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    @property
    def flagged_directions(self) -> list[int]:
        return [int(j) for j in np.nonzero(~self.converged)[0]]

    def to_json(self) -> dict:
        return {"N": self.N, "tolerance": self.tolerance, "tail_window": [max(1, self.N // 2), self.N],
                "all_converged": self.all_converged,
                "flagged_directions": self.flagged_directions,
                "tail_max": self.tail_max.tolist(), "slopes": self.slopes.tolist()}


def check_convergence_on_module(seq: MeasureSequence, module: PullbackModule,
                                tolerance: float = 1e-6, N: int = DEFAULT_N) -> ConvergenceReport:
    """Deviations ``|mu_n(b) - mu(b)|`` per module basis element, with a decay verdict.

    A direction converges when its tail maximum is within ``tolerance`` or its
    deviations decay with log-log slope at most -1/2 over the tail window
    while shrinking across it.
    """
    if N > seq.n_max:
        raise PreconditionViolation(f"N={N} exceeds the sequence length {seq.n_max}")
    Q = module.matrix
    base = seq.base.weights @ Q
    dev = np.zeros((N, Q.shape[1]))
    for n in range(1, N + 1):
        dev[n - 1] = np.abs(seq.term(n).weights @ Q - base)
    tail = np.array(list(_tail(N)))
    td = dev[tail - 1]
    tail_max = td.max(axis=0) if td.size else np.zeros(Q.shape[1])
    slopes = np.array([_slope(tail.astype(float), td[:, j]) for j in range(Q.shape[1])])
    shrinking = td[-1] <= td[0] if td.size else np.ones(Q.shape[1], dtype=bool)
    converged = (tail_max <= tolerance) | ((slopes <= SLOPE_THRESHOLD + SLOPE_SLACK) & shrinking)
    return ConvergenceReport(N, tolerance, dev, tail_max, slopes, converged)


@dataclass
class TransferReport:
    status: str                      # "transferred" | "hypothesis-failure"
    eps: float
    N: int
    gate: ConvergenceReport
    rows: list = field(default_factory=list)     # (n, lhs, rhs, triangle_ok)
    tail_max_lhs: float = math.nan
    tail_max_rhs: float = math.nan
    certificate_mass: float = math.nan
    triangle_ok: bool = True
    bound_ok: bool = False
    tolerance: float = 1e-6

    def to_json(self) -> dict:
        return {"status": self.status, "eps": self.eps, "N": self.N,
                "tail_window": [max(1, self.N // 2), self.N],
                "tail_max_lhs": self.tail_max_lhs, "tail_max_rhs": self.tail_max_rhs,
                "bound": 2 * self.eps + self.tolerance, "bound_ok": self.bound_ok,
                "triangle_ok": self.triangle_ok, "certificate_mass": self.certificate_mass,
                "gate": self.gate.to_json()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        dim = self.gate.deviations.shape[1]
        w.writerow(["n"] + [f"deviation_{j}" for j in range(dim)] + ["lhs", "rhs", "bound_check"])
        for n, lhs, rhs, ok in self.rows:
            w.writerow([n] + [repr(float(d)) for d in self.gate.deviations[n - 1]]
                       + [repr(lhs), repr(rhs), "pass" if ok else "fail"])
        return buf.getvalue()


def transfer_convergence(seq: MeasureSequence, phi: RiemannIntegrableDescriptor, module: PullbackModule,
                         eps: float, N: int = DEFAULT_N, certificate: EnvelopeCertificate | None = None,
                         tolerance: float = 1e-6, gate_tolerance: float = 1e-6) -> TransferReport:
    """Check ``|mu_n(phi) - mu(phi)| <= mu_n(h2) + mu(h2) + |mu_n(h1) - mu(h1)|`` for n <= N
    and that the tail maximum of the left side is at most ``2 eps + tolerance``.

    ``certificate`` is a pair ``(h1, h2)`` for ``phi`` at resolution ``eps``
    under the base measure.  Nothing is claimed when the module gate fails.
    """
    gate = check_convergence_on_module(seq, module, gate_tolerance, N)
    if not gate.all_converged:
        return TransferReport("hypothesis-failure", eps, N, gate, tolerance=tolerance)
    if certificate is None:
        raise PreconditionViolation("no certificate for phi: run the main pipeline "
                                    "(main_theorem_pipeline) at this eps first")
    f = phi.function.values
    h1 = certificate.m1.values
    h2 = certificate.m2.values.real
    chk = check_certificate(f, h1, h2, seq.base, eps)
    if not chk.ok:
        raise PreconditionViolation(f"certificate does not certify phi at eps={eps}: {chk.to_json()}")
    w0 = seq.base.weights
    base_phi, base_h1, base_h2 = w0 @ f, w0 @ h1, float(w0 @ h2)
    rows = []
    tri_ok = True
    for n in range(1, N + 1):
        wn = seq.term(n).weights
        lhs = float(abs(wn @ f - base_phi))
        rhs = float(wn @ h2) + base_h2 + float(abs(wn @ h1 - base_h1))
        ok = lhs <= rhs + TRIANGLE_TOL * max(1.0, rhs)
        tri_ok &= ok
        rows.append((n, lhs, rhs, ok))
    tail = list(_tail(N))
    tl = max(rows[n - 1][1] for n in tail)
    tr = max(rows[n - 1][2] for n in tail)
    return TransferReport("transferred", eps, N, gate, rows, tl, tr, base_h2, tri_ok,
                          tri_ok and tl <= 2 * eps + tolerance, tolerance)


# ----------------------------------------------------------------------
# bad-set estimates


@dataclass
class BadSetEstimateFixture:
    """Localized functions ``h_i`` on the source and base functions ``a_i``.

    Point sets on the base are boolean masks: ``W_bar[i]`` (closed region),
    ``W_prime[i]`` (its open enlargement), ``V[i]`` (where the band
    constraints on ``h_i`` hold), ``C``, ``C1`` and the band ``B``.  ``good``
    is a mask on the source.
    """
    system: FiberedSystem
    good: np.ndarray
    hat_h: np.ndarray                # (N, |X|) real
    a: np.ndarray                    # (N, |Y|) real
    W_bar: np.ndarray
    W_prime: np.ndarray
    V: np.ndarray
    C: np.ndarray
    C1: np.ndarray
    B: np.ndarray
    h2: np.ndarray                   # on the source, >= 1 on p^-1(C1)
    c_G: float
    c_prime_G: float
    eps1: float
    eps2: float
    eps3: float
    M: float
    eps: float

    @property
    def N(self) -> int:
        return self.hat_h.shape[0]

    @property
    def mu(self) -> WeightedMeasure:
        return self.system.measure_upstairs

    def validate(self) -> list[tuple]:
        """Input constraints, as (name, point, margin) for each violation."""
        X, Y = self.system.source, self.system.target
        idx = self.system.map.image_index
        out = []

        def flag(name, mask_vals, pts):
            # mask_vals: margins (negative = violated)
            if mask_vals.size and mask_vals.min() < -1e-12:
                j = int(np.argmin(mask_vals))
                out.append((name, pts[j], float(mask_vals[j])))

        for i in range(self.N):
            inV = self.V[i][idx]
            g, b = inV & self.good, inV & ~self.good
            h = self.hat_h[i]
            flag("h-band-good", np.minimum(h[g], self.eps1 - h[g]), [X.points[j] for j in np.nonzero(g)[0]])
            flag("h-band-bad", np.minimum(h[b] - 1, self.c_G - h[b]), [X.points[j] for j in np.nonzero(b)[0]])
            offB = ~self.B[idx]
            flag("h-outside-band", -np.abs(h[offB]), [X.points[j] for j in np.nonzero(offB)[0]])
            a = self.a[i]
            onB = np.nonzero(self.B)[0]
            flag("a-range-B", np.minimum(a[onB], 1 + self.eps3 - a[onB]), [Y.points[j] for j in onB])
            wb = np.nonzero(self.W_bar[i])[0]
            flag("a-lower-W", a[wb] - 1, [Y.points[j] for j in wb])
            far = np.nonzero(self.B & ~self.W_prime[i])[0]
            flag("a-upper-off-W'", self.eps3 - a[far], [Y.points[j] for j in far])
            nest = np.nonzero(self.W_bar[i] & ~self.W_prime[i] | self.W_prime[i] & ~self.V[i]
                              | self.V[i] & ~self.C1)[0]
            if nest.size:
                out.append(("nesting", Y.points[int(nest[0])], -1.0))
        count = self.W_bar.sum(axis=0)
        flag("overlap", self.c_prime_G * self.C1 - count, list(Y.points))
        flag("C-covered", np.where(self.C, self.W_bar.any(axis=0) - 0.5, 1.0), list(Y.points))
        flag("M", np.array([self.M - float(np.abs(self.hat_h).max(initial=0.0))]), [None])
        ann = (self.W_prime & ~self.W_bar).any(axis=0)[idx]
        flag("eps2", np.array([self.eps2 - float(self.mu.weights[ann].sum())]), [None])
        flag("h2", self.h2[self.C1[idx]] - 1, [X.points[j] for j in np.nonzero(self.C1[idx])[0]])
        return out


@dataclass
class BadSetReport:
    failures: list                   # (set, point, margin)
    input_violations: list
    checks: dict                     # set -> worst margin
    mass: float
    majorant_mass: float
    eps: float

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def rejected_set(self) -> str | None:
        return self.failures[0][0] if self.failures else None

    @property
    def failed_sets(self) -> list[str]:
        return [f[0] for f in self.failures]

    def to_json(self) -> dict:
        return {"passed": self.passed, "rejected_set": self.rejected_set,
                "failures": [{"set": s, "point": None if p is None else str(p), "margin": m}
                             for s, p, m in self.failures],
                "input_violations": [{"constraint": s, "point": None if p is None else str(p), "margin": m}
                                     for s, p, m in self.input_violations],
                "checks": self.checks, "mass": self.mass, "majorant_mass": self.majorant_mass,
                "eps": self.eps}


CHECK_ORDER = ("good", "bad", "annulus", "elsewhere", "nonnegative-C1", "bad-lower", "mass")


def verify_bad_set_estimates(fx: BadSetEstimateFixture) -> BadSetReport:
    """Check the four majorizations of ``h1 = sum_i (p*a_i) h_i`` and the final bounds.

    Each term ``(p*a_i)(x) h_i(x)`` is assigned by where ``p(x)`` sits
    relative to region ``i``: in ``W_bar_i`` (covered; good or bad by ``x``),
    in ``W'_i \\ W_bar_i`` (annulus), or elsewhere.  The partial sums are
    checked against the majorants
    ``(1+e3) e1 c'_G``, ``(1+e3) c_G c'_G``, ``(1+e3) M N`` and
    ``e3 sum_i |h_i|``; their total bounds ``|h1|``.  Then
    ``h' = h1 + e3 M N h2`` must be ``>= 0`` on ``p^-1(C1)``, ``>= 1`` on the
    bad points over the covered set, and ``mu(h') < eps/2``.
    """
    X = fx.system.source
    idx = fx.system.map.image_index
    mu = fx.mu.weights
    terms = fx.a[:, idx] * fx.hat_h                      # (N, |X|)
    cov = fx.W_bar[:, idx]
    ann = fx.W_prime[:, idx] & ~cov
    rest = ~(cov | ann)
    s_cov = np.where(cov, terms, 0).sum(axis=0)
    s_ann = np.abs(np.where(ann, terms, 0).sum(axis=0))
    s_rest = np.abs(np.where(rest, terms, 0).sum(axis=0))
    covered = cov.any(axis=0)
    in_C1 = fx.C1[idx]
    e1, e3, N = fx.eps1, fx.eps3, fx.N
    maj = {
        "good": (1 + e3) * e1 * fx.c_prime_G * in_C1,
        "bad": (1 + e3) * fx.c_G * fx.c_prime_G * in_C1,
        "annulus": (1 + e3) * fx.M * N * ann.any(axis=0),
        "elsewhere": e3 * np.abs(fx.hat_h).sum(axis=0),
    }
    masks = {"good": covered & fx.good, "bad": covered & ~fx.good,
             "annulus": np.ones(len(X), dtype=bool), "elsewhere": np.ones(len(X), dtype=bool)}
    vals = {"good": np.abs(s_cov), "bad": np.abs(s_cov), "annulus": s_ann, "elsewhere": s_rest}
    failures, checks = [], {}
    tol = 1e-12
    for name in ("good", "bad", "annulus", "elsewhere"):
        margin = np.where(masks[name], maj[name] - vals[name], np.inf)
        worst = int(np.argmin(margin)) if len(X) else 0
        checks[name] = float(margin[worst]) if len(X) and np.isfinite(margin[worst]) else None
        if len(X) and margin[worst] < -tol * max(1.0, float(np.abs(maj[name]).max(initial=0))):
            failures.append((name, X.points[worst], float(margin[worst])))
    h1 = terms.sum(axis=0)
    hp = h1 + e3 * fx.M * N * fx.h2
    m_nonneg = np.where(in_C1, hp, np.inf)
    m_badlow = np.where(covered & ~fx.good, hp - 1, np.inf)
    for name, margin in (("nonnegative-C1", m_nonneg), ("bad-lower", m_badlow)):
        worst = int(np.argmin(margin)) if len(X) else 0
        checks[name] = float(margin[worst]) if len(X) and np.isfinite(margin[worst]) else None
        if len(X) and margin[worst] < -tol:
            failures.append((name, X.points[worst], float(margin[worst])))
    mass = float(math.fsum(mu * hp))
    majorant_mass = float(math.fsum(mu * (np.where(covered & fx.good, maj["good"], 0)
                                          + np.where(covered & ~fx.good, maj["bad"], 0)
                                          + maj["annulus"] + maj["elsewhere"]
                                          + e3 * fx.M * N * fx.h2)))
    checks["mass"] = fx.eps / 2 - mass
    if not mass < fx.eps / 2:
        failures.append(("mass", None, fx.eps / 2 - mass))
    return BadSetReport(failures, fx.validate(), checks, mass, majorant_mass, fx.eps)
