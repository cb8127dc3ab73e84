"""Two atoms over one base point: why pullbacks alone cannot separate a fiber.

With ``X = {pi1, pi2}`` over a single ``y0``, any pair ``g, h`` on the base with
``|1_{pi1} - p*g| <= p*h`` forces ``h(y0) >= 1/2`` (since
``|1 - g| + |g| >= 1``), hence mass at least ``(d1 + d2)/2``.
"""
from __future__ import annotations

import operator
from dataclasses import dataclass, field

import numpy as np

from .envelope import closure_membership, closure_threshold
from .errors import ConfigurationError
from .functions import BaseAlgebra, PullbackModule, SampledFunction
from .spaces import FiberedMap, FiberedSystem, FiniteSpace, WeightedMeasure

_OPS = {">=": operator.ge, "<=": operator.le, ">": operator.gt, "<": operator.lt}


@dataclass
class ObstructionFixture:
    system: FiberedSystem
    d1: float
    d2: float
    pullback_module: PullbackModule
    separating_module: PullbackModule

    @property
    def phi(self) -> SampledFunction:
        return SampledFunction.indicator(self.system.source, ["pi1"])

    @property
    def lp_exact(self) -> float:
        return (self.d1 + self.d2) / 2

    @property
    def weak_bound(self) -> float:
        return self.d1 / 2

    def module(self, choice: str) -> PullbackModule:
        if choice == "pullback":
            return self.pullback_module
        if choice == "separating":
            return self.separating_module
        raise ConfigurationError(f"unknown module choice {choice!r}")


def build_fixture(d1: float, d2: float, extra_points: int = 0) -> ObstructionFixture:
    """Fiber ``{pi1, pi2}`` over ``y0`` plus ``extra_points`` unit-mass singleton fibers."""
    if not (d1 > 0 and d2 > 0):
        raise ConfigurationError("atom masses must be positive")
    if extra_points < 0:
        raise ConfigurationError("extra_points must be nonnegative")
    xs = ["pi1", "pi2"] + [f"e{k}" for k in range(extra_points)]
    ys = ["y0"] + [f"z{k}" for k in range(extra_points)]
    X, Y = FiniteSpace(tuple(xs)), FiniteSpace(tuple(ys))
    mapping = {"pi1": "y0", "pi2": "y0"} | {f"e{k}": f"z{k}" for k in range(extra_points)}
    mu = WeightedMeasure(X, np.array([d1, d2] + [1.0] * extra_points))
    system = FiberedSystem(FiberedMap(X, Y, mapping), mu)
    A = BaseAlgebra.all_functions(Y)
    one = SampledFunction.constant(X)
    pull = PullbackModule(system, A, (one,), closure_degree=1)
    sep = PullbackModule(system, A, (one, SampledFunction.indicator(X, ["pi1"])), closure_degree=1)
    return ObstructionFixture(system, float(d1), float(d2), pull, sep)


def infeasibility_threshold(fx: ObstructionFixture, module_choice: str = "pullback",
                            resolution: float = 1e-4) -> float:
    """Smallest ``eps`` (to ``resolution``) at which ``1_{pi1}`` has a closure certificate."""
    return closure_threshold(fx.phi, fx.module(module_choice), fx.system.measure_upstairs, resolution)


@dataclass
class TraceStep:
    claim: str
    lhs: float
    op: str
    rhs: float

    @property
    def holds(self) -> bool:
        return _OPS[self.op](self.lhs, self.rhs)

    def to_json(self) -> dict:
        return {"claim": self.claim, "lhs": self.lhs, "op": self.op, "rhs": self.rhs,
                "holds": self.holds}


@dataclass
class ProofTrace:
    eps: float
    steps: list
    contradiction: bool
    witness: dict | None = None
    notes: list = field(default_factory=list)

    def render(self) -> str:
        lines = [f"eps = {self.eps!r}"]
        for k, s in enumerate(self.steps, 1):
            lines.append(f"{k:2d}. {s.claim}: {s.lhs!r} {s.op} {s.rhs!r}  [{'ok' if s.holds else 'FAILS'}]")
        lines.extend(self.notes)
        lines.append("contradiction" if self.contradiction else "no contradiction at this eps")
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {"eps": self.eps, "contradiction": self.contradiction,
                "steps": [s.to_json() for s in self.steps], "witness": self.witness,
                "notes": self.notes}


def verify_trace(trace: ProofTrace) -> bool:
    """Re-evaluate every step from its recorded numbers."""
    return all(_OPS[s.op](float(s.lhs), float(s.rhs)) for s in trace.steps)


def contradiction_replay(fx: ObstructionFixture, eps: float,
                         g_samples=(0.0, 0.25, 0.5, 1.0, 2.0, -1.0, 0.5 + 0.5j, 1j)) -> ProofTrace:
    """Replay the argument at ``eps`` for the pullback module.

    Suppose ``|1_{pi1} - p*g| <= p*h`` with ``mu(p*h) < eps``.  At ``pi1`` and
    ``pi2``: ``|1 - g(y0)| <= h(y0)`` and ``|g(y0)| <= h(y0)``, so
    ``2 h(y0) >= |1 - g(y0)| + |g(y0)| >= 1`` whatever ``g`` is.
    """
    d1, d2 = fx.d1, fx.d2
    steps = []
    for g in g_samples:
        steps.append(TraceStep(f"|1 - g| + |g| >= 1 at g = {g!r}", abs(1 - g) + abs(g), ">=", 1.0))
    hmin = 0.5
    steps.append(TraceStep("h(y0) >= (|1 - g(y0)| + |g(y0)|)/2 >= 1/2", hmin, ">=", 0.5))
    steps.append(TraceStep("mu(p*h) >= h(y0) (d1 + d2)", hmin * (d1 + d2), ">=", fx.lp_exact))
    steps.append(TraceStep("(d1 + d2)/2 >= d1/2 (weaker bound)", fx.lp_exact, ">=", fx.weak_bound))
    contradiction = eps < fx.lp_exact
    trace = ProofTrace(eps, steps, contradiction)
    if contradiction:
        steps.append(TraceStep("eps below the forced mass", eps, "<", fx.lp_exact))
        if eps < fx.weak_bound:
            trace.notes.append("eps is also below the weaker bound d1/2")
    else:
        rep = closure_membership(fx.phi, fx.pullback_module, fx.system.measure_upstairs, [eps])
        rung = rep.rungs[0]
        trace.notes.append("forced mass does not exceed eps")
        if rung.feasible:
            trace.witness = {"m1": rung.m1.to_json("X"), "m2": rung.m2.to_json("X"), "mass": rung.mass}
            steps.append(TraceStep("LP witness mass below eps", rung.mass, "<", eps))
    return trace
