"""Finite models of locally compact spaces, proper maps and Radon measures.

A space is an ordered tuple of opaque point ids.  An optional designated
``infinity_point`` plays the role of the point added by one-point
compactification: every admissible function vanishes there and every
admissible measure gives it zero mass.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError

REL_MASS_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FiniteSpace:
    points: tuple
    infinity_point: Hashable | None = None
    labels: Mapping[Hashable, str] | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        index = {}
        for i, p in enumerate(pts):
            if p in index:
                raise ConfigurationError(f"duplicate point id {p!r}")
            index[p] = i
        if self.infinity_point is not None and self.infinity_point not in index:
            raise ConfigurationError(
                f"infinity point {self.infinity_point!r} is not a point of the space")
        object.__setattr__(self, "_index", index)

    def __len__(self):
        return len(self.points)

    def __contains__(self, point):
        return point in self._index

    def index(self, point) -> int:
        try:
            return self._index[point]
        except KeyError:
            raise ConfigurationError(f"unknown point id {point!r}") from None

    def indices(self, points: Iterable) -> np.ndarray:
        return np.array([self.index(p) for p in points], dtype=int)

    @property
    def infinity_index(self) -> int | None:
        if self.infinity_point is None:
            return None
        return self._index[self.infinity_point]

    @property
    def finite_points(self) -> tuple:
        return tuple(p for p in self.points if p != self.infinity_point)

    def finite_mask(self) -> np.ndarray:
        mask = np.ones(len(self), dtype=bool)
        if self.infinity_point is not None:
            mask[self.infinity_index] = False
        return mask

    def subspace(self, points: Sequence) -> "FiniteSpace":
        for p in points:
            self.index(p)
        inf = self.infinity_point if self.infinity_point in points else None
        return FiniteSpace(tuple(points), inf)


@dataclass(frozen=True)
class FiberedMap:
    source: FiniteSpace
    target: FiniteSpace
    assignment: Mapping[Hashable, Hashable]
    # target index of each source point, in source order
    image_index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        missing = [x for x in self.source.points if x not in self.assignment]
        if missing:
            raise ConfigurationError(f"map is not total; unmapped points {missing!r}")
        idx = np.array([self.target.index(self.assignment[x]) for x in self.source.points],
                       dtype=int)
        s_inf, t_inf = self.source.infinity_point, self.target.infinity_point
        if s_inf is not None and t_inf is not None and self.assignment[s_inf] != t_inf:
            raise ConfigurationError("infinity must map to infinity")
        object.__setattr__(self, "assignment", dict(self.assignment))
        object.__setattr__(self, "image_index", _frozen(idx))

    def __call__(self, x):
        return self.assignment[x]

    @property
    def image(self) -> tuple:
        hit = set(self.image_index.tolist())
        return tuple(y for i, y in enumerate(self.target.points) if i in hit)

    def is_surjective(self) -> bool:
        return len(set(self.image_index.tolist())) == len(self.target)


def fibers_of(fmap: FiberedMap) -> dict:
    """Partition of the source into fibers, keyed by target point.

    Every target point appears as a key (possibly with an empty fiber); fiber
    members keep source order.
    """
    fibers = {y: [] for y in fmap.target.points}
    for x in fmap.source.points:
        fibers[fmap.assignment[x]].append(x)
    return fibers


@dataclass(frozen=True)
class WeightedMeasure:
    space: FiniteSpace
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.space),):
            raise ConfigurationError(
                f"expected {len(self.space)} weights, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ConfigurationError("weights must be finite")
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def from_mapping(cls, space: FiniteSpace, weights: Mapping) -> "WeightedMeasure":
        return cls(space, np.array([float(weights.get(p, 0.0)) for p in space.points]))

    @classmethod
    def zero(cls, space: FiniteSpace) -> "WeightedMeasure":
        return cls(space, np.zeros(len(space)))

    def weight(self, point) -> float:
        return float(self.weights[self.space.index(point)])

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def mass_of(self, points: Iterable) -> float:
        return float(math.fsum(self.weights[self.space.indices(points)]))

    def violations(self) -> list[str]:
        out = []
        for p, w in zip(self.space.points, self.weights):
            if w < 0:
                out.append(f"negative weight {w!r} at {p!r}")
        inf = self.space.infinity_point
        if inf is not None and self.weight(inf) != 0.0:
            out.append(f"infinity-mass violation: weight {self.weight(inf)!r} at {inf!r}")
        return out


def pushforward_measure(fmap: FiberedMap, mu: WeightedMeasure) -> WeightedMeasure:
    if mu.space != fmap.source:
        raise ConfigurationError("measure does not live on the source of the map")
    out = np.zeros(len(fmap.target))
    # fsum per fiber keeps mass preservation exact to rounding of the inputs
    fibers: dict[int, list[float]] = {}
    for w, j in zip(mu.weights, fmap.image_index):
        fibers.setdefault(int(j), []).append(float(w))
    for j, ws in fibers.items():
        out[j] = math.fsum(ws)
    return WeightedMeasure(fmap.target, out)


@dataclass(frozen=True)
class FiberedSystem:
    """A fiber-finite map with a measure upstairs; the measure downstairs is derived."""

    map: FiberedMap
    measure_upstairs: WeightedMeasure
    measure_downstairs: WeightedMeasure = field(init=False)

    def __post_init__(self):
        if self.measure_upstairs.space != self.map.source:
            raise ConfigurationError("upstairs measure must live on the source space")
        object.__setattr__(self, "measure_downstairs",
                           pushforward_measure(self.map, self.measure_upstairs))

    @property
    def source(self) -> FiniteSpace:
        return self.map.source

    @property
    def target(self) -> FiniteSpace:
        return self.map.target

    def fibers(self) -> dict:
        return fibers_of(self.map)

    # -- serialization -------------------------------------------------
    def to_json(self) -> dict:
        doc = {
            "points": list(self.source.points),
            "infinity": self.source.infinity_point,
            "map": {str(x): self.map.assignment[x] for x in self.source.points},
            "weights": {str(x): float(w) for x, w in
                        zip(self.source.points, self.measure_upstairs.weights)},
        }
        if not self.map.is_surjective() or list(self.target.points) != _image_order(self.map):
            doc["target"] = {"points": list(self.target.points),
                             "infinity": self.target.infinity_point}
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "FiberedSystem":
        try:
            points = list(doc["points"])
            mapping = dict(doc["map"])
            weights = dict(doc.get("weights", {}))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed system document: {exc}") from None
        source = FiniteSpace(tuple(points), doc.get("infinity"))
        if "target" in doc:
            tgt = doc["target"]
            target = FiniteSpace(tuple(tgt["points"]), tgt.get("infinity"))
        else:
            order = []
            for x in points:
                y = mapping.get(x)
                if y not in order:
                    order.append(y)
            t_inf = mapping.get(source.infinity_point) if source.infinity_point is not None else None
            target = FiniteSpace(tuple(order), t_inf)
        fmap = FiberedMap(source, target, mapping)
        return cls(fmap, WeightedMeasure.from_mapping(source, weights))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _image_order(fmap: FiberedMap) -> list:
    order = []
    for x in fmap.source.points:
        y = fmap.assignment[x]
        if y not in order:
            order.append(y)
    return order


def validate_system(sys: FiberedSystem, downstairs: WeightedMeasure | None = None) -> list[str]:
    """Diagnostics for every violated invariant; empty iff the system is valid.

    ``downstairs`` lets a caller check an externally supplied base measure
    (for instance one read from a file) against the recomputed pushforward.
    """
    report = []
    report.extend(f"upstairs: {v}" for v in sys.measure_upstairs.violations())
    claimed = sys.measure_downstairs if downstairs is None else downstairs
    report.extend(f"downstairs: {v}" for v in claimed.violations())
    expected = pushforward_measure(sys.map, sys.measure_upstairs)
    for y, got, want in zip(sys.target.points, claimed.weights, expected.weights):
        if abs(got - want) > REL_MASS_TOL * max(1.0, abs(want)):
            report.append(f"pushforward mismatch at {y!r}: {got!r} != {want!r}")
    return report


def make_system(assignment: Mapping, weights: Mapping | Sequence | None = None,
                infinity=None, target_points: Sequence | None = None,
                target_infinity=None) -> FiberedSystem:
    """Convenience builder: ``assignment`` maps source ids to target ids in order."""
    src_pts = tuple(assignment)
    source = FiniteSpace(src_pts, infinity)
    if target_points is None:
        target_points = _ordered_unique(assignment[x] for x in src_pts)
        if infinity is not None and target_infinity is None:
            target_infinity = assignment[infinity]
    target = FiniteSpace(tuple(target_points), target_infinity)
    fmap = FiberedMap(source, target, assignment)
    if weights is None:
        w = np.ones(len(source))
        if infinity is not None:
            w[source.infinity_index] = 0.0
        mu = WeightedMeasure(source, w)
    elif isinstance(weights, Mapping):
        mu = WeightedMeasure.from_mapping(source, weights)
    else:
        mu = WeightedMeasure(source, np.asarray(weights, dtype=float))
    return FiberedSystem(fmap, mu)


def _ordered_unique(items) -> tuple:
    seen = []
    for it in items:
        if it not in seen:
            seen.append(it)
    return tuple(seen)
