"""Covering by thickened dyadic boxes on R^n / Z^m with bounded overlap.

Everything is exact: coordinates and widths are ``Fraction`` values.  The
first ``m`` axes are circles of period 1.  A box is the open set
``|y_i - c_i| < w/2`` for all ``i``; overlaps are counted on closures.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

from .errors import ConfigurationError, LevelTooCoarse, PreconditionViolation, ResolutionError

THICKENING = Fraction(11, 10)
MAX_LEVEL = 40


def _q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12) if x != int(x) else Fraction(int(x))
    return Fraction(x)


@dataclass(frozen=True)
class TorusQuotient:
    n: int
    m: int = 0

    def __post_init__(self):
        if not 0 <= self.m <= self.n or self.n < 1:
            raise ConfigurationError(f"need 0 <= m <= n and n >= 1, got n={self.n}, m={self.m}")

    @property
    def dim(self) -> int:
        return self.n

    def circular(self, axis: int) -> bool:
        return axis < self.m

    def normalize(self, point: Sequence) -> tuple:
        return tuple(_q(c) % 1 if self.circular(i) else _q(c) for i, c in enumerate(point))


# ----------------------------------------------------------------------
# exact interval helpers


def _circ_dist(a: Fraction, b: Fraction) -> Fraction:
    d = (a - b) % 1
    return min(d, 1 - d)


def _intervals_meet(space: TorusQuotient, axis: int, a: tuple, b: tuple) -> bool:
    """Do closed intervals ``a`` and ``b`` on ``axis`` intersect?"""
    (a0, a1), (b0, b1) = a, b
    if not space.circular(axis):
        return max(a0, b0) <= min(a1, b1)
    if a1 - a0 >= 1 or b1 - b0 >= 1:
        return True
    # shift b so its lower end lands in [a0, a0 + 1)
    s = math.floor(a0 - b0)
    for t in (s - 1, s, s + 1, s + 2):
        if max(a0, b0 + t) <= min(a1, b1 + t):
            return True
    return False


def _interval_meet_point(space: TorusQuotient, axis: int, a: tuple, b: tuple) -> Fraction | None:
    """A point of the intersection of closed intervals (in ``a``'s coordinates)."""
    (a0, a1), (b0, b1) = a, b
    if not space.circular(axis):
        lo = max(a0, b0)
        return lo if lo <= min(a1, b1) else None
    if b1 - b0 >= 1:
        return a0
    if a1 - a0 >= 1:
        return b0 % 1
    s = math.floor(a0 - b0)
    for t in (s - 1, s, s + 1, s + 2):
        lo = max(a0, b0 + t)
        if lo <= min(a1, b1 + t):
            return lo % 1
    return None


def _contains(space: TorusQuotient, axis: int, iv: tuple, t: Fraction) -> bool:
    lo, hi = iv
    if not space.circular(axis):
        return lo <= t <= hi
    if hi - lo >= 1:
        return True
    return (t - lo) % 1 <= hi - lo


# ----------------------------------------------------------------------
# boxes and regions


@dataclass(frozen=True)
class Box:
    center: tuple
    width: Fraction
    level: int | None = None
    index: tuple | None = None      # dyadic grid index, when from a grid

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(_q(c) for c in self.center))
        object.__setattr__(self, "width", _q(self.width))
        if self.width <= 0:
            raise ConfigurationError("box width must be positive")

    def interval(self, axis: int) -> tuple:
        h = self.width / 2
        c = self.center[axis]
        return (c - h, c + h)

    def intervals(self) -> list[tuple]:
        return [self.interval(i) for i in range(len(self.center))]


@dataclass(frozen=True)
class CompactRegion:
    """Finite union of closed boxes, each given by per-axis ``(lo, hi)``."""
    space: TorusQuotient
    boxes: tuple = ()

    def __post_init__(self):
        out = []
        for b in self.boxes:
            ivs = tuple((_q(lo), _q(hi)) for lo, hi in b)
            if len(ivs) != self.space.n:
                raise ConfigurationError("region box has the wrong dimension")
            if any(lo > hi for lo, hi in ivs):
                raise ConfigurationError("region box has lo > hi")
            out.append(ivs)
        object.__setattr__(self, "boxes", tuple(out))

    @classmethod
    def from_points(cls, space: TorusQuotient, points: Iterable[Sequence], radius=0) -> "CompactRegion":
        """Closed sup-metric ``radius``-neighborhood of a point cloud."""
        r = _q(radius)
        if r < 0:
            raise ConfigurationError("radius must be nonnegative")
        return cls(space, tuple(tuple((_q(c) - r, _q(c) + r) for c in p) for p in points))

    @property
    def empty(self) -> bool:
        return not self.boxes

    def contains(self, point: Sequence) -> bool:
        p = tuple(_q(c) for c in point)
        return any(all(_contains(self.space, i, iv, p[i]) for i, iv in enumerate(b)) for b in self.boxes)

    def sample_points(self, step: Fraction) -> Iterator[tuple]:
        """Grid points of each region box at spacing ``step`` (endpoints included)."""
        for b in self.boxes:
            axes = []
            for lo, hi in b:
                k = int((hi - lo) / step)
                pts = [lo + j * step for j in range(k + 1)]
                if pts[-1] != hi:
                    pts.append(hi)
                axes.append(pts)
            yield from itertools.product(*axes)


@dataclass(frozen=True)
class NeighborhoodFamily:
    """``U_x`` is the open sup-metric ball of radius ``radius(x)`` around ``x``.

    ``r_min`` must bound the radii below on the region.
    """
    r_min: Fraction
    radius_function: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "r_min", _q(self.r_min))
        if self.r_min <= 0:
            raise ConfigurationError("r_min must be positive")

    @classmethod
    def constant(cls, radius) -> "NeighborhoodFamily":
        return cls(_q(radius))

    def radius(self, x: tuple) -> Fraction:
        if self.radius_function is None:
            return self.r_min
        r = _q(self.radius_function(x))
        if r < self.r_min:
            raise ConfigurationError(f"radius {r} at {x} is below r_min {self.r_min}")
        return r

    def closure_inside(self, space: TorusQuotient, box: Box, x: tuple) -> bool:
        """Exact test ``closure(box) ⊆ U_x``."""
        r = self.radius(x)
        for i in range(space.n):
            c = box.center[i]
            d = _circ_dist(c, x[i]) if space.circular(i) else abs(c - x[i])
            if not d + box.width / 2 < r:
                return False
        return True


# ----------------------------------------------------------------------
# dyadic families


def _level_width(k: int) -> Fraction:
    return Fraction(1, 2 ** k)


def dyadic_boxes(space: TorusQuotient, k: int, window: Sequence | None = None) -> Iterator[Box]:
    """Grid boxes of width ``2^-k`` centered at ``(j + 1/2) 2^-k``.

    Circular axes run over all ``2^k`` cells; other axes need a closed
    ``window`` ``[(lo, hi), ...]`` (cells whose closure meets it).
    """
    if k < 0:
        raise ConfigurationError("level must be nonnegative")
    h = _level_width(k)
    ranges = []
    for i in range(space.n):
        if space.circular(i):
            ranges.append(range(2 ** k))
        else:
            if window is None:
                raise PreconditionViolation("a window is needed on non-circular axes")
            lo, hi = _q(window[i][0]), _q(window[i][1])
            j0 = math.floor(lo / h)
            j1 = math.ceil(hi / h) - 1
            ranges.append(range(j0, max(j0, j1) + 1))
    for idx in itertools.product(*ranges):
        yield Box(tuple((j + Fraction(1, 2)) * h for j in idx), h, k, idx)


def thicken(box: Box, space: TorusQuotient | None = None) -> Box:
    """Same center, width times exactly 11/10."""
    w = box.width * THICKENING
    if space is not None and space.m > 0 and w >= 1:
        raise LevelTooCoarse(f"thickened width {w} wraps a circular axis")
    return Box(box.center, w, box.level, box.index)


def _candidate_indices(space: TorusQuotient, k: int, region_box: tuple) -> list[range | list]:
    """Grid indices per axis whose thickened closure may meet a region box."""
    h = _level_width(k)
    half = THICKENING / 2
    out = []
    for i, (lo, hi) in enumerate(region_box):
        # (j + 1/2) h - 11/20 h <= hi  and  (j + 1/2) h + 11/20 h >= lo
        j0 = math.ceil(lo / h - Fraction(1, 2) - half)
        j1 = math.floor(hi / h - Fraction(1, 2) + half)
        if space.circular(i):
            n = 2 ** k
            if j1 - j0 + 1 >= n:
                out.append(range(n))
            else:
                out.append(sorted({j % n for j in range(j0, j1 + 1)}))
        else:
            out.append(range(j0, j1 + 1))
    return out


def select_meeting(K: CompactRegion, k: int) -> list[Box]:
    """Thickened level-``k`` boxes whose closure meets ``K`` (exact)."""
    space = K.space
    h = _level_width(k)
    seen, out = set(), []
    for rb in K.boxes:
        for idx in itertools.product(*_candidate_indices(space, k, rb)):
            if idx in seen:
                continue
            box = thicken(Box(tuple((j + Fraction(1, 2)) * h for j in idx), h, k, idx), space)
            if all(_intervals_meet(space, i, box.interval(i), rb[i]) for i in range(space.n)):
                seen.add(idx)
                out.append(box)
    out.sort(key=lambda b: b.index)
    return out


def _witness_in(K: CompactRegion, box: Box) -> tuple | None:
    space = K.space
    for rb in K.boxes:
        pt = []
        for i in range(space.n):
            t = _interval_meet_point(space, i, box.interval(i), rb[i])
            if t is None:
                break
            pt.append(t)
        else:
            return space.normalize(pt)
    return None


def exact_multiplicity(boxes: Sequence[Box], space: TorusQuotient | None = None) -> tuple[int, tuple | None]:
    """Largest number of closed boxes sharing a point, with a point attaining it.

    A deepest point can be moved, axis by axis, down to the largest lower
    endpoint below it without leaving any box, so only lower endpoints need
    to be tried; the sweep recurses axis by axis over the boxes still alive.
    """
    if not boxes:
        return 0, None
    n = len(boxes[0].center)
    space = TorusQuotient(n, 0) if space is None else space
    ivs = [b.intervals() for b in boxes]

    def sweep(axis: int, alive: list[int], prefix: list) -> tuple[int, list]:
        if axis == n:
            return len(alive), prefix
        lows = sorted({(ivs[j][axis][0] % 1) if space.circular(axis) else ivs[j][axis][0] for j in alive})
        best, best_pt = 0, None
        for t in lows:
            sub = [j for j in alive if _contains(space, axis, ivs[j][axis], t)]
            if len(sub) <= best:
                continue
            cnt, pt = sweep(axis + 1, sub, prefix + [t])
            if cnt > best:
                best, best_pt = cnt, pt
        return best, best_pt

    count, pt = sweep(0, list(range(len(boxes))), [])
    return count, tuple(pt)


def multiplicity_at(boxes: Sequence[Box], point: Sequence, space: TorusQuotient) -> int:
    p = tuple(_q(c) for c in point)
    return sum(all(_contains(space, i, b.interval(i), p[i]) for i in range(space.n)) for b in boxes)


@dataclass
class CoverResult:
    space: TorusQuotient
    boxes: list
    k_final: int
    subordination: dict                 # box position -> witness x in K
    multiplicity: int
    multiplicity_witness: tuple | None
    eps: Fraction = Fraction(0)         # the K_eps fattening used
    overlap_counts: list = field(default_factory=list)

    @property
    def bound(self) -> int:
        return 2 ** self.space.n

    def to_json(self) -> dict:
        return {"n": self.space.n, "m": self.space.m, "k_final": self.k_final,
                "eps": str(self.eps), "multiplicity": self.multiplicity, "bound": self.bound,
                "multiplicity_witness": None if self.multiplicity_witness is None
                else [str(c) for c in self.multiplicity_witness],
                "boxes": [{"center": [str(c) for c in b.center], "width": str(b.width),
                           "witness": [str(c) for c in self.subordination[i]]}
                          for i, b in enumerate(self.boxes)]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["box_id"] + [f"center_{i}" for i in range(self.space.n)]
                   + ["width", "witness", "overlap_count"])
        for i, b in enumerate(self.boxes):
            w.writerow([i] + [str(c) for c in b.center] + [str(b.width),
                       " ".join(str(c) for c in self.subordination[i]), self.overlap_counts[i]])
        return buf.getvalue()


def _overlap_counts(space: TorusQuotient, boxes: list[Box]) -> list[int]:
    """Per box, the number of other boxes whose closure meets its closure."""
    pos = {b.index: i for i, b in enumerate(boxes)}
    counts = []
    for b in boxes:
        cnt = 0
        for d in itertools.product((-1, 0, 1), repeat=space.n):
            if not any(d):
                continue
            idx = []
            for i, (j, dj) in enumerate(zip(b.index, d)):
                jj = j + dj
                if space.circular(i):
                    jj %= 2 ** b.level
                idx.append(jj)
            idx = tuple(idx)
            if idx != b.index and idx in pos:
                cnt += 1
        counts.append(cnt)
    return counts


def build_cover(space: TorusQuotient, K: CompactRegion, family: NeighborhoodFamily) -> CoverResult:
    """Finite cover of ``K`` by thickened dyadic boxes subordinate to ``family``.

    ``eps = 3/8 r_min`` so that ``K_eps`` lies inside the union of the
    neighborhoods; the level starts at the first ``k`` whose thickened width is
    at most ``eps`` (closures of selected boxes then lie in ``K_eps`` and are
    below half of ``r_min`` in size).  Boxes whose closure misses every
    neighborhood centered in it trigger a uniform refinement of the level.
    """
    if K.space != space:
        raise ConfigurationError("region lives on another space")
    if K.empty:
        raise PreconditionViolation("region must be nonempty")
    eps = family.r_min * Fraction(3, 8)
    k = 1
    while THICKENING * _level_width(k) > eps:
        k += 1
    while True:
        if k > MAX_LEVEL:
            raise ResolutionError(f"dyadic level would exceed {MAX_LEVEL}")
        boxes = select_meeting(K, k)
        witnesses = {}
        failed = False
        for i, b in enumerate(boxes):
            x = _witness_in(K, b)
            if x is None or not family.closure_inside(space, b, x):
                failed = True
                break
            witnesses[i] = x
        if not failed:
            break
        k += 1
    mult, pt = exact_multiplicity(boxes, space)
    return CoverResult(space, boxes, k, witnesses, mult, pt, eps, _overlap_counts(space, boxes))


def verify_cover(cover: CoverResult, K: CompactRegion, family: NeighborhoodFamily) -> dict:
    """Independent re-verification: coverage on a sample grid, subordination, multiplicity."""
    space = cover.space
    step = _level_width(cover.k_final + 2)
    uncovered = None
    for p in K.sample_points(step):
        q = space.normalize(p)
        inside = any(all((_circ_dist(q[i], b.center[i]) if space.circular(i) else abs(q[i] - b.center[i]))
                         < b.width / 2 for i in range(space.n)) for b in cover.boxes)
        if not inside:
            uncovered = q
            break
    sub_ok = all(K.contains(cover.subordination[i]) and family.closure_inside(space, b, cover.subordination[i])
                 for i, b in enumerate(cover.boxes))
    widths_ok = all(b.width == THICKENING * _level_width(cover.k_final) for b in cover.boxes)
    # every grid cell meeting K must be selected
    selected = {b.index for b in cover.boxes}
    complete = all(b.index in selected for b in select_meeting(K, cover.k_final))
    return {"covered": uncovered is None, "uncovered_point": uncovered, "subordinate": sub_ok,
            "widths_exact": widths_ok, "complete": complete,
            "multiplicity_ok": cover.multiplicity <= cover.bound}
