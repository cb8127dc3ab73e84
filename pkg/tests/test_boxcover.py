import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fiberdensity.boxcover import (THICKENING, Box, CompactRegion, NeighborhoodFamily, TorusQuotient,
                                   build_cover, dyadic_boxes, exact_multiplicity, multiplicity_at,
                                   select_meeting, thicken, verify_cover)
from fiberdensity.errors import ConfigurationError, LevelTooCoarse
from fiberdensity.fixtures import random_region


def test_dyadic_counts():
    assert len(list(dyadic_boxes(TorusQuotient(1, 1), 1))) == 2
    assert len(list(dyadic_boxes(TorusQuotient(2, 0), 2, [(0, 1), (0, 1)]))) == 16


def test_adjacent_grid_boxes_share_only_boundary():
    a, b = list(dyadic_boxes(TorusQuotient(1, 0), 2, [(0, F(1, 2))]))[:2]
    assert a.interval(0)[1] == b.interval(0)[0]


def test_thickening_exact():
    assert THICKENING == F(11, 10)
    assert thicken(Box((F(1, 8),), F(1, 4))).width == F(11, 40)
    assert thicken(Box((F(1, 4),), F(1, 2)), TorusQuotient(1, 1)).width == F(11, 20)
    with pytest.raises(LevelTooCoarse):
        thicken(Box((F(1, 2),), F(1)), TorusQuotient(1, 1))


def test_select_meeting_edge_cases():
    sp = TorusQuotient(1, 0)
    pt = CompactRegion(sp, (((F(3, 8), F(3, 8)),),))
    sel = select_meeting(pt, 2)
    # the cell [1/4, 1/2] plus neighbours whose thickened closure reaches 3/8: none at level 2
    assert [b.index for b in sel] == [(1,)]
    edge = CompactRegion(sp, (((F(1, 4), F(1, 4)),),))
    assert [b.index for b in select_meeting(edge, 2)] == [(0,), (1,)]
    assert select_meeting(CompactRegion(sp, ()), 2) == []
    torus = TorusQuotient(2, 2)
    whole = CompactRegion(torus, (((0, 1), (0, 1)),))
    assert len(select_meeting(whole, 3)) == 64


def test_cover_unit_interval():
    sp = TorusQuotient(1, 0)
    K = CompactRegion(sp, (((0, 1),),))
    fam = NeighborhoodFamily.constant(F(3, 10))
    cover = build_cover(sp, K, fam)
    assert cover.multiplicity <= 2
    assert all(verify_cover(cover, K, fam)[k] for k in ("covered", "subordinate", "widths_exact",
                                                         "complete", "multiplicity_ok"))


def test_cover_full_torus():
    sp = TorusQuotient(2, 2)
    K = CompactRegion(sp, (((0, 1), (0, 1)),))
    cover = build_cover(sp, K, NeighborhoodFamily.constant(F(2, 5)))
    assert cover.multiplicity <= 4


def test_cover_of_a_point():
    sp = TorusQuotient(2, 0)
    K = CompactRegion.from_points(sp, [(F(3, 7), F(2, 9))])
    cover = build_cover(sp, K, NeighborhoodFamily.constant(F(1, 4)))
    assert len(cover.boxes) == 1 and cover.multiplicity == 1


def test_multiplicity_small_cases():
    assert exact_multiplicity([Box((0,), 1), Box((3,), 1)])[0] == 1
    count, pt = exact_multiplicity([Box((0,), 1), Box((1,), 1)])
    assert count == 2 and pt == (F(1, 2),)
    circle = TorusQuotient(1, 1)
    boxes = [thicken(b, circle) for b in dyadic_boxes(circle, 3)]
    assert exact_multiplicity(boxes, circle)[0] == 2


def test_invalid_family_and_region():
    with pytest.raises(ConfigurationError):
        NeighborhoodFamily.constant(0)
    with pytest.raises(ConfigurationError):
        CompactRegion(TorusQuotient(1, 0), (((1, 0),),))


def _brute_multiplicity(boxes, space):
    """Max count over every combination of box endpoints and their midpoints."""
    n = space.n
    axes = []
    for i in range(n):
        ends = sorted({e for b in boxes for e in b.interval(i)})
        mids = [(a + b) / 2 for a, b in zip(ends, ends[1:])]
        axes.append(ends + mids)
    return max(multiplicity_at(boxes, p, space) for p in itertools.product(*axes))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 2), st.lists(st.tuples(st.integers(0, 16), st.integers(0, 16), st.integers(1, 6)),
                                   min_size=1, max_size=7))
def test_multiplicity_matches_brute_force(n, raw):
    space = TorusQuotient(n, 0)
    boxes = [Box(tuple(F(c, 8) for c in (x, y)[:n]), F(w, 8)) for x, y, w in raw]
    count, pt = exact_multiplicity(boxes, space)
    assert count == _brute_multiplicity(boxes, space)
    assert multiplicity_at(boxes, pt, space) == count


@pytest.mark.parametrize("seed", range(15))
def test_random_regions_certified(seed):
    rng = np.random.default_rng(seed)
    space, K, fam = random_region(rng)
    cover = build_cover(space, K, fam)
    v = verify_cover(cover, K, fam)
    assert v["covered"] and v["subordinate"] and v["widths_exact"] and v["complete"]
    assert cover.multiplicity <= 2 ** space.n
    assert all(b.width == THICKENING / 2 ** cover.k_final for b in cover.boxes)
    assert cover.to_csv().startswith("box_id,")
