import numpy as np
import pytest

from conftest import open_path, square
from isoradial.errors import HomotopyError, ParameterError
from isoradial.homotopy import (
    PunctureGrid,
    ReducedWord,
    canonical_rotation,
    class_report,
    dCN_compare,
    dH_compare,
    dSS_quad_compare,
    free_reduce,
    homotopy_class,
    loop_distance,
    quad_family,
    reduce,
    word_of_loop,
)
from isoradial.loops import trace_loops
from isoradial.rcm import Configuration

# two anchors joined by one segment from (0, 0) to (1, 0)
PAIR = PunctureGrid.with_anchors([(0.0, 0.0), (1.0, 0.0)], [(0, 1)])
AROUND_FIRST = np.array([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])


def test_free_and_cyclic_reduction():
    assert free_reduce([1, 2, -2, 3]) == [1, 3]
    assert reduce((1, -1)).is_trivial
    assert reduce((1, 2, -1)) == ReducedWord((2,))
    assert reduce((2, 1, 3)) == ReducedWord((1, 3, 2))
    assert reduce((3, 1, 2)) == reduce((1, 2, 3))
    with pytest.raises(HomotopyError):
        free_reduce([1, 0])


def test_canonical_rotation_is_least():
    assert canonical_rotation((3, -1, 2)) == (-1, 2, 3)
    assert canonical_rotation(()) == ()


def test_inverse():
    word = reduce((1, 2))
    assert word.inverse() == reduce((-2, -1))
    assert reduce(word.letters + word.inverse().letters).is_trivial
    assert len(word) == 2
    assert word.to_list() == [1, 2]


def test_word_of_small_loop():
    assert word_of_loop(AROUND_FIRST, PAIR) == (1,)
    assert homotopy_class(AROUND_FIRST, PAIR) == ReducedWord((1,))
    assert homotopy_class(AROUND_FIRST[::-1], PAIR) == ReducedWord((-1,))


def test_homotopic_shapes_share_a_class():
    tilted = np.array([(0.1, -0.6), (0.6, 0.1), (-0.1, 0.6), (-0.6, -0.1)])
    assert homotopy_class(tilted, PAIR) == homotopy_class(AROUND_FIRST, PAIR)
    around_both = np.array([(-0.5, -0.5), (1.5, -0.5), (1.5, 0.5), (-0.5, 0.5)])
    assert homotopy_class(around_both, PAIR).is_trivial
    assert PAIR.inside_count(around_both) == 2
    assert PAIR.inside_count(AROUND_FIRST) == 1


def test_loop_through_a_puncture_is_rejected():
    bad = np.array([(0.0, 0.0), (0.5, -0.5), (0.5, 0.5)])
    with pytest.raises(HomotopyError):
        word_of_loop(bad, PAIR)
    with pytest.raises(HomotopyError):
        word_of_loop(np.array([(0.0, 1.0), (1.0, 1.0)]), PAIR)


def test_regular_grid():
    grid = PunctureGrid.regular(0.5)
    assert len(grid.points) == 81
    assert grid.num_letters == 2 * 9 * 8
    with pytest.raises(ParameterError):
        PunctureGrid.regular(0.0)
    with pytest.raises(HomotopyError):
        PunctureGrid.with_anchors([(0, 0), (0, 0)], [(0, 1)])


def _ring(width=5, height=8):
    # primal cycle around (4, 4); everything else closed
    lat = square(width, height)
    ring = [(4, 2), (5, 3), (6, 4), (5, 5), (4, 6), (3, 5), (2, 4), (3, 3), (4, 2)]
    return lat, open_path(lat, ring)


RING_GRID = PunctureGrid.with_anchors([(3.7, 4.15), (4.3, 4.15), (8.3, 4.15)], [(0, 1), (1, 2)])


def test_class_report_on_a_ring():
    _, cfg = _ring()
    report = class_report(trace_loops(cfg), RING_GRID)
    assert report == {
        "F0": [{"word": [2], "count": 1}],
        "F1": [{"word": [2], "count": 2}],
    }


def test_dH_detects_a_broken_ring():
    lat, cfg = _ring()
    family = trace_loops(cfg)
    assert dH_compare(family, family, RING_GRID)
    broken = open_path(lat, [(4, 2), (5, 3), (6, 4), (5, 5), (4, 6), (3, 5), (2, 4), (3, 3)])
    assert not dH_compare(family, trace_loops(broken), RING_GRID)


def test_loop_distance():
    square_loop = AROUND_FIRST
    assert loop_distance(square_loop, square_loop) == 0.0
    assert loop_distance(square_loop, np.roll(square_loop, 2, axis=0)) == 0.0
    assert loop_distance(square_loop, square_loop + np.array([0.3, 0.0])) == pytest.approx(0.3)


def test_dCN_compare():
    _, cfg = _ring()
    family = trace_loops(cfg)
    assert dCN_compare(family, family, 0.1, center=(4.0, 4.0))
    empty = trace_loops(Configuration.empty(cfg.graph))
    assert not dCN_compare(family, empty, 0.1, center=(4.0, 4.0))
    with pytest.raises(ParameterError):
        dCN_compare(family, family, 0.0)


def test_quad_family_and_crossing_comparison():
    quads = quad_family((0.0, 0.0, 9.0, 8.0), count=3)
    assert len(quads) == 2 * 3 * 3 * 2
    lat = square(5, 8)
    full, empty = Configuration.full(lat), Configuration.empty(lat)
    assert dSS_quad_compare(full, full, quads) == 0.0
    assert dSS_quad_compare(full, empty, quads) > 0.0
    assert dSS_quad_compare(full, empty, []) == 0.0
