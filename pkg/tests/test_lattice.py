import math

import numpy as np
import pytest

from conftest import square
from isoradial.errors import LatticeError
from isoradial.lattice import (
    FALLING,
    RISING,
    Topology,
    TrackAngles,
    build_lattice,
    dual_lattice,
    lattice_from_dict,
    medial_graph,
    mixed_angles,
    swapped_lattice,
    top_left,
)


def test_box_counts():
    lat = square(2, 2)
    assert lat.columns == 4
    assert lat.lines == 3
    assert lat.rhombi_per_track == 3
    assert lat.num_edges == 6
    assert lat.num_vertices == 6
    assert sorted(map(tuple, lat.vertex_keys.tolist())) == [(0, 0), (0, 2), (1, 1), (1, 3), (2, 0), (2, 2)]


def test_torus_is_four_regular():
    lat = square(2, 2, topology=Topology.TORUS)
    assert lat.num_edges == 8
    assert lat.num_vertices == 4
    assert np.bincount(lat.endpoints.ravel()).tolist() == [4, 4, 4, 4]
    assert len(lat.boundary_vertices) == 0


def test_cylinder_wraps_lines():
    lat = square(3, 4, topology="CylinderHorizontal")
    assert lat.lines == 4
    assert lat.rhombi_per_track == 5
    # the top track connects back to line 0
    top_ends = lat.vertex_keys[lat.endpoints[lat.rhombus_edge(3, 0)]][:, 0]
    assert set(top_ends.tolist()) == {3, 0}


@pytest.mark.parametrize(
    "angles, width, topology",
    [
        ([math.pi / 2] * 2, 3, Topology.TORUS),
        ([math.pi / 2] * 3, 2, Topology.CYLINDER),
        ([math.pi / 2, math.pi], 2, Topology.BOX),
        ([0.0], 2, Topology.BOX),
        ([math.pi / 2], 0, Topology.BOX),
        ([math.pi / 2] * 2, 1, Topology.BOX),
    ],
)
def test_invalid_lattices(angles, width, topology):
    with pytest.raises(LatticeError):
        build_lattice(angles, width, topology=topology)


def test_orientation_and_angles():
    alpha = math.pi / 3
    lat = build_lattice(TrackAngles.uniform(alpha, 2), 3)
    for e, (j, n, orientation) in enumerate(lat.edge_tags):
        if (j + n) % 2 == 0:
            assert orientation == RISING
            assert lat.angles[e] == pytest.approx(math.pi - alpha)
        else:
            assert orientation == FALLING
            assert lat.angles[e] == pytest.approx(alpha)


def test_edge_lengths_match_coordinates():
    lat = build_lattice(mixed_angles(4, math.pi / 5, beta=2.0, tracks=[1, 2]), 3)
    ends = lat.coords[lat.endpoints]
    measured = np.linalg.norm(ends[:, 0] - ends[:, 1], axis=1)
    np.testing.assert_allclose(measured, lat.edge_lengths(), atol=1e-12)


def test_angles_around_interior_vertex_sum_to_two_pi():
    lat = build_lattice(TrackAngles((0.7, 2.1, 1.3, 0.4)), 4)
    degree = np.bincount(lat.endpoints.ravel(), minlength=lat.num_vertices)
    interior = np.flatnonzero(degree == 4)
    assert len(interior) > 0
    for v in interior:
        incident = (lat.endpoints == v).any(axis=1)
        assert lat.angles[incident].sum() == pytest.approx(2 * math.pi)


def test_dual_lattice_crosses_each_edge():
    lat = build_lattice(TrackAngles((0.9, 1.7, 0.5)), 3)
    dual = dual_lattice(lat)
    assert dual.num_edges == lat.num_edges
    np.testing.assert_allclose(dual.angles, math.pi - lat.angles)
    # primal and dual diagonals of one rhombus share their midpoint
    mid = lat.coords[lat.endpoints].mean(axis=1)
    dual_mid = dual.coords[dual.endpoints].mean(axis=1)
    np.testing.assert_allclose(mid, dual_mid, atol=1e-12)


def test_swapped_and_round_trip():
    lat = build_lattice(TrackAngles((0.5, 1.0, 1.5)), 2)
    swapped = swapped_lattice(lat, 1)
    assert swapped.track_angles.angles == (1.0, 0.5, 1.5)
    assert lattice_from_dict(lat.to_dict()).digest() == lat.digest()
    assert swapped.digest() != lat.digest()
    with pytest.raises(LatticeError):
        lat.track_angles.swapped(0)


def test_mixed_angles():
    angles = TrackAngles.mixed(5, 0.4, beta=1.2, start=3)
    assert angles.angles == (1.2, 1.2, 1.2, 0.4, 0.4)
    assert mixed_angles(3, 0.4, tracks=[1]).angles == (math.pi / 2, 0.4, math.pi / 2)


def test_top_left_neighbour():
    lat = square(3, 3)
    v = lat.vertex(1, 3)
    w = top_left(lat, v)
    assert tuple(lat.vertex_keys[w]) == (2, 2)
    with pytest.raises(LatticeError):
        top_left(lat, lat.vertex(0, 0))


def test_vertex_lookup():
    lat = square(2, 2)
    assert lat.find_vertex(0, 1) is None
    assert lat.find_vertex(5, 0) is None
    with pytest.raises(LatticeError):
        lat.vertex(0, 1)
    torus = square(2, 2, topology=Topology.TORUS)
    assert torus.find_vertex(2, 4) == torus.vertex(0, 0)


def test_medial_graph_degrees():
    lat = square(3, 3)
    medial = medial_graph(lat)
    degrees = medial.degrees
    assert degrees.max() == 4
    assert degrees[lat.rhombus_edge(1, 2)] == 4
    assert degrees[lat.rhombus_edge(0, 0)] == 2
    # every diamond vertex is a face; closed faces are surrounded by four rhombi
    assert len(medial.face_sites) == lat.lines * lat.columns
    assert all(len(r) == 4 for r, c in zip(medial.face_rhombi, medial.face_closed) if c)
