import logging
import math
from itertools import combinations

import numpy as np
import pytest

from conftest import square
from isoradial.errors import CouplingError, LatticeError, ParameterError
from isoradial.harness import star_triangle_pushforward
from isoradial.lattice import Topology, TrackAngles, build_lattice, swapped_lattice
from isoradial.rcm import (
    FREE,
    BoundaryConditions,
    Configuration,
    connected,
    exact_distribution,
    make_rng,
    sample_mcmc,
    star_graph,
    triangle_graph,
)
from isoradial.transform import (
    StarTrianglePatch,
    StripSampler,
    coupling_layout,
    coupling_schedule,
    coupling_v1,
    exchange_boundary,
    exchange_is_exact,
    exchange_pushforward,
    forward_normalization,
    forward_outcomes,
    reverse_normalization,
    reverse_outcomes,
    star_triangle_forward,
    star_triangle_reverse,
    track_exchange,
)

STAR_ANGLES = [
    (math.pi / 3, math.pi / 3, math.pi / 3),
    (math.pi / 2, math.pi / 4, math.pi / 4),
    (0.3, 1.0, math.pi - 1.3),
]


@pytest.mark.parametrize("q", [1.0, 2.0, 3.0, 4.0])
@pytest.mark.parametrize("angles", STAR_ANGLES)
def test_normalizations_on_isoradial_patches(q, angles):
    patch = StarTrianglePatch.from_angles(q, angles)
    assert forward_normalization(patch) == pytest.approx(1.0, abs=1e-12)
    assert reverse_normalization(patch) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("q", [1.0, 2.0, 4.0])
@pytest.mark.parametrize("angles", STAR_ANGLES)
def test_star_triangle_preserves_the_law(q, angles):
    patch = StarTrianglePatch.from_angles(q, angles)
    for bc in (FREE, BoundaryConditions.partition([{0, 1}])):
        triangle = exact_distribution(triangle_graph(probabilities=patch.triangle_p), bc, q)
        star = exact_distribution(star_graph(probabilities=patch.star_p), bc, q)
        assert star.total_variation(star_triangle_pushforward(patch, triangle)) < 1e-12


def test_forced_outcomes():
    patch = StarTrianglePatch.from_angles(2.0, STAR_ANGLES[1])
    assert forward_outcomes(patch, (1, 1, 0)) == [(1.0, (1, 1, 1))]
    assert forward_outcomes(patch, (0, 1, 0)) == [(1.0, (0, 1, 1))]
    assert reverse_outcomes(patch, (1, 0, 0)) == [(1.0, (0, 0, 0))]
    assert reverse_outcomes(patch, (0, 1, 1)) == [(1.0, (0, 1, 0))]
    probs = [p for p, _ in reverse_outcomes(patch, (1, 1, 1))]
    assert sum(probs) == pytest.approx(1.0)


def test_connectivity_of_triangle_corners_is_kept():
    patch = StarTrianglePatch.from_angles(3.0, STAR_ANGLES[2])
    rng = make_rng(4, 0)
    pairs = {(0, 1): 0, (1, 2): 1, (2, 0): 2}
    for mask in range(8):
        tri = tuple((mask >> j) & 1 for j in range(3))
        star = star_triangle_forward(patch, tri, rng)
        tri_cfg = Configuration(triangle_graph(probabilities=patch.triangle_p), tri)
        star_cfg = Configuration(star_graph(probabilities=patch.star_p), star)
        for a, b in pairs:
            assert connected(tri_cfg, FREE, a, b) == connected(star_cfg, FREE, a, b)


def test_non_isoradial_patch_is_rejected():
    patch = StarTrianglePatch(q=2.0, triangle_p=(0.5, 0.5, 0.5), star_p=(0.5, 0.5, 0.5))
    with pytest.raises(CouplingError):
        forward_outcomes(patch, (0, 0, 0))
    with pytest.raises(CouplingError):
        reverse_outcomes(patch, (1, 1, 1))


@pytest.mark.parametrize("q", [1.0, 2.0, 4.0])
def test_torus_exchange_preserves_the_law(q):
    lat = build_lattice(TrackAngles((math.pi / 2, math.pi / 3)), 2, topology=Topology.TORUS)
    dist = exact_distribution(lat, FREE, q)
    pushed = exchange_pushforward(dist, 1)
    target = exact_distribution(pushed.graph, FREE, q)
    assert pushed.graph.track_angles.angles == (math.pi / 3, math.pi / 2)
    assert target.total_variation(pushed) < 1e-10


@pytest.mark.parametrize("q", [1.0, 2.5, 4.0])
@pytest.mark.parametrize("angles", [(math.pi / 2, math.pi / 3, math.pi / 2), (1.0, 2.2, 0.7)])
def test_box_exchange_preserves_the_law(q, angles):
    lat = build_lattice(TrackAngles(angles), 2)
    bc = exchange_boundary(lat, 1)
    assert exchange_is_exact(lat, bc, 1)
    dist = exact_distribution(lat, bc, q)
    pushed = exchange_pushforward(dist, 1)
    target = exact_distribution(pushed.graph, bc, q)
    assert target.total_variation(pushed) < 1e-10


def test_free_box_exchange_is_flagged_inexact():
    lat = build_lattice(TrackAngles((math.pi / 2, math.pi / 3, math.pi / 2)), 2)
    assert not exchange_is_exact(lat, FREE, 1)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_exchange_keeps_connectivity_off_the_middle_line(seed):
    lat = build_lattice(TrackAngles((math.pi / 2, math.pi / 4, math.pi / 2, math.pi / 2)), 4)
    bc = exchange_boundary(lat, 1)
    cfg = sample_mcmc(lat, bc, 2.0, sweeps=1, burn_in=20, seed=seed)
    swapped, new = track_exchange(lat, cfg, 1, make_rng(seed, 1), 2.0, bc)
    assert new.graph is swapped
    kept = np.flatnonzero(lat.vertex_keys[:, 0] != 1)
    for u, v in combinations(kept.tolist(), 2):
        assert connected(cfg, bc, u, v) == connected(new, bc, u, v)


def test_torus_exchange_keeps_connectivity():
    lat = build_lattice(TrackAngles((math.pi / 2, 1.0, math.pi / 2, math.pi / 2)), 2, topology=Topology.TORUS)
    cfg = sample_mcmc(lat, FREE, 2.0, sweeps=1, burn_in=20, seed=8)
    swapped, new = track_exchange(lat, cfg, 1, make_rng(8, 1), 2.0)
    kept = np.flatnonzero(lat.vertex_keys[:, 0] != 1)
    strip = set(range(0, 2 * lat.rhombi_per_track))
    outside = [e for e in range(lat.num_edges) if e not in strip]
    assert np.array_equal(cfg.open[outside], new.open[outside])
    for u, v in combinations(kept.tolist(), 2):
        assert connected(cfg, FREE, u, v) == connected(new, FREE, u, v)


def _same_partition(a, b):
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


@pytest.mark.parametrize("q", [1.0, 2.0, 3.5])
def test_strip_sampler_matches_the_exact_conditional_law(q):
    lat = build_lattice(TrackAngles((math.pi / 2, 1.0, math.pi / 2, math.pi / 2)), 2, topology=Topology.TORUS)
    swapped = swapped_lattice(lat, 1)
    dist = exact_distribution(swapped, FREE, q)
    cfg = sample_mcmc(lat, FREE, q, sweeps=1, burn_in=20, seed=5)
    labels, _ = cfg.labels(FREE)
    tracked = np.flatnonzero(lat.vertex_keys[:, 0] != 1)
    strip = np.arange(2 * lat.rhombi_per_track)
    sampler = StripSampler(swapped, 1, q, cfg.open, labels)

    states, weights = [], []
    for k in range(1 << len(strip)):
        state = cfg.open.copy()
        state[strip] = (k >> np.arange(len(strip))) & 1
        candidate = Configuration(swapped, state)
        if _same_partition(candidate.labels(FREE)[0][tracked], labels[tracked]):
            states.append(state[strip])
            weights.append(dist.probability(candidate))
    # the original strip always realizes its own connectivity
    assert states
    expected = np.array(weights) / sum(weights)
    got = np.array([sampler.probability(s) for s in states])
    np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-14)
    assert got.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("seed", [1, 2])
def test_wide_torus_exchange_keeps_connectivity(seed):
    lat = build_lattice(TrackAngles((math.pi / 2, math.pi / 3, math.pi / 2, math.pi / 2)), 6, topology=Topology.TORUS)
    assert 2 * lat.rhombi_per_track == 24
    cfg = sample_mcmc(lat, FREE, 2.0, sweeps=1, burn_in=20, seed=seed)
    swapped, new = track_exchange(lat, cfg, 1, make_rng(seed, 1), 2.0)
    assert new.graph is swapped
    assert swapped.track_angles.angles[:2] == (math.pi / 3, math.pi / 2)
    strip = 2 * lat.rhombi_per_track
    assert np.array_equal(cfg.open[strip:], new.open[strip:])
    tracked = np.flatnonzero(lat.vertex_keys[:, 0] != 1)
    assert _same_partition(cfg.labels(FREE)[0][tracked], new.labels(FREE)[0][tracked])


def test_wide_torus_exchange_of_the_empty_configuration():
    lat = build_lattice(TrackAngles((math.pi / 2, math.pi / 3, math.pi / 2, math.pi / 2)), 6, topology=Topology.TORUS)
    _, new = track_exchange(lat, Configuration.empty(lat), 1, make_rng(3, 1), 2.0)
    # every tracked vertex stays alone, so a middle vertex opens at most one edge
    middle = np.flatnonzero(new.graph.vertex_keys[:, 0] == 1)
    ends = new.graph.endpoints[new.open]
    assert not new.open[2 * lat.rhombi_per_track:].any()
    for m in middle:
        assert np.count_nonzero(ends == m) <= 1


def test_inexact_exchange_is_logged(caplog):
    lat = build_lattice(TrackAngles((math.pi / 2, math.pi / 3, math.pi / 2)), 2)
    with caplog.at_level(logging.WARNING, logger="isoradial.transform"):
        track_exchange(lat, Configuration.empty(lat), 1, make_rng(0, 0), 2.0)
    assert any(r.levelno == logging.WARNING and "not exact" in r.getMessage() for r in caplog.records)
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="isoradial.transform"):
        track_exchange(lat, Configuration.empty(lat), 1, make_rng(0, 0), 2.0, exchange_boundary(lat, 1))
    assert not caplog.records


def test_equal_angles_exchange_is_identity():
    lat = square(2, 3)
    cfg = Configuration.from_mask(lat, 0b101100101)
    swapped, new = track_exchange(lat, cfg, 2, make_rng(0, 0), 1.0)
    assert new.same_state(cfg)
    assert swapped.track_angles == lat.track_angles


def test_exchange_index_checked():
    lat = square(2, 3)
    with pytest.raises(LatticeError):
        track_exchange(lat, Configuration.empty(lat), 0, make_rng(0, 0), 1.0)


def test_coupling_schedule():
    assert [coupling_schedule(2, t) for t in range(6)] == [2, 1, 0, -1, 3, 2]
    assert coupling_layout(2, math.pi / 3) == (5, 20, 9)


def test_coupling_v1_moves_alpha_tracks_down():
    alpha = math.pi / 3
    beta = math.pi / 2
    steps = coupling_v1(1, alpha, seed=3, width=2, params=2.0, burn_in=5)
    assert steps[0].t == 0 and steps[0].track is None
    assert steps[-1].t == 6
    assert [s.track for s in steps[1:]] == [2, 1, 3, 2, 4, 3]
    assert steps[-1].lattice.track_angles.angles == pytest.approx((alpha, alpha, alpha, beta, beta, alpha))
    for step in steps:
        assert step.configuration.graph is step.lattice


def test_coupling_v1_rejects_right_angle():
    with pytest.raises(ParameterError):
        coupling_v1(1, math.pi / 2)
    with pytest.raises(ParameterError):
        coupling_v1(0, math.pi / 3)


def test_reverse_move_keeps_corner_connectivity():
    patch = StarTrianglePatch.from_angles(2.0, STAR_ANGLES[0])
    rng = make_rng(5, 0)
    for mask in range(8):
        star = tuple((mask >> j) & 1 for j in range(3))
        tri = star_triangle_reverse(patch, star, rng)
        star_cfg = Configuration(star_graph(probabilities=patch.star_p), star)
        tri_cfg = Configuration(triangle_graph(probabilities=patch.triangle_p), tri)
        for a, b in [(0, 1), (1, 2), (2, 0)]:
            assert connected(tri_cfg, FREE, a, b) == connected(star_cfg, FREE, a, b)
