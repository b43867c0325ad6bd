import math

import numpy as np
import pytest

from isoradial.config import get_settings
from isoradial.lattice import TrackAngles, build_lattice
from isoradial.rcm import Configuration


@pytest.fixture(autouse=True)
def _isolated_settings(tmp_path, monkeypatch):
    monkeypatch.setenv("ISORADIAL_RESULTS_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("ISORADIAL_BURN_IN_FACTOR", "8")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


def square(width, height, **kwargs):
    return build_lattice(TrackAngles.uniform(math.pi / 2, height), width, **kwargs)


def edge_between(lat, a, b):
    """Edge id joining the vertices at planar points a and b (square lattice: point (x, y) is line y, column x)."""
    u = lat.vertex(a[1], a[0])
    v = lat.vertex(b[1], b[0])
    for e, (s, t) in enumerate(lat.endpoints):
        if {int(s), int(t)} == {u, v}:
            return e
    raise AssertionError(f"no edge between {a} and {b}")


def open_path(lat, points):
    state = np.zeros(lat.num_edges, dtype=bool)
    for a, b in zip(points, points[1:]):
        state[edge_between(lat, a, b)] = True
    return Configuration(lat, state)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
