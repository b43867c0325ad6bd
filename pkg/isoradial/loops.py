"""
Loops, crossings and arm events

Loops live on the medial graph: every rhombus carries two strands, each turning
around one corner, so that neither an open primal edge nor an open dual edge
is crossed. Strands reaching the region boundary are closed around the primal
boundary vertex they meet, which is the loop picture of a free primal boundary
(equivalently a wired dual boundary).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from matplotlib.path import Path
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_flow

from .errors import ParameterError, TopologyError
from .lattice import Topology, dual_lattice
from .rcm import FREE, Configuration

logger = logging.getLogger(__name__)

BOTTOM, RIGHT, TOP, LEFT = range(4)
# corner index (BL, BR, TR, TL) -> the two sides meeting there
CORNER_SIDES = ((BOTTOM, LEFT), (BOTTOM, RIGHT), (RIGHT, TOP), (TOP, LEFT))
# side -> corner indices at its ends
SIDE_CORNERS = ((0, 1), (1, 2), (2, 3), (3, 0))


@lru_cache(maxsize=32)
def _dual_of(lat):
    return dual_lattice(lat)


def dual_configuration(cfg):
    """Dual edge e is open iff primal edge e is closed."""
    return Configuration(_dual_of(cfg.graph), ~cfg.open)


# ---------------------------------------------------------------------------
# Loop tracing
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Loop:
    points: np.ndarray  # (n, 2) closed polyline, counterclockwise, first point not repeated
    family: int  # 1: outer boundary of a primal cluster, 0: of a dual cluster
    boundary: bool  # closed along the region boundary
    sides: tuple  # (rhombus, side) half-edges visited

    def to_dict(self):
        return {"family": self.family, "boundary": self.boundary, "points": self.points.round(12).tolist()}


@dataclass(frozen=True, eq=False)
class LoopFamily:
    loops: tuple

    @property
    def F0(self):
        return [lp for lp in self.loops if lp.family == 0]

    @property
    def F1(self):
        return [lp for lp in self.loops if lp.family == 1]

    def __len__(self):
        return len(self.loops)

    def family(self, i):
        return self.F1 if i == 1 else self.F0

    def to_dict(self):
        return {"F0": [lp.to_dict() for lp in self.F0], "F1": [lp.to_dict() for lp in self.F1]}


def _signed_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@lru_cache(maxsize=32)
def _medial_layout(lat):
    """Corner keys and points per rhombus, neighbour half-edges and boundary pairing."""
    m = lat.num_edges
    corners = []
    points = np.empty((m, 4, 2))
    for e, (j, n, _) in enumerate(lat.edge_tags):
        keys = ((j, n), (j, n + 1), (j + 1, n + 1), (j + 1, n))
        corners.append(keys)
        for c, (line, col) in enumerate(keys):
            points[e, c] = lat.diamond_point(line, col)
    across = np.full(4 * m, -1, dtype=np.int64)
    for e, (j, n, _) in enumerate(lat.edge_tags):
        right = lat.rhombus_edge(j, n + 1)
        if right is not None:
            across[4 * e + RIGHT] = 4 * right + LEFT
            across[4 * right + LEFT] = 4 * e + RIGHT
        top = lat.rhombus_edge(j + 1, n)
        if top is not None:
            across[4 * e + TOP] = 4 * top + BOTTOM
            across[4 * top + BOTTOM] = 4 * e + TOP
    # boundary half-edges sharing a primal endpoint are paired outside the region
    by_vertex = {}
    for h in np.flatnonzero(across < 0):
        e, s = divmod(int(h), 4)
        for c in SIDE_CORNERS[s]:
            line, col = corners[e][c]
            if lat.is_site(line, col):
                by_vertex.setdefault((line, col), []).append(int(h))
    outward = {}
    for key, hs in by_vertex.items():
        if len(hs) != 2:
            raise TopologyError(f"boundary vertex {key} has {len(hs)} boundary sides")
        a, b = hs
        across[a], across[b] = b, a
        centres = points[[h // 4 for h in hs]].mean(axis=(0, 1))
        v = lat.diamond_point(*key)
        d = v - centres
        outward[a] = outward[b] = v + 0.25 * d / np.linalg.norm(d)
    return tuple(corners), points, across, outward


def _strand_pairs(lat, cfg_open, corners):
    """Within-rhombus pairing of sides: open edge -> turn at the dual corners, closed -> primal corners."""
    m = len(corners)
    inside = np.empty(4 * m, dtype=np.int64)
    turn = np.empty(4 * m, dtype=np.int64)  # corner wrapped by the strand through a half-edge
    for e in range(m):
        bl_primal = lat.is_site(*corners[e][0])
        primal_corners = (0, 2) if bl_primal else (1, 3)
        pivots = [c for c in range(4) if (c in primal_corners) != bool(cfg_open[e])]
        for c in pivots:
            s1, s2 = CORNER_SIDES[c]
            inside[4 * e + s1], inside[4 * e + s2] = 4 * e + s2, 4 * e + s1
            turn[4 * e + s1] = turn[4 * e + s2] = c
    return inside, turn


def trace_loops(cfg):
    """Loop family of a configuration on a Box."""
    lat = cfg.graph
    if getattr(lat, "topology", None) is not Topology.BOX:
        raise TopologyError("loops are traced on simply connected (Box) regions only")
    corners, points, across, outward = _medial_layout(lat)
    inside, turn = _strand_pairs(lat, cfg.open, corners)

    def midpoint(h):
        e, s = divmod(h, 4)
        a, b = SIDE_CORNERS[s]
        return 0.5 * (points[e, a] + points[e, b])

    visited = np.zeros(len(across), dtype=bool)
    loops = []
    for start in range(len(across)):
        if visited[start]:
            continue
        path, sides, strands, on_boundary = [], [], [], False
        h = start
        while True:
            g = int(inside[h])
            visited[h] = visited[g] = True
            path.append(midpoint(h))
            sides.append(divmod(h, 4))
            sides.append(divmod(g, 4))
            strands.append((h, g))
            if g in outward:
                # interior crossings share the midpoint with the next strand
                on_boundary = True
                path.append(midpoint(g))
                path.append(outward[g])
            h = int(across[g])
            if h == start:
                break
        pts = np.array(path)
        area = _signed_area(pts)
        h, g = strands[0]
        e = h // 4
        corner = points[e, int(turn[h])]
        a, b = midpoint(h), midpoint(g)
        left = (b[0] - a[0]) * (corner[1] - a[1]) - (b[1] - a[1]) * (corner[0] - a[0]) > 0
        corner_inside = left == (area > 0)
        corner_primal = lat.is_site(*corners[e][int(turn[h])])
        family = 1 if corner_primal == corner_inside else 0
        if area < 0:
            pts = pts[::-1].copy()
            sides = sides[::-1]
        loops.append(Loop(points=pts, family=family, boundary=on_boundary, sides=tuple(sides)))
    logger.debug("traced %d loops on %d rhombi", len(loops), lat.num_edges)
    return LoopFamily(loops=tuple(loops))


# ---------------------------------------------------------------------------
# Crossings
# ---------------------------------------------------------------------------


def _segment_distance(points, a, b):
    ab = b - a
    denom = float(ab @ ab)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(points))
    return np.linalg.norm(points - (a + t[:, None] * ab), axis=1)


def _segments_cross(p1, p2, p3, p4):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


@dataclass(frozen=True)
class Quad:
    """
    Simple polygon with four marked corners, in boundary order.

    a = bottom-left, b = top-left, c = top-right, d = bottom-right for the
    rectangles built by `rectangle`; a crossing joins arc (ab) to arc (cd).
    """

    a: tuple
    b: tuple
    c: tuple
    d: tuple

    def __post_init__(self):
        pts = self.corners
        area = _signed_area(pts[[0, 3, 2, 1]])
        if abs(area) < 1e-9:
            raise ParameterError("degenerate quad: zero area")
        if _segments_cross(pts[0], pts[1], pts[2], pts[3]) or _segments_cross(pts[1], pts[2], pts[3], pts[0]):
            raise ParameterError("degenerate quad: boundary intersects itself")

    @property
    def corners(self):
        return np.array([self.a, self.b, self.c, self.d], dtype=float)

    @classmethod
    def rectangle(cls, x0, y0, x1, y1):
        return cls((x0, y0), (x0, y1), (x1, y1), (x1, y0))

    @classmethod
    def centered_square(cls, center, half):
        cx, cy = center
        return cls.rectangle(cx - half, cy - half, cx + half, cy + half)

    def rotated(self):
        """Same polygon, arcs shifted by one corner: (bc) and (da) become the arcs to join."""
        return Quad(self.b, self.c, self.d, self.a)

    def boundary(self):
        return self.corners


def _quad_sets(lat, quad):
    tol = 0.5 * float(lat.edge_lengths().max())
    pts = lat.coords
    poly = quad.corners
    inside = Path(np.vstack([poly, poly[:1]]), closed=True).contains_points(pts)
    near = np.zeros(len(pts), dtype=bool)
    for k in range(4):
        near |= _segment_distance(pts, poly[k], poly[(k + 1) % 4]) <= tol
    inside |= near
    left = inside & (_segment_distance(pts, poly[0], poly[1]) <= tol)
    right = inside & (_segment_distance(pts, poly[2], poly[3]) <= tol)
    return inside, left, right


def crossing(cfg, quad):
    """Open path from arc (ab) to arc (cd) through vertices inside the quad."""
    lat = cfg.graph
    inside, left, right = _quad_sets(lat, quad)
    if not left.any() or not right.any():
        return False
    ends = lat.endpoints[cfg.open]
    keep = inside[ends[:, 0]] & inside[ends[:, 1]]
    ends = ends[keep]
    n = lat.num_vertices
    adj = coo_matrix((np.ones(len(ends)), (ends[:, 0], ends[:, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    return bool(set(labels[left]) & set(labels[right]))


# ---------------------------------------------------------------------------
# Arm events
# ---------------------------------------------------------------------------


class Restriction(str, Enum):
    PLANE = "Plane"
    HALF_TOP = "HalfTop"
    HALF_BOTTOM = "HalfBottom"
    HALF_LEFT = "HalfLeft"
    QUARTER = "Quarter"

    @property
    def start_angle(self):
        return {"HalfBottom": math.pi, "HalfLeft": math.pi / 2}.get(self.value, 0.0)

    def admits(self, offsets, tol=1e-9):
        dx, dy = offsets[:, 0], offsets[:, 1]
        if self is Restriction.HALF_TOP:
            return dy >= -tol
        if self is Restriction.HALF_BOTTOM:
            return dy <= tol
        if self is Restriction.HALF_LEFT:
            return dx <= tol
        if self is Restriction.QUARTER:
            return (dx >= -tol) & (dy >= -tol)
        return np.ones(len(offsets), dtype=bool)


def _center_point(lat, center):
    if center is None:
        mid = 0.5 * (lat.coords.min(axis=0) + lat.coords.max(axis=0))
        return lat.coords[np.argmin(np.linalg.norm(lat.coords - mid, axis=1))]
    if np.ndim(center) == 0:
        return lat.coords[int(center)]
    return np.asarray(center, dtype=float)


def _vertex_disjoint_paths(ends, members, sources, sinks):
    """Maximum number of vertex-disjoint open paths from `sources` to `sinks` inside `members`."""
    index = {v: k for k, v in enumerate(members)}
    n = len(members)
    s, t = 2 * n, 2 * n + 1
    rows, cols = [], []
    for k in range(n):
        rows.append(2 * k)
        cols.append(2 * k + 1)
    for u, v in ends:
        if u in index and v in index:
            a, b = index[u], index[v]
            rows += [2 * a + 1, 2 * b + 1]
            cols += [2 * b, 2 * a]
    for v in sources:
        rows.append(s)
        cols.append(2 * index[v])
    for v in sinks:
        rows.append(2 * index[v] + 1)
        cols.append(t)
    graph = csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(2 * n + 2, 2 * n + 2))
    graph.sum_duplicates()
    graph.data[:] = np.minimum(graph.data, 1)
    return int(maximum_flow(graph, s, t).flow_value)


def _crossing_clusters(cfg, center, r, R, restriction, colour):
    lat = cfg.graph
    offsets = lat.coords - center
    norm = np.abs(offsets).max(axis=1)
    region = (norm > r) & (norm <= R) & restriction.admits(offsets)
    ball = norm <= r
    beyond = norm > R
    # only open edges leaving the annulus make its vertices inner or outer
    crossing = lat.endpoints[cfg.open]
    u, v = crossing[:, 0], crossing[:, 1]
    inner = np.zeros(lat.num_vertices, dtype=bool)
    outer = np.zeros(lat.num_vertices, dtype=bool)
    inner[u[region[u] & ball[v]]] = True
    inner[v[region[v] & ball[u]]] = True
    outer[u[region[u] & beyond[v]]] = True
    outer[v[region[v] & beyond[u]]] = True
    opened = crossing[region[u] & region[v]]
    n = lat.num_vertices
    adj = coo_matrix((np.ones(len(opened)), (opened[:, 0], opened[:, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    clusters = []
    for label in np.unique(labels[region & inner]):
        members = np.flatnonzero((labels == label) & region)
        src = members[inner[members]]
        dst = members[outer[members]]
        if len(dst) == 0:
            continue
        theta = np.arctan2(offsets[src, 1], offsets[src, 0])
        rel = np.mod(theta - restriction.start_angle, 2 * math.pi)
        capacity = _vertex_disjoint_paths(opened, [int(v) for v in members], src, dst)
        clusters.append((float(rel.min()), colour, capacity))
    return clusters


def _match_linear(clusters, sigma):
    k = 0
    for _, colour, capacity in clusters:
        used = 0
        while k < len(sigma) and sigma[k] == colour and used < capacity:
            k += 1
            used += 1
        if k == len(sigma):
            return True
    return k == len(sigma)


def arm_event(cfg, sigma, r, R, restriction=Restriction.PLANE, center=None):
    """
    Disjoint arms of colours `sigma` ('1' primal, '0' dual) from the box of radius r to distance R.

    Arms are read counterclockwise from the restriction's starting direction.
    Each crossing cluster contributes at most as many same-colour arms as it has
    vertex-disjoint crossings; clusters are ordered by the smallest angle of
    their inner vertices.
    """
    if not sigma or set(sigma) - {"0", "1"}:
        raise ParameterError(f"arm type must be a non-empty string over {{0, 1}}, got {sigma!r}")
    if not 0 <= r < R:
        raise ParameterError(f"need 0 <= r < R, got r={r}, R={R}")
    restriction = Restriction(restriction)
    lat = cfg.graph
    c = _center_point(lat, center)
    clusters = []
    if "1" in sigma:
        clusters += _crossing_clusters(cfg, c, r, R, restriction, "1")
    if "0" in sigma:
        clusters += _crossing_clusters(dual_configuration(cfg), c, r, R, restriction, "0")
    clusters.sort(key=lambda item: (item[0], item[1]))
    if restriction is Restriction.PLANE:
        return any(_match_linear(clusters[k:] + clusters[:k], sigma) for k in range(max(1, len(clusters))))
    return _match_linear(clusters, sigma)


# ---------------------------------------------------------------------------
# Cluster geometry
# ---------------------------------------------------------------------------


def cluster_members(cfg, v, bc=FREE):
    labels, _ = cfg.labels(bc)
    return np.flatnonzero(labels == labels[v])


def lmax(cfg, v, bc=FREE):
    """Left-most among the highest vertices of the cluster of v."""
    members = cluster_members(cfg, v, bc)
    keys = cfg.graph.vertex_keys[members]
    order = np.lexsort((keys[:, 1], -keys[:, 0]))
    return int(members[order[0]])


def cluster_extrema(cfg, v, bc=FREE):
    """(top, bottom, right): largest and smallest second coordinate and largest first coordinate."""
    pts = cfg.graph.coords[cluster_members(cfg, v, bc)]
    return float(pts[:, 1].max()), float(pts[:, 1].min()), float(pts[:, 0].max())


def reaches(cfg, v, R, bc=FREE):
    """Whether the cluster of v contains a vertex at sup-distance >= R from v."""
    pts = cfg.graph.coords[cluster_members(cfg, v, bc)]
    return bool((np.abs(pts - cfg.graph.coords[v]).max(axis=1) >= R - 1e-9).any())
