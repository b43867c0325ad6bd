"""
Isoradial rectangular lattices

A lattice is a strip tiled by horizontal tracks of unit rhombi. Diamond vertex
(j, n) sits on line j at column n, at planar position

    (n + sum_{i<j} cos(alpha_i), sum_{i<j} sin(alpha_i)).

It is a vertex of the lattice when (j + n + parity) is even; the other diamond
vertices are the dual sites. Rhombus (j, n) has corners (j, n), (j, n+1),
(j+1, n+1), (j+1, n) and carries exactly one lattice edge, its diagonal between
the two corners of the lattice's own parity.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import LatticeError

# Edge orientation tags
RISING = 0  # bottom-left to top-right
FALLING = 1  # bottom-right to top-left


class Topology(str, Enum):
    BOX = "Box"
    CYLINDER = "CylinderHorizontal"
    TORUS = "Torus"

    @property
    def periodic_lines(self):
        return self is not Topology.BOX

    @property
    def periodic_columns(self):
        return self is Topology.TORUS


@dataclass(frozen=True)
class TrackAngles:
    """Transverse angles, one per horizontal track, bottom to top."""

    angles: tuple

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        if not angles:
            raise LatticeError("at least one track angle is required")
        for j, a in enumerate(angles):
            if not math.isfinite(a) or not 0.0 < a < math.pi:
                raise LatticeError(f"track {j}: angle {a!r} is outside (0, pi)")
        object.__setattr__(self, "angles", angles)

    def __len__(self):
        return len(self.angles)

    def __getitem__(self, j):
        return self.angles[j]

    def __iter__(self):
        return iter(self.angles)

    @classmethod
    def uniform(cls, angle, height):
        return cls((angle,) * height)

    @classmethod
    def mixed(cls, height, alpha, beta=math.pi / 2, start=None, tracks=None):
        """alpha on the tracks listed in `tracks`, or on every track j >= start; beta elsewhere."""
        if tracks is None:
            tracks = range(start, height) if start is not None else ()
        chosen = set(tracks)
        return cls(tuple(alpha if j in chosen else beta for j in range(height)))

    def swapped(self, i):
        """Angles with tracks i-1 and i exchanged."""
        if not 1 <= i < len(self.angles):
            raise LatticeError(f"track index {i} has no lower neighbour among {len(self.angles)} tracks")
        angles = list(self.angles)
        angles[i - 1], angles[i] = angles[i], angles[i - 1]
        return TrackAngles(tuple(angles))


@dataclass(frozen=True, eq=False)
class IsoradialLattice:
    """Finite region of an isoradial rectangular lattice. Immutable once built."""

    track_angles: TrackAngles
    width: int
    topology: Topology
    parity: int
    lines: int
    columns: int
    vertex_keys: np.ndarray  # (V, 2) line, column
    coords: np.ndarray  # (V, 2)
    endpoints: np.ndarray  # (E, 2) vertex ids
    angles: np.ndarray  # (E,) subtended angle theta_e
    edge_tags: np.ndarray  # (E, 3) track, column, orientation
    boundary_vertices: np.ndarray
    line_offsets: np.ndarray  # (lines + 1, 2)
    _index: dict = field(repr=False)

    @property
    def height(self):
        return len(self.track_angles)

    @property
    def num_vertices(self):
        return len(self.vertex_keys)

    @property
    def num_edges(self):
        return len(self.endpoints)

    @property
    def rhombi_per_track(self):
        return self.columns if self.topology.periodic_columns else self.columns - 1

    def is_site(self, line, col):
        """True when diamond vertex (line, col) has this lattice's parity."""
        return (line + col + self.parity) % 2 == 0

    def wrap(self, line, col):
        """Normalize a diamond key to the fundamental domain, or None when outside the region."""
        if self.topology.periodic_lines:
            line %= self.lines
        elif not 0 <= line < self.lines:
            return None
        if self.topology.periodic_columns:
            col %= self.columns
        elif not 0 <= col < self.columns:
            return None
        return line, col

    def find_vertex(self, line, col):
        key = self.wrap(line, col)
        if key is None:
            return None
        return self._index.get(key)

    def vertex(self, line, col):
        v = self.find_vertex(line, col)
        if v is None:
            raise LatticeError(f"({line}, {col}) is not a vertex of this lattice")
        return v

    def diamond_point(self, line, col):
        """Planar position of any diamond vertex, primal or dual."""
        if self.topology.periodic_lines:
            line %= self.lines
        if self.topology.periodic_columns:
            col %= self.columns
        x0, y0 = self.line_offsets[line]
        return np.array([col + x0, y0])

    def rhombus_corners(self, track, col):
        """Wrapped diamond keys of rhombus (track, col) as (BL, BR, TR, TL)."""
        return (
            self.wrap(track, col),
            self.wrap(track, col + 1),
            self.wrap(track + 1, col + 1),
            self.wrap(track + 1, col),
        )

    def rhombus_edge(self, track, col):
        """Edge id carried by rhombus (track, col), or None when outside the region."""
        if not 0 <= track < self.height:
            return None
        if self.topology.periodic_columns:
            col %= self.columns
        elif not 0 <= col < self.rhombi_per_track:
            return None
        return track * self.rhombi_per_track + col

    def track_rows(self, j):
        """Vertex ids on the bottom and top of track j."""
        if not 0 <= j < self.height:
            raise LatticeError(f"track {j} does not exist")
        bottom = [v for v in (self.find_vertex(j, n) for n in range(self.columns)) if v is not None]
        top = [v for v in (self.find_vertex(j + 1, n) for n in range(self.columns)) if v is not None]
        return bottom, top

    def line_vertices(self, line):
        return [v for v in (self.find_vertex(line, n) for n in range(self.columns)) if v is not None]

    def edge_lengths(self):
        # coordinates wrap on periodic regions, the angle does not
        return 2.0 * np.sin(self.angles / 2.0)

    def to_dict(self):
        return {
            "angles": list(self.track_angles.angles),
            "width": self.width,
            "height": self.height,
            "topology": self.topology.value,
            "parity": self.parity,
        }

    def digest(self):
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def build_lattice(track_angles, width, height=None, topology=Topology.BOX, parity=0):
    """
    Build a finite region of L(alpha).

    Args:
        track_angles: TrackAngles or a sequence of angles in (0, pi)
        width: lattice vertices per line (2 * width diamond vertices per line)
        height: number of tracks; must match the angle count when given
        topology: Box, CylinderHorizontal (periodic vertically) or Torus
        parity: 0 for the primal lattice, 1 for its dual

    Returns:
        IsoradialLattice
    """
    if not isinstance(track_angles, TrackAngles):
        track_angles = TrackAngles(tuple(track_angles))
    topology = Topology(topology)
    h = len(track_angles)
    if height is not None and height != h:
        raise LatticeError(f"height {height} does not match {h} track angles")
    if width < 2:
        raise LatticeError(f"width must be at least 2, got {width}")
    if topology is Topology.TORUS and width % 2:
        raise LatticeError(f"torus width must be even, got {width}")
    if topology.periodic_lines and h % 2:
        raise LatticeError(f"{topology.value} needs an even number of tracks, got {h}")
    if parity not in (0, 1):
        raise LatticeError(f"parity must be 0 or 1, got {parity}")

    columns = 2 * width
    lines = h if topology.periodic_lines else h + 1
    alphas = np.asarray(track_angles.angles)
    offsets = np.zeros((h + 1, 2))
    offsets[1:, 0] = np.cumsum(np.cos(alphas))
    offsets[1:, 1] = np.cumsum(np.sin(alphas))

    keys = [(j, n) for j in range(lines) for n in range(columns) if (j + n + parity) % 2 == 0]
    index = {key: i for i, key in enumerate(keys)}
    vertex_keys = np.array(keys, dtype=np.int64).reshape(-1, 2)
    coords = np.column_stack([vertex_keys[:, 1] + offsets[vertex_keys[:, 0], 0], offsets[vertex_keys[:, 0], 1]])

    per_track = columns if topology.periodic_columns else columns - 1
    ends, thetas, tags = [], [], []
    for j in range(h):
        up = (j + 1) % lines
        for n in range(per_track):
            right = (n + 1) % columns
            if (j + n + parity) % 2 == 0:
                ends.append((index[(j, n)], index[(up, right)]))
                thetas.append(math.pi - alphas[j])
                tags.append((j, n, RISING))
            else:
                ends.append((index[(j, right)], index[(up, n)]))
                thetas.append(alphas[j])
                tags.append((j, n, FALLING))

    endpoints = np.array(ends, dtype=np.int64).reshape(-1, 2)
    if topology is Topology.TORUS:
        boundary = np.empty(0, dtype=np.int64)
    else:
        degree = np.bincount(endpoints.ravel(), minlength=len(keys))
        boundary = np.flatnonzero(degree < 4)

    return IsoradialLattice(
        track_angles=track_angles,
        width=width,
        topology=topology,
        parity=parity,
        lines=lines,
        columns=columns,
        vertex_keys=vertex_keys,
        coords=coords,
        endpoints=endpoints,
        angles=np.array(thetas, dtype=float),
        edge_tags=np.array(tags, dtype=np.int64).reshape(-1, 3),
        boundary_vertices=boundary,
        line_offsets=offsets,
        _index=index,
    )


def mixed_angles(height, alpha, beta=math.pi / 2, start=None, tracks=None):
    """Angle sequence with alpha on the chosen tracks and beta on the others."""
    return TrackAngles.mixed(height, alpha, beta=beta, start=start, tracks=tracks)


def dual_lattice(lat):
    """Same tiling, opposite parity: dual edge e crosses primal edge e and has angle pi - theta_e."""
    return build_lattice(lat.track_angles, lat.width, topology=lat.topology, parity=1 - lat.parity)


def swapped_lattice(lat, i):
    return build_lattice(lat.track_angles.swapped(i), lat.width, topology=lat.topology, parity=lat.parity)


def lattice_from_dict(data):
    return build_lattice(
        data["angles"],
        int(data["width"]),
        height=data.get("height"),
        topology=data.get("topology", Topology.BOX.value),
        parity=int(data.get("parity", 0)),
    )


def top_left(lat, v):
    """The vertex v+ across the track above v, to the top left."""
    line, col = (int(x) for x in lat.vertex_keys[v])
    w = lat.find_vertex(line + 1, col - 1)
    if w is None:
        raise LatticeError(f"vertex {v} has no top-left neighbour in this region")
    return w


@dataclass(frozen=True, eq=False)
class MedialGraph:
    """One vertex per rhombus (edge midpoint); edges across shared rhombus sides."""

    positions: np.ndarray  # (E, 2)
    edges: np.ndarray  # (M, 2) rhombus / edge ids
    face_sites: np.ndarray  # (F, 2) diamond keys, one face per diamond vertex
    face_rhombi: tuple  # rhombus ids around each face
    face_closed: np.ndarray
    face_primal: np.ndarray

    @property
    def degrees(self):
        return np.bincount(self.edges.ravel(), minlength=len(self.positions))


def medial_graph(lat):
    positions = np.empty((lat.num_edges, 2))
    for e, (j, n, _) in enumerate(lat.edge_tags):
        a = lat.track_angles[j]
        positions[e] = lat.diamond_point(j, n) + np.array([(1.0 + math.cos(a)) / 2.0, math.sin(a) / 2.0])

    edges = []
    for e, (j, n, _) in enumerate(lat.edge_tags):
        right = lat.rhombus_edge(j, n + 1)
        if right is not None:
            edges.append((e, right))
        above = (j + 1) % lat.height if lat.topology.periodic_lines else j + 1
        top = lat.rhombus_edge(above, n)
        if top is not None:
            edges.append((e, top))

    sites, rhombi, closed, primal = [], [], [], []
    for line in range(lat.lines):
        for col in range(lat.columns):
            around = []
            for track, c in ((line, col), (line, col - 1), (line - 1, col - 1), (line - 1, col)):
                if lat.topology.periodic_lines:
                    track %= lat.height
                e = lat.rhombus_edge(track, c)
                if e is not None:
                    around.append(e)
            sites.append((line, col))
            rhombi.append(tuple(around))
            closed.append(len(around) == 4)
            primal.append(lat.is_site(line, col))

    return MedialGraph(
        positions=positions,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        face_sites=np.array(sites, dtype=np.int64).reshape(-1, 2),
        face_rhombi=tuple(rhombi),
        face_closed=np.array(closed, dtype=bool),
        face_primal=np.array(primal, dtype=bool),
    )
