"""
Star-triangle coupling and track exchange

A track exchange swaps the angles of two adjacent tracks. On a Box or a
CylinderHorizontal it inserts one extra rhombus at an end of the two-track
strip and sweeps it to the other end by star-triangle moves, carrying the
configuration along. On a Torus the strip has no end; the configuration on the
strip is redrawn from its exact conditional law given everything the exchange
must preserve.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import CouplingError, GraphTooLargeError, LatticeError, ParameterError
from .lattice import Topology, build_lattice, mixed_angles, swapped_lattice
from .rcm import (
    FREE,
    BoundaryConditions,
    Configuration,
    ExactDistribution,
    as_boundary,
    as_params,
    edge_probabilities,
    isoradial_weight,
    make_rng,
    sample_mcmc,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-9
MAX_STRIP_EDGES = 20


# ---------------------------------------------------------------------------
# Star-triangle coupling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StarTrianglePatch:
    """
    Triangle ABC and star ABCO of one hexagon of rhombi.

    Triangle states are ordered (AB, BC, CA), star states (OA, OB, OC); the
    star edge OX and the triangle edge opposite X live in translates of the
    same rhombus.
    """

    q: float
    triangle_p: tuple
    star_p: tuple
    triangle_edges: tuple = (0, 1, 2)
    star_edges: tuple = (0, 1, 2)
    center: object = None

    @classmethod
    def from_angles(cls, params, star_angles, **ids):
        """Patch from the three star angles (summing to pi); triangle edge BC gets pi - theta_OA."""
        params = as_params(params)
        oa, ob, oc = (float(a) for a in star_angles)
        star = tuple(float(isoradial_weight(params, a)) for a in (oa, ob, oc))
        triangle = tuple(float(isoradial_weight(params, math.pi - a)) for a in (oc, oa, ob))
        return cls(q=params.q, triangle_p=triangle, star_p=star, **ids)

    @property
    def star_x(self):
        return tuple((1.0 - p) / p for p in self.star_p)

    @property
    def triangle_y(self):
        return tuple(p / (1.0 - p) for p in self.triangle_p)


def forward_normalization(patch):
    """Sum of the no-open-triangle outcome probabilities; 1 on isoradial patches."""
    xa, xb, xc = patch.star_x
    q = patch.q
    return q * q * xa * xb * xc + q * (xb * xc + xc * xa + xa * xb)


def reverse_normalization(patch):
    """Sum of the all-open-star outcome probabilities; 1 on isoradial patches."""
    yab, ybc, yca = patch.triangle_y
    return (yab * ybc * yca + yab * ybc + ybc * yca + yca * yab) / patch.q


def _check(total, direction):
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise CouplingError(f"{direction} star-triangle probabilities sum to {total!r}; the patch is not isoradial")


def forward_outcomes(patch, triangle_config):
    """Exact law of the star given the triangle: list of (probability, (OA, OB, OC))."""
    ab, bc, ca = (int(bool(s)) for s in triangle_config)
    count = ab + bc + ca
    if count >= 2:
        return [(1.0, (1, 1, 1))]
    if count == 1:
        if bc:
            return [(1.0, (0, 1, 1))]
        if ca:
            return [(1.0, (1, 0, 1))]
        return [(1.0, (1, 1, 0))]
    _check(forward_normalization(patch), "forward")
    xa, xb, xc = patch.star_x
    q = patch.q
    return [
        (q * q * xa * xb * xc, (0, 0, 0)),
        (q * xb * xc, (1, 0, 0)),
        (q * xc * xa, (0, 1, 0)),
        (q * xa * xb, (0, 0, 1)),
    ]


def reverse_outcomes(patch, star_config):
    """Exact law of the triangle given the star: list of (probability, (AB, BC, CA))."""
    oa, ob, oc = (int(bool(s)) for s in star_config)
    count = oa + ob + oc
    if count <= 1:
        return [(1.0, (0, 0, 0))]
    if count == 2:
        if oa and ob:
            return [(1.0, (1, 0, 0))]
        if ob and oc:
            return [(1.0, (0, 1, 0))]
        return [(1.0, (0, 0, 1))]
    _check(reverse_normalization(patch), "reverse")
    yab, ybc, yca = patch.triangle_y
    q = patch.q
    return [
        (yab * ybc * yca / q, (1, 1, 1)),
        (yab * ybc / q, (1, 1, 0)),
        (ybc * yca / q, (0, 1, 1)),
        (yca * yab / q, (1, 0, 1)),
    ]


def _draw(outcomes, rng):
    if len(outcomes) == 1:
        return outcomes[0][1]
    u = rng.random()
    acc = 0.0
    for prob, config in outcomes:
        acc += prob
        if u < acc:
            return config
    return outcomes[-1][1]


def star_triangle_forward(patch, triangle_config, rng):
    return _draw(forward_outcomes(patch, triangle_config), rng)


def star_triangle_reverse(patch, star_config, rng):
    return _draw(reverse_outcomes(patch, star_config), rng)


# ---------------------------------------------------------------------------
# Track exchange on strips with ends
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Rhombus:
    corners: tuple  # named diamond vertices, cyclic order, corner 0 carries angle gamma
    gamma: float
    slot: int


@dataclass(frozen=True)
class _Flip:
    forward: bool  # triangle before, star after
    patch: StarTrianglePatch
    star_slots: tuple
    triangle_slots: tuple

    @property
    def inputs(self):
        return self.triangle_slots if self.forward else self.star_slots

    @property
    def outputs(self):
        return self.star_slots if self.forward else self.triangle_slots

    def outcomes(self, config):
        return forward_outcomes(self.patch, config) if self.forward else reverse_outcomes(self.patch, config)


@dataclass(frozen=True)
class ExchangePlan:
    """Sequence of moves realizing one track exchange; slot E holds the travelling rhombus."""

    track: int
    diamond_slot: int
    diamond_p: float
    start_column: int
    start_pendant: bool
    start_pair: tuple
    flips: tuple


def _diagonal(rhombus, primal):
    c = rhombus.corners
    return (c[0], c[2]) if primal(c[0]) else (c[1], c[3])


def _theta(rhombus, primal):
    return math.pi - rhombus.gamma if primal(rhombus.corners[0]) else rhombus.gamma


def _make_flip(before, after, center, primal, params):
    star, triangle = (before, after) if primal(center) else (after, before)
    diagonals = [_diagonal(r, primal) for r in star]
    centers = set(diagonals[0]) & set(diagonals[1]) & set(diagonals[2])
    if len(centers) != 1:
        raise CouplingError(f"rhombi around {center} do not form a star")
    (o,) = centers
    leaves = [a if b == o else b for a, b in diagonals]
    by_pair = {frozenset(_diagonal(r, primal)): r for r in triangle}
    a, b, c = leaves
    try:
        tri = [by_pair[frozenset(pair)] for pair in ((a, b), (b, c), (c, a))]
    except KeyError:
        raise CouplingError(f"rhombi around {center} do not form a triangle on the star leaves") from None
    patch = StarTrianglePatch(
        q=params.q,
        triangle_p=tuple(float(isoradial_weight(params, _theta(r, primal))) for r in tri),
        star_p=tuple(float(isoradial_weight(params, _theta(r, primal))) for r in star),
        center=o,
    )
    _check(forward_normalization(patch), "forward")
    _check(reverse_normalization(patch), "reverse")
    return _Flip(
        forward=not primal(center),
        patch=patch,
        star_slots=tuple(r.slot for r in star),
        triangle_slots=tuple(r.slot for r in tri),
    )


def _check_track(lat, i):
    if not 1 <= i < lat.height:
        raise LatticeError(f"track index {i} must lie in 1..{lat.height - 1}")


@lru_cache(maxsize=64)
def exchange_plan(lat, i, params):
    """Moves exchanging tracks i-1 and i of a Box or CylinderHorizontal lattice."""
    params = as_params(params)
    _check_track(lat, i)
    if lat.topology is Topology.TORUS:
        raise LatticeError("torus exchanges resample the strip; there is no sweep plan")
    if lat.topology.periodic_lines and lat.height < 4:
        raise LatticeError("a cylinder exchange needs at least 4 tracks")
    beta, alpha = lat.track_angles[i - 1], lat.track_angles[i]
    if beta == alpha:
        raise CouplingError(f"tracks {i - 1} and {i} have the same angle")
    line_of = {"p": i - 1, "m": i, "r": i, "t": i + 1}

    def primal(name):
        return lat.is_site(line_of[name[0]], name[1])

    def lo(k):
        return (("p", k), ("p", k + 1), ("m", k + 1), ("m", k)), beta, lat.rhombus_edge(i - 1, k)

    def up(k):
        return (("m", k), ("m", k + 1), ("t", k + 1), ("t", k)), alpha, lat.rhombus_edge(i, k)

    def lo2(k):
        return (("p", k), ("p", k + 1), ("r", k + 1), ("r", k)), alpha, lat.rhombus_edge(i - 1, k)

    def up2(k):
        return (("r", k), ("r", k + 1), ("t", k + 1), ("t", k)), beta, lat.rhombus_edge(i, k)

    slot = lat.num_edges
    delta = abs(beta - alpha)
    last = lat.columns - 1
    if beta > alpha:

        def diamond(k):
            return (("p", k), ("m", k), ("t", k), ("r", k)), delta, slot

        start = last
        moves = [((lo(k - 1), up(k - 1), diamond(k)), (lo2(k - 1), up2(k - 1), diamond(k - 1)), ("m", k)) for k in range(last, 0, -1)]
    else:

        def diamond(k):
            return (("p", k), ("r", k), ("t", k), ("m", k)), delta, slot

        start = 0
        moves = [((lo(k), up(k), diamond(k)), (lo2(k), up2(k), diamond(k + 1)), ("m", k)) for k in range(last)]

    flips = []
    for before, after, center in moves:
        flips.append(
            _make_flip(
                [_Rhombus(*r) for r in before],
                [_Rhombus(*r) for r in after],
                center,
                primal,
                params,
            )
        )
    first = _Rhombus(*diamond(start))
    return ExchangePlan(
        track=i,
        diamond_slot=slot,
        diamond_p=float(isoradial_weight(params, _theta(first, primal))),
        start_column=start,
        start_pendant=not primal(("p", start)),
        start_pair=(lat.vertex(i - 1, start), lat.vertex(i + 1, start)) if primal(("p", start)) else (),
        flips=tuple(flips),
    )


def exchange_boundary(lat, i):
    """Boundary partition making the exchange of tracks i-1 and i exact on a Box or Cylinder."""
    _check_track(lat, i)
    end = 0 if lat.is_site(i - 1, 0) else lat.columns - 1
    return BoundaryConditions.partition([{lat.vertex(i - 1, end), lat.vertex(i + 1, end)}])


def exchange_is_exact(lat, bc, i):
    """
    Whether the end treatment of the sweep is exact under `bc`.

    The end vertices of lines i-1 and i+1 at the primal end must be wired
    together and no vertex of line i may be wired to anything.
    """
    if lat.topology is Topology.TORUS:
        return True
    classes = as_boundary(bc).resolve(lat)
    middle = set(lat.line_vertices(i))
    if any(c & middle for c in classes):
        return False
    end = 0 if lat.is_site(i - 1, 0) else lat.columns - 1
    u, v = lat.vertex(i - 1, end), lat.vertex(i + 1, end)
    return any(u in c and v in c for c in classes)


def _start_open_probability(plan, lat, bc, q, state):
    p = plan.diamond_p
    pendant = p / (p + q * (1.0 - p))
    if plan.start_pendant:
        return pendant
    if _pair_wired(plan, lat, bc):
        return p
    u, v = plan.start_pair
    labels, _ = Configuration(lat, state).labels(bc)
    return p if labels[u] == labels[v] else pendant


def _pair_wired(plan, lat, bc):
    if not plan.start_pair:
        return False
    u, v = plan.start_pair
    return any(u in c and v in c for c in as_boundary(bc).resolve(lat))


def _sweep(lat, state, i, rng, params, bc):
    plan = exchange_plan(lat, i, params)
    work = np.zeros(lat.num_edges + 1, dtype=np.uint8)
    work[:-1] = state
    prob = _start_open_probability(plan, lat, bc, params.q, state)
    work[plan.diamond_slot] = rng.random() < prob
    for flip in plan.flips:
        config = tuple(int(work[s]) for s in flip.inputs)
        out = _draw(flip.outcomes(config), rng)
        for s, value in zip(flip.outputs, out):
            work[s] = value
    return work[:-1].astype(bool)


# ---------------------------------------------------------------------------
# Track exchange on the torus
# ---------------------------------------------------------------------------


def _strip_edges(lat, i):
    per = lat.rhombi_per_track
    return np.arange((i - 1) * per, (i + 1) * per, dtype=np.int64)


def _tracked_vertices(lat, i):
    return np.flatnonzero(lat.vertex_keys[:, 0] != i % lat.lines).astype(np.int64)


@dataclass(frozen=True, eq=False)
class _StripTable:
    strip: np.ndarray  # strip edge ids
    strip_states: np.ndarray  # (2^S, S) strip mask -> states of the strip edges
    log_weights: np.ndarray
    groups: np.ndarray  # strip mask -> partition group
    keys: dict  # canonical partition tuple -> group
    group_weights: np.ndarray  # totals of exp(log_weights - max)

    def full_masks(self):
        return (self.strip_states.astype(np.int64) << self.strip).sum(axis=1)


def _outside_key(state, strip):
    outside = np.array(state, dtype=np.uint8)
    outside[strip] = 0
    return np.packbits(outside).tobytes()


@lru_cache(maxsize=32)
def _strip_table(lat, i, params, outside_key):
    """Every strip state with its weight and tracked partition, for exact push-forwards on small tori."""
    strip = _strip_edges(lat, i)
    if len(strip) > MAX_STRIP_EDGES:
        raise GraphTooLargeError(f"the exchanged strip has {len(strip)} edges; the cap is {MAX_STRIP_EDGES}")
    p = edge_probabilities(lat, params)
    base = np.unpackbits(np.frombuffer(outside_key, dtype=np.uint8), count=lat.num_edges)
    with np.errstate(divide="ignore"):
        log_p, log_1mp = np.log(p), np.log1p(-p)
    logw, labels = _kernels.strip_enumeration(
        lat.num_vertices, np.ascontiguousarray(lat.endpoints), base, strip,
        log_p, log_1mp, math.log(params.q), _tracked_vertices(lat, i),
    )
    rows, groups = np.unique(labels, axis=0, return_inverse=True)
    groups = groups.reshape(-1)
    shifted = np.exp(logw - logw.max())
    states = ((np.arange(1 << len(strip))[:, None] >> np.arange(len(strip))) & 1).astype(np.uint8)
    return _StripTable(
        strip=strip,
        strip_states=states,
        log_weights=logw,
        groups=groups,
        keys={tuple(int(x) for x in row): g for g, row in enumerate(rows)},
        group_weights=np.bincount(groups, weights=shifted, minlength=len(rows)),
    )


def _canonical(labels):
    seen = {}
    return tuple(seen.setdefault(int(x), len(seen)) for x in labels)


def _merge_blocks(state, terminals):
    blocks = {state[t] for t in terminals}
    if len(blocks) < 2:
        return state
    low = min(blocks)
    return _canonical(low if b in blocks else b for b in state)


@dataclass(frozen=True, eq=False)
class _MiddleVertex:
    edges: tuple  # positions in the strip of the edges at this vertex
    # (frozenset of merged terminals, total weight, option masks, option weights)
    moves: tuple


class StripSampler:
    """
    Conditional law of the strip edges given the edges outside the strip and
    the connectivity of every vertex off the middle line.

    Middle-line vertices only touch strip edges, so once the partition of the
    tracked vertices is fixed the cluster count changes only through isolated
    middle vertices. Each middle vertex merges some of the outside clusters
    touching the strip (the terminals); the vertices are processed one at a time
    with the partition of terminals merged so far as the state. The number of
    states depends on how the outside clusters meet the strip, not on 2^S.
    """

    def __init__(self, lat, i, params, outside, target_labels):
        params = as_params(params)
        self.strip = _strip_edges(lat, i)
        base = np.array(outside, dtype=bool)
        base[self.strip] = False
        self.base = base
        outside_labels, _ = Configuration(lat, base).labels(FREE)
        middle_line = i % lat.lines
        ends = lat.endpoints[self.strip]
        on_middle = lat.vertex_keys[ends, 0] == middle_line
        if not np.all(on_middle.sum(axis=1) == 1):
            raise LatticeError(f"strip of track {i} must have exactly one middle endpoint per edge")
        middle = np.where(on_middle[:, 0], ends[:, 0], ends[:, 1])
        other = np.where(on_middle[:, 0], ends[:, 1], ends[:, 0])
        roots = np.unique(outside_labels[other])
        terminal_of = {int(r): k for k, r in enumerate(roots)}
        block_of = {}
        for v in other:
            block_of.setdefault(terminal_of[int(outside_labels[v])], int(target_labels[v]))
        self.target = _canonical(block_of[t] for t in range(len(roots)))
        ratio = edge_probabilities(lat, params)
        ratio = ratio / (1.0 - ratio)
        vertices = []
        for m in np.unique(middle):
            at = np.flatnonzero(middle == m)
            terms = [terminal_of[int(outside_labels[other[k]])] for k in at]
            groups = {}
            for mask in range(1 << len(at)):
                opened = [j for j in range(len(at)) if mask >> j & 1]
                merged = frozenset(terms[j] for j in opened)
                if len({block_of[t] for t in merged}) > 1:
                    continue
                w = float(np.prod(ratio[self.strip[at[opened]]])) if opened else params.q
                masks, weights = groups.setdefault(merged, ([], []))
                masks.append(mask)
                weights.append(w)
            moves = tuple(
                (merged, sum(weights), tuple(masks), np.array(weights))
                for merged, (masks, weights) in groups.items()
            )
            vertices.append(_MiddleVertex(edges=tuple(int(k) for k in at), moves=moves))
        self.vertices = tuple(vertices)
        self._forward()

    def _forward(self):
        layers = [{tuple(range(len(self.target))): 1.0}]
        self.log_scale = 0.0
        for vertex in self.vertices:
            nxt = {}
            for state, weight in layers[-1].items():
                for merged, total, _, _ in vertex.moves:
                    key = _merge_blocks(state, merged)
                    nxt[key] = nxt.get(key, 0.0) + weight * total
            top = max(nxt.values())
            self.log_scale += math.log(top)
            layers.append({k: w / top for k, w in nxt.items()})
        self.layers = layers
        self.realizable = layers[-1].get(self.target, 0.0) > 0.0

    @property
    def log_partition(self):
        """log of the total strip weight compatible with the target connectivity."""
        if not self.realizable:
            return -math.inf
        return self.log_scale + math.log(self.layers[-1][self.target])

    def _check_realizable(self):
        if not self.realizable:
            raise CouplingError("connectivity pattern of the strip cannot be realized after the exchange")

    def sample(self, rng):
        """Full edge state: outside edges unchanged, strip edges drawn from the conditional law."""
        self._check_realizable()
        state = self.base.copy()
        current = self.target
        for k in range(len(self.vertices) - 1, -1, -1):
            vertex = self.vertices[k]
            options, weights = [], []
            for prev, weight in self.layers[k].items():
                for move in vertex.moves:
                    if _merge_blocks(prev, move[0]) == current:
                        options.append((prev, move))
                        weights.append(weight * move[1])
            weights = np.asarray(weights)
            prev, (_, _, masks, mask_weights) = options[rng.choice(len(options), p=weights / weights.sum())]
            mask = masks[rng.choice(len(masks), p=mask_weights / mask_weights.sum())]
            for j, k_edge in enumerate(vertex.edges):
                state[self.strip[k_edge]] = bool(mask >> j & 1)
            current = prev
        return state

    def probability(self, strip_state):
        """Conditional probability of one assignment of the strip edges."""
        self._check_realizable()
        strip_state = np.asarray(strip_state, dtype=bool)
        current = tuple(range(len(self.target)))
        log_w = 0.0
        for vertex in self.vertices:
            mask = sum(int(strip_state[k]) << j for j, k in enumerate(vertex.edges))
            for merged, _, masks, mask_weights in vertex.moves:
                if mask in masks:
                    log_w += math.log(mask_weights[masks.index(mask)])
                    current = _merge_blocks(current, merged)
                    break
            else:
                return 0.0
        if current != self.target:
            return 0.0
        return math.exp(log_w - self.log_partition)


def _torus_resample(lat, swapped, cfg, i, rng, params):
    labels, _ = cfg.labels(FREE)
    return StripSampler(swapped, i, params, cfg.open, labels).sample(rng)


# ---------------------------------------------------------------------------
# Public operators
# ---------------------------------------------------------------------------


def track_exchange(lattice, cfg, i, rng, params, bc=FREE):
    """
    Exchange tracks i-1 and i, returning (lattice', cfg').

    Vertices off line i keep their connectivity pathwise (under `bc` on Box and
    Cylinder). The law is preserved exactly on the Torus, and on Box/Cylinder
    whenever `exchange_is_exact(lattice, bc, i)` holds.
    """
    params = as_params(params)
    bc = as_boundary(bc)
    _check_track(lattice, i)
    if cfg.graph is not lattice and len(cfg.open) != lattice.num_edges:
        raise LatticeError("configuration does not belong to this lattice")
    swapped = swapped_lattice(lattice, i)
    if lattice.track_angles[i - 1] == lattice.track_angles[i]:
        logger.info("tracks %d and %d share angle %.6f; exchange is the identity", i - 1, i, lattice.track_angles[i])
        return swapped, Configuration(swapped, cfg.open)
    if lattice.topology is Topology.TORUS:
        state = _torus_resample(lattice, swapped, cfg, i, rng, params)
    else:
        if not exchange_is_exact(lattice, bc, i):
            logger.warning("exchange of tracks %d/%d is not exact at the strip ends under %s", i - 1, i, bc.to_dict())
        state = _sweep(lattice, cfg.open, i, rng, params, bc)
    return swapped, Configuration(swapped, state)


def _merge(masks, probs):
    masks, inverse = np.unique(masks, return_inverse=True)
    return masks, np.bincount(inverse.reshape(-1), weights=probs)


def _sweep_pushforward(dist, i):
    lat, params, bc = dist.graph, dist.params, dist.bc
    plan = exchange_plan(lat, i, params)
    masks = np.flatnonzero(dist.probabilities > 0.0).astype(np.int64)
    probs = dist.probabilities[masks]
    if plan.start_pendant or _pair_wired(plan, lat, bc):
        po = np.full(len(masks), _start_open_probability(plan, lat, bc, params.q, None))
    else:
        po = np.array([
            _start_open_probability(plan, lat, bc, params.q, ((int(m) >> np.arange(lat.num_edges)) & 1).astype(bool))
            for m in masks
        ])
    bit = np.int64(1) << plan.diamond_slot
    masks = np.concatenate([masks | bit, masks])
    probs = np.concatenate([probs * po, probs * (1.0 - po)])
    for flip in plan.flips:
        slots = flip.inputs
        clear = ~np.int64(sum(1 << s for s in slots))
        pattern = sum(((masks >> s) & 1) << j for j, s in enumerate(slots))
        new_masks, new_probs = [], []
        for pat in range(8):
            sel = pattern == pat
            if not sel.any():
                continue
            config = tuple((pat >> j) & 1 for j in range(3))
            base = masks[sel] & clear
            for prob, out in flip.outcomes(config):
                if prob == 0.0:
                    continue
                add = np.int64(sum(v << s for v, s in zip(out, flip.outputs)))
                new_masks.append(base | add)
                new_probs.append(probs[sel] * prob)
        masks, probs = _merge(np.concatenate(new_masks), np.concatenate(new_probs))
    masks = masks & (bit - 1)
    return np.bincount(masks, weights=probs, minlength=1 << lat.num_edges)


def _torus_pushforward(dist, i, swapped):
    lat, params = dist.graph, dist.params
    strip = _strip_edges(lat, i)
    strip_bits = int(sum(1 << int(e) for e in strip))
    out = np.zeros_like(dist.probabilities)
    support = np.flatnonzero(dist.probabilities > 0.0)
    for outside in np.unique(support & ~np.int64(strip_bits)):
        outside = int(outside)
        key = _outside_key((outside >> np.arange(lat.num_edges)) & 1, strip)
        before = _strip_table(lat, i, params, key)
        after = _strip_table(swapped, i, params, key)
        mass = np.bincount(before.groups, weights=dist.probabilities[outside | before.full_masks()], minlength=len(before.keys))
        targets = outside | after.full_masks()
        for pattern, g in before.keys.items():
            if mass[g] == 0.0:
                continue
            h = after.keys.get(pattern)
            if h is None:
                raise CouplingError(f"connectivity pattern {pattern} cannot be realized after the exchange")
            members = np.flatnonzero(after.groups == h)
            w = np.exp(after.log_weights[members] - after.log_weights.max())
            out[targets[members]] += mass[g] * w / after.group_weights[h]
    return out


def exchange_pushforward(dist, i):
    """Exact law of cfg' when cfg is drawn from `dist`, as a distribution on the swapped lattice."""
    lat = dist.graph
    _check_track(lat, i)
    swapped = swapped_lattice(lat, i)
    if lat.track_angles[i - 1] == lat.track_angles[i]:
        probs = dist.probabilities.copy()
    elif lat.topology is Topology.TORUS:
        probs = _torus_pushforward(dist, i, swapped)
    else:
        probs = _sweep_pushforward(dist, i)
    return ExactDistribution(graph=swapped, bc=dist.bc, params=dist.params, probabilities=probs)


# ---------------------------------------------------------------------------
# Coupling: version 1
# ---------------------------------------------------------------------------


def coupling_schedule(N, t):
    """j(t) = N + (2N + 1) floor(t / 2N) - t."""
    return N + (2 * N + 1) * (t // (2 * N)) - t


@dataclass(frozen=True, eq=False)
class TrajectoryStep:
    t: int
    track: int | None  # lattice index of the exchange performed at this step
    lattice: object
    configuration: Configuration


def coupling_layout(N, alpha):
    """(number of alpha tracks B, total steps T, lattice height H)."""
    blocks = math.ceil(2 * N / math.sin(alpha))
    height = 2 * N + blocks
    return blocks, 2 * N * blocks, height


def coupling_v1(
    N,
    alpha,
    seed=None,
    width=8,
    params=1.0,
    topology=Topology.CYLINDER,
    bc=FREE,
    sweeps=1,
    burn_in=None,
    record_every=1,
    steps=None,
):
    """
    Move every alpha track of L(0) below the 2N right-angle tracks, one exchange per step.

    Track j of the coupling sits at lattice index j + N. L(0) carries alpha on
    indices >= 2N and pi/2 below; an extra alpha track is added on top when
    the topology needs an even number of tracks. Returns the recorded steps,
    always including t = 0 and the last step.
    """
    if N < 1:
        raise ParameterError(f"N must be positive, got {N}")
    if not 0.0 < alpha < math.pi or math.isclose(alpha, math.pi / 2):
        raise ParameterError(f"alpha must lie in (0, pi) and differ from pi/2, got {alpha!r}")
    if record_every < 1:
        raise ParameterError("record_every must be positive")
    params = as_params(params)
    topology = Topology(topology)
    _, total, height = coupling_layout(N, alpha)
    if topology.periodic_lines and height % 2:
        height += 1
    angles = mixed_angles(height, alpha, start=2 * N)
    lat = build_lattice(angles, width, topology=topology)
    cfg = sample_mcmc(lat, bc, params, sweeps, burn_in=burn_in, seed=seed, chain_id=0)
    rng = make_rng(seed, chain_id=1)
    last = total if steps is None else min(steps, total)
    trajectory = [TrajectoryStep(0, None, lat, cfg)]
    for t in range(last):
        i = coupling_schedule(N, t) + N
        lat, cfg = track_exchange(lat, cfg, i, rng, params, bc)
        if (t + 1) % record_every == 0 or t + 1 == last:
            trajectory.append(TrajectoryStep(t + 1, i, lat, cfg))
    return trajectory
