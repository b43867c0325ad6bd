"""
Random-cluster model on finite graphs

Isoradial edge weights, boundary conditions, exact enumeration on small graphs,
connectivity queries, single-edge heat-bath sampling and the Edwards-Sokal
colouring. Any object exposing `num_vertices`, `endpoints` (E, 2), `angles` (E,)
and `boundary_vertices` can be used as a graph; an optional `probabilities`
attribute overrides the isoradial weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property, lru_cache

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from . import _kernels
from .config import get_settings
from .errors import GraphTooLargeError, ParameterError

logger = logging.getLogger(__name__)

MAX_ENUMERATION_EDGES = 24
_Q_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Cluster weight q in [1, 4]."""

    q: float

    def __post_init__(self):
        q = float(self.q)
        if not math.isfinite(q) or not 1.0 - _Q_TOL <= q <= 4.0 + _Q_TOL:
            raise ParameterError(f"cluster weight q={self.q!r} is outside [1, 4]")
        object.__setattr__(self, "q", min(max(q, 1.0), 4.0))

    @property
    def r(self):
        return math.acos(math.sqrt(self.q) / 2.0) / math.pi


def as_params(params):
    return params if isinstance(params, ModelParams) else ModelParams(float(params))


def critical_point(q):
    """p_c = sqrt(q) / (1 + sqrt(q)), the weight of a square-lattice edge."""
    if not q > 0:
        raise ParameterError(f"cluster weight must be positive, got {q!r}")
    s = math.sqrt(q)
    return s / (1.0 + s)


def isoradial_weight(params, theta):
    """
    Critical isoradial weight p_e of an edge subtending angle theta.

    Works on scalars and arrays. For q < 4, y = sqrt(q) sin(r (pi - theta)) / sin(r theta)
    and p = y / (1 + y); q = 4 uses the limit (2 pi - 2 theta) / (2 pi - theta).
    """
    params = as_params(params)
    th = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(th)) or np.any(th <= 0.0) or np.any(th >= math.pi):
        raise ParameterError(f"subtended angle outside (0, pi): {theta!r}")
    if params.q >= 4.0 - _Q_TOL:
        p = (2.0 * math.pi - 2.0 * th) / (2.0 * math.pi - th)
    else:
        r = params.r
        y = math.sqrt(params.q) * np.sin(r * (math.pi - th)) / np.sin(r * th)
        p = y / (1.0 + y)
    return float(p) if np.ndim(p) == 0 else p


def weight_ratio(p):
    """y = p / (1 - p)."""
    return p / (1.0 - p)


class BoundaryKind(str, Enum):
    FREE = "free"
    WIRED = "wired"


@dataclass(frozen=True)
class BoundaryConditions:
    """
    Partition of boundary vertices into wired classes.

    Either a named kind (FREE: all singletons, WIRED: one class holding every
    boundary vertex of the graph) or an explicit tuple of classes; boundary
    vertices left out of every class are singletons.
    """

    kind: BoundaryKind | None = None
    classes: tuple = ()

    def __post_init__(self):
        if self.kind is not None:
            object.__setattr__(self, "kind", BoundaryKind(self.kind))
        object.__setattr__(self, "classes", tuple(frozenset(int(v) for v in c) for c in self.classes))

    @classmethod
    def partition(cls, classes):
        return cls(kind=None, classes=tuple(classes))

    def resolve(self, graph):
        """Wired classes (each with two or more vertices) on `graph`."""
        if _is_torus(graph):
            return ()
        boundary = {int(v) for v in graph.boundary_vertices}
        if self.kind is BoundaryKind.FREE:
            return ()
        if self.kind is BoundaryKind.WIRED:
            return (frozenset(boundary),) if len(boundary) > 1 else ()
        used = set()
        for c in self.classes:
            if not c <= boundary:
                raise ParameterError(f"wired class contains non-boundary vertices: {sorted(c - boundary)}")
            if used & c:
                raise ParameterError(f"wired classes overlap on {sorted(used & c)}")
            used |= c
        return tuple(c for c in self.classes if len(c) > 1)

    def to_dict(self):
        if self.kind is not None:
            return {"kind": self.kind.value}
        return {"classes": [sorted(c) for c in self.classes]}

    @classmethod
    def from_dict(cls, data):
        if "kind" in data:
            return cls(kind=data["kind"])
        return cls.partition(data.get("classes", ()))


FREE = BoundaryConditions(kind=BoundaryKind.FREE)
WIRED = BoundaryConditions(kind=BoundaryKind.WIRED)


def as_boundary(bc):
    if bc is None:
        return FREE
    if isinstance(bc, BoundaryConditions):
        return bc
    return BoundaryConditions(kind=bc)


def _is_torus(graph):
    topology = getattr(graph, "topology", None)
    return topology is not None and getattr(topology, "periodic_columns", False)


@dataclass(frozen=True, eq=False)
class SmallGraph:
    """Explicit graph for oracles: triangles, stars, single edges."""

    num_vertices: int
    endpoints: np.ndarray
    angles: np.ndarray | None = None
    probabilities: np.ndarray | None = None
    boundary_vertices: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "endpoints", np.asarray(self.endpoints, dtype=np.int64).reshape(-1, 2))
        if self.angles is not None:
            object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        if self.probabilities is not None:
            object.__setattr__(self, "probabilities", np.asarray(self.probabilities, dtype=float))
        if self.boundary_vertices is None:
            object.__setattr__(self, "boundary_vertices", np.arange(self.num_vertices))
        if self.angles is None and self.probabilities is None:
            raise ParameterError("a small graph needs angles or probabilities")

    @property
    def num_edges(self):
        return len(self.endpoints)


def single_edge_graph(theta=None, p=None):
    return SmallGraph(
        2,
        [(0, 1)],
        angles=None if theta is None else [theta],
        probabilities=None if p is None else [p],
    )


def triangle_graph(angles=None, probabilities=None):
    """Vertices A, B, C = 0, 1, 2; edges AB, BC, CA."""
    return SmallGraph(3, [(0, 1), (1, 2), (2, 0)], angles=angles, probabilities=probabilities)


def star_graph(angles=None, probabilities=None):
    """Vertices A, B, C, O = 0, 1, 2, 3; edges OA, OB, OC."""
    return SmallGraph(4, [(3, 0), (3, 1), (3, 2)], angles=angles, probabilities=probabilities)


def edge_probabilities(graph, params):
    probs = getattr(graph, "probabilities", None)
    if probs is not None:
        return np.asarray(probs, dtype=float)
    return np.atleast_1d(isoradial_weight(params, graph.angles))


@lru_cache(maxsize=128)
def _wiring(graph, bc):
    # vertex -> node after contracting each wired class
    node_of = np.arange(graph.num_vertices, dtype=np.int64)
    for c in bc.resolve(graph):
        members = np.fromiter(sorted(c), dtype=np.int64)
        node_of[members] = members[0]
    _, node_of = np.unique(node_of, return_inverse=True)
    return node_of.astype(np.int64), int(node_of.max()) + 1 if len(node_of) else 0


@lru_cache(maxsize=128)
def _adjacency(graph, bc):
    node_of, n = _wiring(graph, bc)
    ends = node_of[graph.endpoints] if len(graph.endpoints) else np.empty((0, 2), dtype=np.int64)
    m = len(ends)
    src = np.concatenate([ends[:, 0], ends[:, 1]])
    dst = np.concatenate([ends[:, 1], ends[:, 0]])
    eid = np.concatenate([np.arange(m), np.arange(m)]).astype(np.int64)
    order = np.argsort(src, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(np.bincount(src, minlength=n))
    return np.ascontiguousarray(ends), ptr, eid[order], dst[order].astype(np.int64), n


@dataclass(frozen=True, eq=False)
class Configuration:
    """Open/closed state of every edge of a graph. The state array is read-only."""

    graph: object
    open: np.ndarray
    _labels: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        state = np.array(self.open, dtype=bool).reshape(-1)
        if len(state) != len(self.graph.endpoints):
            raise ParameterError(f"configuration has {len(state)} entries for {len(self.graph.endpoints)} edges")
        state.setflags(write=False)
        object.__setattr__(self, "open", state)

    @classmethod
    def empty(cls, graph):
        return cls(graph, np.zeros(len(graph.endpoints), dtype=bool))

    @classmethod
    def full(cls, graph):
        return cls(graph, np.ones(len(graph.endpoints), dtype=bool))

    @classmethod
    def from_mask(cls, graph, mask):
        m = len(graph.endpoints)
        return cls(graph, (int(mask) >> np.arange(m)) & 1)

    @property
    def num_open(self):
        return int(self.open.sum())

    @cached_property
    def mask(self):
        return int(sum(1 << int(e) for e in np.flatnonzero(self.open)))

    def with_edge(self, e, value):
        state = self.open.copy()
        state[e] = bool(value)
        return Configuration(self.graph, state)

    def labels(self, bc=FREE):
        """Cluster label of every vertex and the number of clusters."""
        bc = as_boundary(bc)
        if bc not in self._labels:
            node_of, n = _wiring(self.graph, bc)
            ends = node_of[self.graph.endpoints[self.open]]
            adj = coo_matrix((np.ones(len(ends)), (ends[:, 0], ends[:, 1])), shape=(n, n))
            k, node_labels = connected_components(adj, directed=False)
            self._labels[bc] = (node_labels[node_of], int(k))
        return self._labels[bc]

    def same_state(self, other):
        return np.array_equal(self.open, other.open)


def cluster_count(cfg, bc=FREE):
    return cfg.labels(bc)[1]


def connected(cfg, bc, u, v):
    labels, _ = cfg.labels(bc)
    return bool(labels[u] == labels[v])


def log_weight(cfg, bc, params):
    params = as_params(params)
    p = edge_probabilities(cfg.graph, params)
    k = cluster_count(cfg, bc)
    with np.errstate(divide="ignore"):
        edges = np.where(cfg.open, np.log(p), np.log1p(-p)).sum()
    return k * math.log(params.q) + float(edges)


def rcm_unnormalized_weight(cfg, bc, params):
    """q^k(omega^xi) * prod p_e^omega_e (1 - p_e)^(1 - omega_e)."""
    return math.exp(log_weight(cfg, bc, params))


def masks_to_states(masks, num_edges):
    masks = np.asarray(masks, dtype=np.int64)
    return ((masks[..., None] >> np.arange(num_edges)) & 1).astype(bool)


def states_to_masks(states):
    states = np.asarray(states, dtype=np.int64)
    return (states << np.arange(states.shape[-1])).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Law of the model on every configuration; probabilities[mask], bit e of mask is edge e."""

    graph: object
    bc: BoundaryConditions
    params: ModelParams
    probabilities: np.ndarray

    @property
    def num_edges(self):
        return len(self.graph.endpoints)

    def probability(self, cfg):
        mask = cfg.mask if isinstance(cfg, Configuration) else int(cfg)
        return float(self.probabilities[mask])

    def marginals(self):
        masks = np.arange(len(self.probabilities))
        return np.array([self.probabilities[(masks >> e) & 1 == 1].sum() for e in range(self.num_edges)])

    def event_probability(self, event):
        """P[event] for a predicate taking a Configuration."""
        total = 0.0
        for mask in np.flatnonzero(self.probabilities > 0.0):
            if event(Configuration.from_mask(self.graph, mask)):
                total += self.probabilities[mask]
        return float(total)

    def total_variation(self, other):
        q = other.probabilities if isinstance(other, ExactDistribution) else np.asarray(other, dtype=float)
        return 0.5 * float(np.abs(self.probabilities - q).sum())

    def sample(self, rng, size):
        return rng.choice(len(self.probabilities), size=size, p=self.probabilities)


def exact_distribution(graph, bc, params):
    """Full enumeration of the 2^|E| configurations (|E| <= 24)."""
    params = as_params(params)
    bc = as_boundary(bc)
    m = len(graph.endpoints)
    if m > MAX_ENUMERATION_EDGES:
        raise GraphTooLargeError(f"{m} edges exceeds the enumeration cap of {MAX_ENUMERATION_EDGES}")
    p = edge_probabilities(graph, params)
    ends, _, _, _, n = _adjacency(graph, bc)
    with np.errstate(divide="ignore"):
        log_p, log_1mp = np.log(p), np.log1p(-p)
    logw = _kernels.enumerate_log_weights(n, ends, log_p, log_1mp, math.log(params.q))
    probs = np.exp(logw - logsumexp(logw))
    logger.debug("enumerated %d configurations on %d edges", len(probs), m)
    return ExactDistribution(graph=graph, bc=bc, params=params, probabilities=probs)


def conditional_open_probability(cfg, bc, params, edge):
    """p_e when the endpoints of e are joined in omega minus e, else p_e / (p_e + q (1 - p_e))."""
    params = as_params(params)
    bc = as_boundary(bc)
    p = float(edge_probabilities(cfg.graph, params)[edge])
    ends, ptr, eid, other, _ = _adjacency(cfg.graph, bc)
    if _kernels.edge_connected(cfg.open.astype(np.uint8), edge, ends, ptr, eid, other):
        return p
    return p / (p + params.q * (1.0 - p))


def heat_bath_step(cfg, bc, params, rng, edge):
    prob = conditional_open_probability(cfg, bc, params, edge)
    return cfg.with_edge(edge, rng.random() < prob)


def make_rng(seed=None, chain_id=0):
    """Counter-based stream for one chain, derived from (seed, chain_id)."""
    if seed is None:
        seed = get_settings().seed
    return Generator(Philox(SeedSequence([int(seed), int(chain_id)])))


def default_burn_in(graph):
    size = max(getattr(graph, "width", 0), getattr(graph, "height", 0)) or graph.num_vertices
    return get_settings().burn_in_factor * size


class HeatBathChain:
    """Systematic-scan heat-bath chain, started from the all-closed configuration."""

    def __init__(self, graph, bc, params, seed=None, chain_id=0, initial=None):
        self.graph = graph
        self.bc = as_boundary(bc)
        self.params = as_params(params)
        self.rng = make_rng(seed, chain_id)
        self.probs = np.ascontiguousarray(edge_probabilities(graph, self.params))
        self._ends, self._ptr, self._eid, self._other, n = _adjacency(graph, self.bc)
        self._seen = np.zeros(n, dtype=np.int64)
        self._stamp = 1
        m = len(graph.endpoints)
        self.state = np.zeros(m, dtype=np.uint8) if initial is None else np.asarray(initial, dtype=np.uint8).copy()
        self.sweeps = 0

    def sweep(self, count=1):
        for _ in range(count):
            uniforms = self.rng.random(len(self.state))
            self._stamp = _kernels.heat_bath_sweep(
                self.state, self._ends, self.probs, self.params.q, uniforms,
                self._ptr, self._eid, self._other, self._seen, self._stamp,
            )
        self.sweeps += count
        return self

    def configuration(self):
        return Configuration(self.graph, self.state.astype(bool))


def sample_mcmc(graph, bc, params, sweeps, burn_in=None, seed=None, chain_id=0):
    """Final state after burn_in + sweeps heat-bath sweeps; deterministic in (seed, chain_id)."""
    if sweeps < 1:
        raise ParameterError(f"sweeps must be positive, got {sweeps}")
    if burn_in is None:
        burn_in = default_burn_in(graph)
    chain = HeatBathChain(graph, bc, params, seed=seed, chain_id=chain_id)
    chain.sweep(burn_in + sweeps)
    logger.debug("chain %s: %d sweeps on %d edges", chain_id, chain.sweeps, len(chain.state))
    return chain.configuration()


def sample_chain(graph, bc, params, samples, thin=1, burn_in=None, seed=None, chain_id=0):
    """States (samples, E) recorded every `thin` sweeps after burn-in."""
    if samples < 1 or thin < 1:
        raise ParameterError("samples and thin must be positive")
    if burn_in is None:
        burn_in = default_burn_in(graph)
    chain = HeatBathChain(graph, bc, params, seed=seed, chain_id=chain_id).sweep(burn_in)
    out = np.empty((samples, len(chain.state)), dtype=bool)
    for s in range(samples):
        chain.sweep(thin)
        out[s] = chain.state
    return out


def edwards_sokal_color(cfg, q_int, rng):
    """Independent uniform colour in 1..q per free-boundary cluster."""
    if q_int not in (2, 3, 4):
        raise ParameterError(f"Potts colouring needs q in {{2, 3, 4}}, got {q_int!r}")
    labels, k = cfg.labels(FREE)
    colours = rng.integers(1, q_int + 1, size=k)
    return colours[labels]
