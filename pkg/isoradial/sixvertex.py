"""
Six-vertex transfer matrices

Weights for cluster weight q and angle theta, with cos(zeta) = sqrt(q) / 2:

    a sin(zeta/2) = sin((1 - theta/pi) zeta),  b sin(zeta/2) = sin(theta zeta / pi),  c = 2 cos(zeta/2)

Vertex types on a row (left arrow h, lower arrow s, upper arrow s', right arrow h',
bit 1 meaning up or right):

    a: s == h, both arrows pass straight      (0,0,0,0) and (1,1,1,1)
    b: s != h, both arrows pass straight      (1,0,0,1) and (0,1,1,0)
    c: s != h, the arrows turn                (1,0,1,0) and (0,1,0,1)

The row is periodic, so the carried horizontal arrow closes on itself.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from itertools import combinations

import numpy as np
from scipy.sparse import csr_matrix, issparse
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import ConvergenceError, ParameterError
from .rcm import as_params

logger = logging.getLogger(__name__)

MAX_WIDTH = 16
MAX_DENSE_DIM = 1000
MAX_COMMUTATOR_WIDTH = 12
RESIDUAL_TOL = 1e-10
MAX_ITERATIONS = 100_000


@dataclass(frozen=True)
class SixVertexWeights:
    a: float
    b: float
    c: float
    zeta: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise ParameterError(f"six-vertex weight {name}={value!r} must be positive")

    def scaled_c(self, factor):
        """Same a and b with c multiplied by `factor`; leaves the weight curve unless factor == 1."""
        return replace(self, c=self.c * factor)


def weights_from(q, theta):
    params = as_params(q)
    if not math.isfinite(theta) or not 0.0 < theta < math.pi:
        raise ParameterError(f"angle theta={theta!r} is outside (0, pi)")
    zeta = math.acos(min(1.0, math.sqrt(params.q) / 2.0))
    t = theta / math.pi
    if zeta < 1e-12:
        # q = 4: the limit zeta -> 0 of the ratios
        return SixVertexWeights(a=2.0 * (1.0 - t), b=2.0 * t, c=2.0, zeta=0.0)
    s = math.sin(zeta / 2.0)
    return SixVertexWeights(
        a=math.sin((1.0 - t) * zeta) / s,
        b=math.sin(t * zeta) / s,
        c=2.0 * math.cos(zeta / 2.0),
        zeta=zeta,
    )


def delta(weights):
    """(a^2 + b^2 - c^2) / (2ab), which equals -sqrt(q)/2 on the weight curve."""
    w = weights
    return (w.a * w.a + w.b * w.b - w.c * w.c) / (2.0 * w.a * w.b)


def _check_sector(N, k):
    if N < 2 or N % 2:
        raise ParameterError(f"row width N must be even and at least 2, got {N}")
    if N > MAX_WIDTH:
        raise ParameterError(f"row width N={N} exceeds the cap of {MAX_WIDTH}")
    if abs(k) > N // 2:
        raise ParameterError(f"sector k={k} is outside [-{N // 2}, {N // 2}]")


def sector_dimension(N, k):
    _check_sector(N, k)
    return math.comb(N, N // 2 + k)


def sector_states(N, k):
    """Row states with N/2 + k up arrows, as sorted bit patterns (bit i is column i)."""
    _check_sector(N, k)
    ups = N // 2 + k
    states = sorted(sum(1 << i for i in cols) for cols in combinations(range(N), ups))
    return np.array(states, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class TransferBlock:
    N: int
    k: int
    weights: SixVertexWeights
    states: np.ndarray
    matrix: object  # ndarray when dense, csr_matrix otherwise

    @property
    def dim(self):
        return len(self.states)

    @property
    def is_dense(self):
        return not issparse(self.matrix)

    @property
    def frozen(self):
        return abs(self.k) == self.N // 2

    def dense(self):
        return self.matrix if self.is_dense else self.matrix.toarray()

    def matvec(self, v):
        return self.matrix @ v

    def is_irreducible(self):
        graph = csr_matrix(self.matrix) if self.is_dense else self.matrix
        n, _ = connected_components(graph, directed=True, connection="strong")
        return n == 1


def build_transfer_block(N, k, weights, dense=None):
    """
    Row-to-row transfer matrix restricted to the sector with N/2 + k up arrows.

    Entry (s, s') sums the weights of every horizontal completion of one row
    taking lower arrows s to upper arrows s'. Dense up to MAX_DENSE_DIM states,
    sparse beyond; pass `dense` to force either.
    """
    states = sector_states(N, k)
    lookup = np.full(1 << N, -1, dtype=np.int64)
    lookup[states] = np.arange(len(states))
    rows, cols, vals = _kernels.transfer_entries(states, N, weights.a, weights.b, weights.c, lookup)
    dim = len(states)
    matrix = csr_matrix((vals, (rows, cols)), shape=(dim, dim))
    if dense is None:
        dense = dim <= MAX_DENSE_DIM
    if dense:
        matrix = matrix.toarray()
    logger.debug("sector N=%d k=%d: %d states, %d entries", N, k, dim, len(vals))
    return TransferBlock(N=N, k=k, weights=weights, states=states, matrix=matrix)


@dataclass(frozen=True)
class PerronPair:
    value: float
    vector: np.ndarray
    residual: float
    iterations: int

    def __iter__(self):
        return iter((self.value, self.vector))


def leading_eigenvalue(block, tol=RESIDUAL_TOL, max_iter=MAX_ITERATIONS):
    """
    Perron-Frobenius eigenvalue and positive eigenvector by power iteration.

    Starts from the all-ones vector; stops when ||Mv - lambda v|| / lambda < tol.
    Raises ConvergenceError after `max_iter` products.
    """
    v = np.ones(block.dim) / block.dim
    value = 0.0
    residual = math.inf
    for it in range(1, max_iter + 1):
        w = block.matvec(v)
        value = float(w.sum() / v.sum())
        if value <= 0.0:
            raise ConvergenceError(f"sector k={block.k}: non-positive Rayleigh estimate {value}")
        residual = float(np.linalg.norm(w - value * v) / (value * np.linalg.norm(v)))
        v = w / w.sum()
        if residual < tol:
            w = block.matvec(v)
            value = float(w.sum())
            residual = float(np.linalg.norm(w - value * v) / (value * np.linalg.norm(v)))
            if it > 10_000:
                logger.warning("sector N=%d k=%d: power iteration took %d steps", block.N, block.k, it)
            if not (v > 0.0).all():
                raise ConvergenceError(f"sector k={block.k}: eigenvector is not strictly positive")
            return PerronPair(value=value, vector=v, residual=residual, iterations=it)
    raise ConvergenceError(
        f"sector N={block.N} k={block.k}: no convergence after {max_iter} iterations (residual {residual:.3e})"
    )


def sector_eigenvalues(N, weights, ks=None):
    ks = range(-(N // 2), N // 2 + 1) if ks is None else ks
    return {k: leading_eigenvalue(build_transfer_block(N, k, weights)).value for k in ks}


def commutator_norm(N, q, theta1, theta2, c_scale=1.0):
    """Largest relative Frobenius norm of [V(theta1), V(theta2)] over all sectors."""
    if N > MAX_COMMUTATOR_WIDTH:
        raise ParameterError(f"commutator check needs N <= {MAX_COMMUTATOR_WIDTH}, got {N}")
    w1 = weights_from(q, theta1).scaled_c(c_scale)
    w2 = weights_from(q, theta2).scaled_c(c_scale)
    worst = 0.0
    for k in range(-(N // 2), N // 2 + 1):
        v1 = build_transfer_block(N, k, w1, dense=True).matrix
        v2 = build_transfer_block(N, k, w2, dense=True).matrix
        comm = np.linalg.norm(v1 @ v2 - v2 @ v1)
        worst = max(worst, float(comm / (np.linalg.norm(v1) * np.linalg.norm(v2))))
    return worst


@dataclass(frozen=True)
class RatioProbe:
    N: int
    gap: int
    ratios: dict  # k -> (log lambda(k + gap) - log lambda(k)) / N

    @property
    def negative(self):
        return all(r < 0.0 for r in self.ratios.values())

    @property
    def growing(self):
        values = [self.ratios[k] for k in sorted(self.ratios)]
        return all(b <= a for a, b in zip(values, values[1:]))


def eigenvalue_ratio_probe(N, q, theta, gap=3):
    """Per-site log ratio of sector eigenvalues k + gap against k, for 0 <= k <= N/2 - gap."""
    weights = weights_from(q, theta)
    ks = range(0, N // 2 - gap + 1)
    if not ks:
        raise ParameterError(f"N={N} has no sector pair {gap} apart")
    values = sector_eigenvalues(N, weights, ks=sorted(set(ks) | {k + gap for k in ks}))
    ratios = {k: (math.log(values[k + gap]) - math.log(values[k])) / N for k in ks}
    return RatioProbe(N=N, gap=gap, ratios=ratios)
