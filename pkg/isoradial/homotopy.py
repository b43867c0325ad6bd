"""
Homotopy classes of loops in a punctured window

A loop is encoded by the oriented grid segments it crosses, read from a base
point; the class is the cyclically reduced word, stored in its least rotation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from matplotlib.path import Path
from scipy.spatial.distance import cdist

from . import _kernels
from .errors import HomotopyError, ParameterError
from .loops import Quad, crossing

logger = logging.getLogger(__name__)

_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PunctureGrid:
    """
    Punctures and the segments between them.

    Letter +(s + 1) is segment s oriented from points[segments[s, 0]] to
    points[segments[s, 1]]; -(s + 1) is the reverse orientation.
    """

    eta: float
    points: np.ndarray  # (P, 2)
    segments: np.ndarray  # (S, 2) point indices

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        segs = np.asarray(self.segments, dtype=np.int64).reshape(-1, 2)
        if len(pts) > 1:
            gaps = cdist(pts, pts) + np.eye(len(pts))
            if gaps.min() <= _TOL:
                raise HomotopyError("puncture points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "segments", segs)

    @classmethod
    def regular(cls, eta, center=(0.0, 0.0), half_width=None):
        """eta Z^2 intersected with the square of half-width 1/eta (or `half_width`) around `center`."""
        if not eta > 0:
            raise ParameterError(f"grid spacing must be positive, got {eta!r}")
        half = 1.0 / eta if half_width is None else half_width
        m = int(math.floor(half / eta + 1e-9))
        ks = range(-m, m + 1)
        index = {}
        pts = []
        for a, b in product(ks, ks):
            index[(a, b)] = len(pts)
            pts.append((center[0] + a * eta, center[1] + b * eta))
        segs = []
        for (a, b), i in index.items():
            if (a + 1, b) in index:
                segs.append((i, index[(a + 1, b)]))
            if (a, b + 1) in index:
                segs.append((i, index[(a, b + 1)]))
        return cls(eta=eta, points=np.array(pts), segments=np.array(segs))

    @classmethod
    def with_anchors(cls, points, segments, eta=None):
        """Arbitrary anchor points joined by the given segments."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        segs = np.asarray(segments, dtype=np.int64).reshape(-1, 2)
        if eta is None:
            eta = float(np.linalg.norm(pts[segs[:, 0]] - pts[segs[:, 1]], axis=1).max()) if len(segs) else 0.0
        return cls(eta=eta, points=pts, segments=segs)

    @property
    def num_letters(self):
        return len(self.segments)

    def inside_count(self, loop):
        pts = _loop_points(loop)
        return int(Path(np.vstack([pts, pts[:1]]), closed=True).contains_points(self.points).sum())


def _loop_points(loop):
    pts = np.asarray(getattr(loop, "points", loop), dtype=float)
    if len(pts) > 1 and np.allclose(pts[0], pts[-1]):
        pts = pts[:-1]
    if len(pts) < 3:
        raise HomotopyError("a closed loop needs at least three vertices")
    return pts


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _point_segment_distance(points, a, b):
    # distances (len(points), len(a))
    ab = b - a
    denom = np.maximum((ab * ab).sum(axis=1), _TOL)
    rel = points[:, None, :] - a[None, :, :]
    t = np.clip((rel * ab[None]).sum(axis=2) / denom, 0.0, 1.0)
    return np.linalg.norm(rel - t[..., None] * ab[None], axis=2)


def word_of_loop(loop, grid):
    """Signed segment ids crossed along the loop, starting from its first vertex off every segment."""
    pts = _loop_points(loop)
    nxt = np.roll(pts, -1, axis=0)
    scale = max(1.0, float(np.abs(pts).max()), float(np.abs(grid.points).max()) if len(grid.points) else 1.0)
    tol = 1e-10 * scale
    if len(grid.points):
        hit = _point_segment_distance(grid.points, pts, nxt)
        if hit.min() <= tol:
            p, i = np.unravel_index(np.argmin(hit), hit.shape)
            raise HomotopyError(f"loop edge {i} passes through puncture {p}; the grid is too coarse")
    if len(grid.segments) == 0:
        return ()
    P = grid.points[grid.segments[:, 0]]
    Q = grid.points[grid.segments[:, 1]]
    on_segment = (_point_segment_distance(pts, P, Q) <= tol).any(axis=1)
    free = np.flatnonzero(~on_segment)
    start = int(free[0]) if len(free) else 0
    pts = np.roll(pts, -start, axis=0)
    nxt = np.roll(pts, -1, axis=0)

    # side of every loop vertex relative to every segment line; points on the line count as left
    side = _orient(P[None], Q[None], pts[:, None])
    side = np.where(side >= 0.0, 1, -1)
    word = []
    for i in range(len(pts)):
        x, y = pts[i], nxt[i]
        cand = np.flatnonzero(side[i] != side[(i + 1) % len(pts)])
        if len(cand) == 0:
            continue
        o1 = _orient(x, y, P[cand])
        o2 = _orient(x, y, Q[cand])
        cross = o1 * o2 < 0.0
        cand, o1 = cand[cross], o1[cross]
        if len(cand) == 0:
            continue
        sx = _orient(P[cand], Q[cand], x)
        sy = _orient(P[cand], Q[cand], y)
        t = sx / (sx - sy)
        for k in np.argsort(t, kind="stable"):
            s = int(cand[k])
            word.append(s + 1 if o1[k] > 0.0 else -(s + 1))
    return tuple(word)


def free_reduce(word):
    """Cancel adjacent (letter, inverse) pairs."""
    stack = []
    for letter in word:
        letter = int(letter)
        if letter == 0:
            raise HomotopyError("0 is not a letter")
        if stack and stack[-1] == -letter:
            stack.pop()
        else:
            stack.append(letter)
    return stack


def canonical_rotation(letters):
    letters = tuple(letters)
    if not letters:
        return letters
    return min(letters[k:] + letters[:k] for k in range(len(letters)))


@dataclass(frozen=True)
class ReducedWord:
    """Cyclically reduced word in its least rotation."""

    letters: tuple = ()

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    @property
    def is_trivial(self):
        return not self.letters

    def inverse(self):
        return reduce(tuple(-a for a in reversed(self.letters)))

    def to_list(self):
        return list(self.letters)


def reduce(word):
    """Free and cyclic reduction to a fixpoint."""
    letters = free_reduce(word)
    lo, hi = 0, len(letters)
    while hi - lo >= 2 and letters[lo] == -letters[hi - 1]:
        lo += 1
        hi -= 1
    return ReducedWord(canonical_rotation(letters[lo:hi]))


def homotopy_class(loop, grid):
    return reduce(word_of_loop(loop, grid))


def _macroscopic(loops, grid):
    total = len(grid.points)
    out = []
    for loop in loops:
        if getattr(loop, "boundary", False):
            continue
        if 2 <= grid.inside_count(loop) < total:
            out.append(loop)
    return out


def family_classes(family, grid):
    """Classes of the loops surrounding at least two but not all punctures, per family index."""
    return {i: [homotopy_class(lp, grid) for lp in _macroscopic(family.family(i), grid)] for i in (0, 1)}


def dH_compare(family, other, grid):
    """True when every macroscopic class on one side is matched on the other, for both families."""
    a, b = family_classes(family, grid), family_classes(other, grid)
    return all(set(a[i]) == set(b[i]) for i in (0, 1))


def class_report(family, grid):
    """Class multiset as JSON-ready lists of signed letters with counts."""
    report = {}
    for i, classes in family_classes(family, grid).items():
        counts = {}
        for c in classes:
            counts[c.letters] = counts.get(c.letters, 0) + 1
        report[f"F{i}"] = [{"word": list(w), "count": n} for w, n in sorted(counts.items())]
    return report


def loop_distance(loop_a, loop_b):
    """Discrete Frechet distance of two closed polylines, minimized over cyclic shifts of the second."""
    a = _loop_points(loop_a)
    b = _loop_points(loop_b)
    a_closed = np.vstack([a, a[:1]])
    best = math.inf
    for k in range(len(b)):
        shifted = np.roll(b, -k, axis=0)
        b_closed = np.vstack([shifted, shifted[:1]])
        d = _kernels.frechet_table(cdist(a_closed, b_closed))[-1, -1]
        best = min(best, float(d))
    return best


def _inside_ball(loop, radius, center):
    return bool(np.linalg.norm(_loop_points(loop) - np.asarray(center), axis=1).max() <= radius)


def dCN_compare(family, other, eps, center=(0.0, 0.0)):
    """Loop-matching comparison at scale eps for loops inside B(center, 1/eps)."""
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps!r}")

    def covered(src, dst):
        candidates = [lp for lp in dst if not getattr(lp, "boundary", False)]
        for lp in src:
            if getattr(lp, "boundary", False) or not _inside_ball(lp, 1.0 / eps, center):
                continue
            if not any(loop_distance(lp, other_lp) <= eps for other_lp in candidates):
                return False
        return True

    for i in (0, 1):
        if not covered(family.family(i), other.family(i)) or not covered(other.family(i), family.family(i)):
            return False
    return True


def quad_family(window, count=4, aspect=(1.0, 2.0)):
    """Axis-aligned rectangles tiling a window at several positions, with both orientations."""
    x0, y0, x1, y1 = window
    quads = []
    for ratio in aspect:
        h = (y1 - y0) / 2.0
        w = min(ratio * h, x1 - x0)
        for k in range(count):
            for m in range(count):
                ax = x0 + (x1 - x0 - w) * k / max(1, count - 1)
                ay = y0 + (y1 - y0 - h) * m / max(1, count - 1)
                quad = Quad.rectangle(ax, ay, ax + w, ay + h)
                quads.append(quad)
                quads.append(quad.rotated())
    return quads


def dSS_quad_compare(cfg, other, quads):
    """Fraction of quads whose crossing outcome differs between the two configurations."""
    quads = list(quads)
    if not quads:
        return 0.0
    differ = sum(crossing(cfg, quad) != crossing(other, quad) for quad in quads)
    return differ / len(quads)
