"""Compiled inner loops."""

import numpy as np
from numba import njit


@njit(cache=True)
def _joined(start, target, skip, state, adj_ptr, adj_edge, adj_other, seen, queue_a, queue_b, stamp):
    # Bidirectional search over open edges other than `skip`, expanding both frontiers in turn.
    # seen[x] == stamp marks the side of start, seen[x] == -stamp the side of target.
    if start == target:
        return True
    seen[start] = stamp
    seen[target] = -stamp
    head_a, tail_a = 0, 1
    head_b, tail_b = 0, 1
    queue_a[0] = start
    queue_b[0] = target
    while head_a < tail_a and head_b < tail_b:
        x = queue_a[head_a]
        head_a += 1
        for k in range(adj_ptr[x], adj_ptr[x + 1]):
            e = adj_edge[k]
            if e == skip or not state[e]:
                continue
            y = adj_other[k]
            if seen[y] == -stamp:
                return True
            if seen[y] != stamp:
                seen[y] = stamp
                queue_a[tail_a] = y
                tail_a += 1
        x = queue_b[head_b]
        head_b += 1
        for k in range(adj_ptr[x], adj_ptr[x + 1]):
            e = adj_edge[k]
            if e == skip or not state[e]:
                continue
            y = adj_other[k]
            if seen[y] == stamp:
                return True
            if seen[y] != -stamp:
                seen[y] = -stamp
                queue_b[tail_b] = y
                tail_b += 1
    return False


@njit(cache=True)
def heat_bath_sweep(state, ends, probs, q, uniforms, adj_ptr, adj_edge, adj_other, seen, stamp0):
    """One systematic scan over all edges, in index order. Returns the next free stamp."""
    n = adj_ptr.shape[0] - 1
    queue_a = np.empty(n, dtype=np.int64)
    queue_b = np.empty(n, dtype=np.int64)
    stamp = stamp0
    for e in range(ends.shape[0]):
        p = probs[e]
        if _joined(ends[e, 0], ends[e, 1], e, state, adj_ptr, adj_edge, adj_other, seen, queue_a, queue_b, stamp):
            prob = p
        else:
            prob = p / (p + q * (1.0 - p))
        state[e] = 1 if uniforms[e] < prob else 0
        stamp += 1
    return stamp


@njit(cache=True)
def edge_connected(state, e, ends, adj_ptr, adj_edge, adj_other):
    """Whether the endpoints of e are joined by open edges other than e."""
    n = adj_ptr.shape[0] - 1
    seen = np.zeros(n, dtype=np.int64)
    queue_a = np.empty(n, dtype=np.int64)
    queue_b = np.empty(n, dtype=np.int64)
    return _joined(ends[e, 0], ends[e, 1], e, state, adj_ptr, adj_edge, adj_other, seen, queue_a, queue_b, 1)


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def enumerate_log_weights(n_nodes, ends, log_p, log_1mp, log_q):
    """Unnormalized log weight of every configuration, indexed by bitmask (bit e is edge e)."""
    m = ends.shape[0]
    total = 1 << m
    out = np.empty(total, dtype=np.float64)
    parent = np.empty(n_nodes, dtype=np.int64)
    for mask in range(total):
        for x in range(n_nodes):
            parent[x] = x
        clusters = n_nodes
        acc = 0.0
        for e in range(m):
            if (mask >> e) & 1:
                acc += log_p[e]
                a = _find(parent, ends[e, 0])
                b = _find(parent, ends[e, 1])
                if a != b:
                    parent[a] = b
                    clusters -= 1
            else:
                acc += log_1mp[e]
        out[mask] = acc + clusters * log_q
    return out


@njit(cache=True)
def frechet_table(dist):
    """Discrete Frechet coupling table; the distance is the last entry."""
    p, q = dist.shape
    ret = np.empty((p, q), dtype=np.float64)
    ret[0, 0] = dist[0, 0]
    for i in range(1, p):
        ret[i, 0] = max(ret[i - 1, 0], dist[i, 0])
    for j in range(1, q):
        ret[0, j] = max(ret[0, j - 1], dist[0, j])
    for i in range(1, p):
        for j in range(1, q):
            ret[i, j] = max(min(ret[i - 1, j], ret[i, j - 1], ret[i - 1, j - 1]), dist[i, j])
    return ret


@njit(cache=True)
def _row_completions(s, n, a, b, c, lookup, rows, cols, vals, fill, row_index):
    # Depth-first walk along the row carrying the horizontal arrow; periodic closure h_N == h_0.
    count = 0
    stack_col = np.empty(2 * n + 2, dtype=np.int64)
    stack_h = np.empty(2 * n + 2, dtype=np.int64)
    stack_top = np.empty(2 * n + 2, dtype=np.int64)
    stack_w = np.empty(2 * n + 2, dtype=np.float64)
    for h0 in range(2):
        depth = 0
        stack_col[0] = 0
        stack_h[0] = h0
        stack_top[0] = 0
        stack_w[0] = 1.0
        depth = 1
        while depth > 0:
            depth -= 1
            col = stack_col[depth]
            h = stack_h[depth]
            top = stack_top[depth]
            w = stack_w[depth]
            if col == n:
                if h == h0:
                    j = lookup[top]
                    if j >= 0:
                        if fill:
                            rows[count] = row_index
                            cols[count] = j
                            vals[count] = w
                        count += 1
                continue
            si = (s >> col) & 1
            if si == h:
                stack_col[depth] = col + 1
                stack_h[depth] = h
                stack_top[depth] = top | (si << col)
                stack_w[depth] = w * a
                depth += 1
            else:
                # arrows pass straight through
                stack_col[depth] = col + 1
                stack_h[depth] = h
                stack_top[depth] = top | (si << col)
                stack_w[depth] = w * b
                depth += 1
                # arrows turn
                stack_col[depth] = col + 1
                stack_h[depth] = si
                stack_top[depth] = top | (h << col)
                stack_w[depth] = w * c
                depth += 1
    return count


@njit(cache=True)
def transfer_entries(states, n, a, b, c, lookup):
    """COO entries (row, col, weight) of the row-to-row transfer matrix on one sector."""
    dummy_i = np.empty(0, dtype=np.int64)
    dummy_f = np.empty(0, dtype=np.float64)
    total = 0
    for r in range(states.shape[0]):
        total += _row_completions(states[r], n, a, b, c, lookup, dummy_i, dummy_i, dummy_f, False, r)
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    vals = np.empty(total, dtype=np.float64)
    offset = 0
    for r in range(states.shape[0]):
        k = _row_completions(
            states[r], n, a, b, c, lookup, rows[offset:], cols[offset:], vals[offset:], True, r
        )
        offset += k
    return rows, cols, vals


@njit(cache=True)
def strip_enumeration(n_nodes, ends, base_open, strip, log_p, log_1mp, log_q, tracked):
    """
    Every assignment of the strip edges on top of fixed outside edges.

    Returns the log weight (strip factors and q^clusters) and the canonical
    cluster labels of the tracked vertices, one row per strip mask.
    """
    m = ends.shape[0]
    s = strip.shape[0]
    t = tracked.shape[0]
    in_strip = np.zeros(m, dtype=np.uint8)
    for j in range(s):
        in_strip[strip[j]] = 1
    base = np.arange(n_nodes)
    clusters0 = n_nodes
    for e in range(m):
        if in_strip[e] == 0 and base_open[e]:
            a = _find(base, ends[e, 0])
            b = _find(base, ends[e, 1])
            if a != b:
                base[a] = b
                clusters0 -= 1
    total = 1 << s
    logw = np.empty(total, dtype=np.float64)
    labels = np.empty((total, t), dtype=np.int16)
    parent = np.empty(n_nodes, dtype=np.int64)
    first = np.full(n_nodes, -1, dtype=np.int64)
    for mask in range(total):
        parent[:] = base
        clusters = clusters0
        acc = 0.0
        for j in range(s):
            e = strip[j]
            if (mask >> j) & 1:
                acc += log_p[e]
                a = _find(parent, ends[e, 0])
                b = _find(parent, ends[e, 1])
                if a != b:
                    parent[a] = b
                    clusters -= 1
            else:
                acc += log_1mp[e]
        logw[mask] = acc + clusters * log_q
        nxt = 0
        for k in range(t):
            r = _find(parent, tracked[k])
            if first[r] < 0:
                first[r] = nxt
                nxt += 1
            labels[mask, k] = first[r]
        for k in range(t):
            first[_find(parent, tracked[k])] = -1
    return logw, labels
