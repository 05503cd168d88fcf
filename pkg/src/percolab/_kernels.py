"""Compiled union-find and search kernels shared by the samplers.

All kernels take plain arrays: ``edges`` is an (E, 2) int64 endpoint table and
configurations are uint8 rows with one entry per edge.
"""
import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True, inline="always")
def union(parent, size, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra == rb:
        return ra
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return ra


@njit(cache=True)
def label_components(n_vertices, edges, open_edges, open_sites):
    """Canonical component labels (numbered by smallest vertex), -1 on closed sites."""
    parent = np.arange(n_vertices)
    size = np.ones(n_vertices, dtype=np.int64)
    for e in range(edges.shape[0]):
        if open_edges[e]:
            a = edges[e, 0]
            b = edges[e, 1]
            if open_sites[a] and open_sites[b]:
                union(parent, size, a, b)
    labels = np.full(n_vertices, -1, dtype=np.int64)
    root_label = np.full(n_vertices, -1, dtype=np.int64)
    count = 0
    for v in range(n_vertices):
        if not open_sites[v]:
            continue
        r = find(parent, v)
        if root_label[r] < 0:
            root_label[r] = count
            count += 1
        labels[v] = root_label[r]
    return labels, count


@njit(cache=True)
def batch_component_counts(n_vertices, edges, configs, frozen_open):
    """Number of components for each row of ``configs``.

    ``frozen_open`` lists extra always-open edges (used for wired boundaries).
    """
    B = configs.shape[0]
    out = np.empty(B, dtype=np.int64)
    parent = np.empty(n_vertices, dtype=np.int64)
    size = np.empty(n_vertices, dtype=np.int64)
    for i in range(B):
        for v in range(n_vertices):
            parent[v] = v
            size[v] = 1
        k = n_vertices
        for j in range(frozen_open.shape[0]):
            a = find(parent, frozen_open[j, 0])
            b = find(parent, frozen_open[j, 1])
            if a != b:
                union(parent, size, a, b)
                k -= 1
        for e in range(edges.shape[0]):
            if configs[i, e]:
                a = find(parent, edges[e, 0])
                b = find(parent, edges[e, 1])
                if a != b:
                    union(parent, size, a, b)
                    k -= 1
        out[i] = k
    return out


@njit(cache=True)
def batch_sets_connected(n_vertices, edges, configs, in_a, in_b):
    """1 where some vertex of set A shares an open cluster with some vertex of set B."""
    B = configs.shape[0]
    out = np.zeros(B, dtype=np.uint8)
    parent = np.empty(n_vertices, dtype=np.int64)
    size = np.empty(n_vertices, dtype=np.int64)
    has_a = np.empty(n_vertices, dtype=np.bool_)
    has_b = np.empty(n_vertices, dtype=np.bool_)
    for i in range(B):
        hit = False
        for v in range(n_vertices):
            parent[v] = v
            size[v] = 1
            has_a[v] = in_a[v]
            has_b[v] = in_b[v]
            if in_a[v] and in_b[v]:
                hit = True
        if not hit:
            for e in range(edges.shape[0]):
                if configs[i, e]:
                    ra = find(parent, edges[e, 0])
                    rb = find(parent, edges[e, 1])
                    if ra != rb:
                        r = union(parent, size, ra, rb)
                        ha = has_a[ra] or has_a[rb]
                        hb = has_b[ra] or has_b[rb]
                        has_a[r] = ha
                        has_b[r] = hb
                        if ha and hb:
                            hit = True
                            break
        out[i] = 1 if hit else 0
    return out


@njit(cache=True)
def connection_thresholds(n_vertices, edges, uniforms, in_a, in_b):
    """Smallest p at which the configuration ``u < p`` connects A to B, per row.

    Edges are added in increasing order of their variate (Newman-Ziff); the
    answer is the variate of the edge that first joins an A-cluster to a
    B-cluster, so ``u < p`` connects A and B exactly when ``p > threshold``.
    Returns ``inf`` if A and B are never connected and ``-inf`` if they overlap.
    """
    R = uniforms.shape[0]
    out = np.empty(R)
    parent = np.empty(n_vertices, dtype=np.int64)
    size = np.empty(n_vertices, dtype=np.int64)
    has_a = np.empty(n_vertices, dtype=np.bool_)
    has_b = np.empty(n_vertices, dtype=np.bool_)
    for i in range(R):
        overlap = False
        for v in range(n_vertices):
            parent[v] = v
            size[v] = 1
            has_a[v] = in_a[v]
            has_b[v] = in_b[v]
            if in_a[v] and in_b[v]:
                overlap = True
        if overlap:
            out[i] = -np.inf
            continue
        order = np.argsort(uniforms[i])
        out[i] = np.inf
        for e in order:
            ra = find(parent, edges[e, 0])
            rb = find(parent, edges[e, 1])
            if ra != rb:
                r = union(parent, size, ra, rb)
                ha = has_a[ra] or has_a[rb]
                hb = has_b[ra] or has_b[rb]
                has_a[r] = ha
                has_b[r] = hb
                if ha and hb:
                    out[i] = uniforms[i, e]
                    break
    return out


@njit(cache=True)
def connected_avoiding(indptr, nbrs, eids, state, source, target, skip_edge, mark, stamp, queue):
    """BFS over open edges other than ``skip_edge``; True if ``target`` is reached.

    ``mark`` is a scratch array compared against ``stamp`` to avoid clearing it.
    """
    if source == target:
        return True
    head = 0
    tail = 0
    queue[tail] = source
    tail += 1
    mark[source] = stamp
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(indptr[v], indptr[v + 1]):
            e = eids[k]
            if e == skip_edge or not state[e]:
                continue
            w = nbrs[k]
            if mark[w] == stamp:
                continue
            if w == target:
                return True
            mark[w] = stamp
            queue[tail] = w
            tail += 1
    return False


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def stream_uniform(key, index):
    """Output ``index`` of the SplitMix64 stream seeded with ``key``, as a double in [0, 1)."""
    z = mix64(key + (np.uint64(index) + np.uint64(1)) * _GOLDEN)
    return np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def replica_key(base, index):
    return mix64(base + (np.uint64(index) + np.uint64(1)) * _GOLDEN)


@njit(cache=True)
def reach_batch(indptr, nbrs, eids, base, start, stop, p, source, level, stop_level):
    """Largest level reached by the source cluster, per replica, with lazily drawn edge variates.

    Edge ``e`` of replica ``i`` is open iff output ``e`` of the replica's
    SplitMix64 stream is below ``p``; only edges at the cluster frontier are
    evaluated.
    """
    V = indptr.shape[0] - 1
    mark = np.zeros(V, dtype=np.int64)
    queue = np.empty(V, dtype=np.int64)
    out = np.empty(stop - start, dtype=np.int64)
    for i in range(start, stop):
        key = replica_key(base, i)
        stamp = i - start + 1
        head = 0
        tail = 1
        queue[0] = source
        mark[source] = stamp
        best = level[source]
        while head < tail and best < stop_level:
            v = queue[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                w = nbrs[k]
                if mark[w] == stamp:
                    continue
                if stream_uniform(key, eids[k]) >= p:
                    continue
                mark[w] = stamp
                if level[w] > best:
                    best = level[w]
                queue[tail] = w
                tail += 1
        out[i - start] = best
    return out


@njit(cache=True)
def stream_block(key, n):
    out = np.empty(n)
    for e in range(n):
        out[e] = stream_uniform(key, e)
    return out
