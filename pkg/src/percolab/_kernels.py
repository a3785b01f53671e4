"""Compiled hot loops: lazy cluster growth in a box and union-find."""

import numba as nb
import numpy as np

from .rng import edge_key, edge_uniform, sample_base


@nb.njit(cache=True, nogil=True)
def find(parent, a):
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        nxt = parent[a]
        parent[a] = root
        a = nxt
    return root


@nb.njit(cache=True, nogil=True)
def union(parent, rank, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra == rb:
        return
    if rank[ra] < rank[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    if rank[ra] == rank[rb]:
        rank[ra] += 1


@nb.njit(cache=True, nogil=True)
def labels_from_edges(n_sites, ends, open_edges):
    parent = np.arange(n_sites)
    rank = np.zeros(n_sites, dtype=np.int64)
    for e in range(ends.shape[0]):
        if open_edges[e]:
            union(parent, rank, ends[e, 0], ends[e, 1])
    out = np.empty(n_sites, dtype=np.int64)
    for i in range(n_sites):
        out[i] = find(parent, i)
    return out


@nb.njit(cache=True, nogil=True)
def grow_block(coords, k, strides, shape, fiber_size, long_table, short_prob,
               allowed, boundary, origin, seed, s0, s1):
    """Breadth-first clusters of ``origin`` for samples s0..s1-1.

    Sites are row-major box indices with the long coordinates varying
    fastest, so a fiber is a contiguous index block. Each candidate edge is
    drawn from the counter-based generator the first time it is inspected
    from a visited site towards an unvisited one.

    Returns (members, offsets, touched) with members of sample s0 + i in
    members[offsets[i]:offsets[i + 1]] in BFS order.
    """
    n_sites = coords.shape[0]
    dim = coords.shape[1]
    n = s1 - s0
    stamp = np.zeros(n_sites, dtype=np.int64)
    queue = np.empty(n_sites, dtype=np.int64)
    cap = max(16, 2 * n)
    members = np.empty(cap, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    touched = np.zeros(n, dtype=np.bool_)
    used = 0
    for i in range(n):
        s = s0 + i
        base = sample_base(seed, s)
        mark = i + 1
        head = 0
        tail = 1
        queue[0] = origin
        stamp[origin] = mark
        while head < tail:
            u = queue[head]
            head += 1
            if boundary[u]:
                touched[i] = True
            cu = coords[u]
            fstart = (u // fiber_size) * fiber_size
            for v in range(fstart, fstart + fiber_size):
                if stamp[v] == mark or not allowed[v]:
                    continue
                r = 0
                cv = coords[v]
                for a in range(k, dim):
                    r += abs(cu[a] - cv[a])
                prob = long_table[r]
                if prob <= 0.0:
                    continue
                if edge_uniform(base, edge_key(cu, cv)) < prob:
                    stamp[v] = mark
                    queue[tail] = v
                    tail += 1
            if short_prob > 0.0:
                for a in range(k):
                    for step in (-1, 1):
                        c = cu[a] - coords[0, a] + step
                        if c < 0 or c >= shape[a]:
                            continue
                        v = u + step * strides[a]
                        if stamp[v] == mark or not allowed[v]:
                            continue
                        if edge_uniform(base, edge_key(cu, coords[v])) < short_prob:
                            stamp[v] = mark
                            queue[tail] = v
                            tail += 1
        if used + tail > cap:
            while used + tail > cap:
                cap *= 2
            grown = np.empty(cap, dtype=np.int64)
            grown[:used] = members[:used]
            members = grown
        members[used:used + tail] = queue[:tail]
        used += tail
        offsets[i + 1] = used
    return members[:used].copy(), offsets, touched


@nb.njit(cache=True, nogil=True)
def connected_block(n_sites, ends, keys, probs, x, y, seed, s0, s1):
    """Per-sample indicator of x <-> y on an explicit edge list."""
    n = s1 - s0
    out = np.zeros(n, dtype=np.bool_)
    parent = np.empty(n_sites, dtype=np.int64)
    rank = np.empty(n_sites, dtype=np.int64)
    for i in range(n):
        base = sample_base(seed, s0 + i)
        for j in range(n_sites):
            parent[j] = j
            rank[j] = 0
        for e in range(ends.shape[0]):
            if edge_uniform(base, keys[e]) < probs[e]:
                union(parent, rank, ends[e, 0], ends[e, 1])
        out[i] = find(parent, x) == find(parent, y)
    return out
