"""
Monte Carlo sampling of bond configurations and connectivity estimators.

Every estimator is a pure function of its inputs and an :class:`RngSeed`.
Samples are processed in fixed-size blocks of consecutive stream indices;
``workers`` only changes which thread runs a block, never the result.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .model import Box, Edge, ModelParams, SplitPoint, enumerate_edges, l1_norm, long_probability_table
from .rng import RngSeed, edge_keys, open_mask

BLOCK_SIZE = 4096


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_samples: int
    site: Optional[SplitPoint] = None
    touched_fraction: Optional[float] = None

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.mean * factor, self.stderr * factor, self.n_samples,
                        self.site, self.touched_fraction)


def bernoulli_estimate(count: int, n: int) -> Estimate:
    mean = count / n
    return Estimate(mean, math.sqrt(mean * (1.0 - mean) / n), n)


def sample_mean_estimate(values: np.ndarray) -> Estimate:
    n = len(values)
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, stderr, n)


def run_blocks(fn: Callable[[int, int], object], start: int, n: int, workers: int = 1) -> list:
    """Apply ``fn(s0, s1)`` to consecutive fixed blocks; results in index order."""
    bounds = [(s, min(s + BLOCK_SIZE, start + n)) for s in range(start, start + n, BLOCK_SIZE)]
    if workers <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


@dataclass(frozen=True)
class Configuration:
    box: Box
    params: ModelParams
    open_edges: frozenset
    seed: RngSeed


class _Geometry:
    """Array form of a box for the compiled kernels."""

    def __init__(self, box: Box, p: ModelParams):
        box.check(p)
        self.box = box
        self.params = p
        self.k = p.k
        shape = np.array(box.shape, dtype=np.int64)
        self.shape = shape
        self.n_sites = int(np.prod(shape))
        grids = np.indices(box.shape).reshape(len(box.shape), -1).T
        self.coords = np.ascontiguousarray(grids + np.array(box.lo, dtype=np.int64))
        strides = np.ones(len(shape), dtype=np.int64)
        for a in range(len(shape) - 2, -1, -1):
            strides[a] = strides[a + 1] * shape[a + 1]
        self.strides = strides
        self.fiber_size = box.fiber_size
        max_r = int(sum(int(n) - 1 for n in shape[p.k:]))
        self.long_table = np.array(long_probability_table(p, max_r), dtype=np.float64)
        self.short_prob = p.beta
        lo = np.array(box.lo)
        hi = np.array(box.hi)
        self.boundary = np.any((self.coords == lo) | (self.coords == hi), axis=1)

    @cached_property
    def short_norm(self) -> np.ndarray:
        return np.abs(self.coords[:, : self.k]).sum(axis=1)

    def index(self, x: SplitPoint) -> int:
        x.check(self.params.k, self.params.d)
        return self.box.index(x)


@dataclass
class ClusterSamples:
    """Clusters of one origin over ``n`` consecutive samples."""

    geometry: _Geometry
    origin: int
    members: np.ndarray
    offsets: np.ndarray
    touched: np.ndarray
    seed: RngSeed

    @property
    def n(self) -> int:
        return len(self.offsets) - 1

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    @cached_property
    def sample_of_member(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), self.sizes)

    @cached_property
    def hits(self) -> np.ndarray:
        """Number of samples in which each box site joined the cluster."""
        return np.bincount(self.members, minlength=self.geometry.n_sites)

    def per_sample_sum(self, site_weights: np.ndarray) -> np.ndarray:
        """For each sample, sum of ``site_weights`` over the cluster members."""
        return np.bincount(self.sample_of_member, weights=site_weights[self.members],
                           minlength=self.n)

    def tau(self, y: SplitPoint) -> Estimate:
        idx = self.geometry.index(y)
        return bernoulli_estimate(int(self.hits[idx]), self.n)


def sample_clusters(origin: SplitPoint, box: Box, p: ModelParams, n: int, seed: RngSeed,
                    workers: int = 1, allowed: Optional[np.ndarray] = None,
                    geometry: Optional[_Geometry] = None) -> ClusterSamples:
    """Grow the open cluster of ``origin`` in ``box`` for ``n`` samples."""
    if n < 1:
        raise ValueError("n must be at least 1")
    geo = geometry or _Geometry(box, p)
    o = geo.index(origin)
    if allowed is None:
        allowed = np.ones(geo.n_sites, dtype=np.bool_)
    if not allowed[o]:
        raise ValueError(f"origin {origin} is outside the allowed site set")

    def block(s0, s1):
        return _kernels.grow_block(geo.coords, geo.k, geo.strides, geo.shape, geo.fiber_size,
                                   geo.long_table, geo.short_prob, allowed, geo.boundary,
                                   o, np.uint64(seed.seed), s0, s1)

    parts = run_blocks(block, seed.stream, n, workers)
    members = np.concatenate([m for m, _, _ in parts])
    offsets = [np.zeros(1, dtype=np.int64)]
    total = 0
    for m, off, _ in parts:
        offsets.append(off[1:] + total)
        total += len(m)
    return ClusterSamples(geo, o, members, np.concatenate(offsets),
                          np.concatenate([t for _, _, t in parts]), seed)


def _edge_arrays(edges: Sequence[Edge]):
    a = np.array([e.u.coords for e in edges], dtype=np.int64).reshape(len(edges), -1)
    b = np.array([e.v.coords for e in edges], dtype=np.int64).reshape(len(edges), -1)
    probs = np.array([e.probability for e in edges], dtype=np.float64)
    return a, b, probs


def sample_configuration(box: Box, p: ModelParams, seed: RngSeed) -> Configuration:
    """Open each candidate edge of ``box`` independently with its bond probability."""
    edges = enumerate_edges(box, p)
    if not edges:
        return Configuration(box, p, frozenset(), seed)
    a, b, probs = _edge_arrays(edges)
    state = open_mask(np.uint64(seed.seed), np.uint64(seed.stream), edge_keys(a, b), probs)
    return Configuration(box, p, frozenset((e.u, e.v) for e, s in zip(edges, state) if s), seed)


class UnionFind:
    """Disjoint sets over hashable items with path halving and union by size."""

    def __init__(self, items: Iterable = ()):
        self.parent = {}
        self.size = {}
        for x in items:
            self.add(x)

    def add(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra

    def groups(self) -> list[frozenset]:
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), set()).add(x)
        return [frozenset(g) for g in out.values()]


def components(c: Configuration) -> list[frozenset]:
    """Partition of the box sites into open clusters."""
    uf = UnionFind(c.box.sites())
    for u, v in sorted(c.open_edges):
        uf.union(u, v)
    return sorted(uf.groups(), key=lambda g: min(g))


def _require_inside(box: Box, *sites: SplitPoint) -> None:
    for s in sites:
        if not box.contains(s):
            raise ValueError(f"site {s} is outside the box")


def estimate_tau(x: SplitPoint, y: SplitPoint, box: Box, p: ModelParams, n: int,
                 seed: RngSeed, workers: int = 1) -> Estimate:
    """Fraction of samples in which x and y lie in the same open cluster."""
    _require_inside(box, x, y)
    if x == y:
        return Estimate(1.0, 0.0, n)
    return sample_clusters(x, box, p, n, seed, workers).tau(y)


def site_mask(box: Box, sites: Iterable[SplitPoint]) -> np.ndarray:
    mask = np.zeros(box.site_count(), dtype=np.bool_)
    for s in sites:
        mask[box.index(s)] = True
    return mask


def estimate_tau_restricted(x: SplitPoint, y: SplitPoint, S: Iterable[SplitPoint], box: Box,
                            p: ModelParams, n: int, seed: RngSeed, workers: int = 1) -> Estimate:
    """Connectivity of x and y using only open paths whose sites all lie in S."""
    S = set(S)
    if x not in S:
        raise ValueError("x must belong to S")
    _require_inside(box, x, y, *S)
    if y not in S:
        return Estimate(0.0, 0.0, n)
    if x == y:
        return Estimate(1.0, 0.0, n)
    return sample_clusters(x, box, p, n, seed, workers, allowed=site_mask(box, S)).tau(y)


def grow_cluster(origin: SplitPoint, p: ModelParams, cutoff: Box,
                 seed: RngSeed) -> tuple[frozenset, bool]:
    """Open cluster of ``origin`` inside ``cutoff`` for sample ``seed.stream``.

    The flag reports whether the cluster reached a face of the cutoff box.
    """
    _require_inside(cutoff, origin)
    cs = sample_clusters(origin, cutoff, p, 1, seed)
    return frozenset(cutoff.site(int(i)) for i in cs.members), bool(cs.touched[0])


def estimate_chi(p: ModelParams, cutoff: Box, n: int, seed: RngSeed,
                 workers: int = 1) -> Estimate:
    """Mean cluster size of the origin, truncated to ``cutoff``."""
    origin = p.origin()
    _require_inside(cutoff, origin)
    cs = sample_clusters(origin, cutoff, p, n, seed, workers)
    est = sample_mean_estimate(cs.sizes)
    return Estimate(est.mean, est.stderr, n, touched_fraction=float(cs.touched.mean()))


def estimate_tilted_tau(x: SplitPoint, y: SplitPoint, m: float, box: Box, p: ModelParams,
                        n: int, seed: RngSeed, workers: int = 1) -> Estimate:
    if m < 0:
        raise ValueError("m must be nonnegative")
    tau = estimate_tau(x, y, box, p, n, seed, workers)
    return tau.scaled(math.exp(m * l1_norm(a - b for a, b in zip(x.u0, y.u0))))


def _long_distance_from(geo: _Geometry, x: SplitPoint) -> np.ndarray:
    return np.abs(geo.coords[:, geo.k:] - np.array(x.u1, dtype=np.int64)).sum(axis=1)


def _tilt(geo: _Geometry, x: SplitPoint, m: float) -> np.ndarray:
    dist0 = np.abs(geo.coords[:, : geo.k] - np.array(x.u0, dtype=np.int64)).sum(axis=1)
    return np.exp(m * dist0)


def crossing_weights(geo: _Geometry, x: SplitPoint, L: float) -> np.ndarray:
    """For every box site u in C_L(x): sum of p_uv over fiber sites v outside C_L(x).

    Only long-range edges can leave a cylinder, and sites outside the box do
    not exist (free boundary), so this is the box-truncated crossing mass.
    """
    fiber = geo.coords[: geo.fiber_size, geo.k:]
    r = np.abs(fiber[:, None, :] - fiber[None, :, :]).sum(axis=2)
    probs = geo.long_table[r]
    dist = np.abs(fiber - np.array(x.u1, dtype=np.int64)).sum(axis=1)
    inside = dist <= L
    per_pos = np.where(inside, probs[:, ~inside].sum(axis=1), 0.0)
    return np.tile(per_pos, geo.box.n_fibers)


def gamma_scan(x: SplitPoint, Ls: Sequence[float], m: float, box: Box, p: ModelParams,
               n: int, seed: RngSeed, workers: int = 1,
               clusters: Optional[ClusterSamples] = None) -> list[Estimate]:
    """Estimate gamma_L for several L from one set of clusters grown at x.

    gamma_L = sum over u in C_L(x), v outside, of T_m(x, u) p_uv. Per sample
    the sum over cluster members u of e^{m |u0 - x0|} times the crossing
    mass of u is an unbiased estimator.
    """
    _require_inside(box, x)
    cs = clusters or sample_clusters(x, box, p, n, seed, workers)
    geo = cs.geometry
    tilt = _tilt(geo, x, m)
    out = []
    for L in Ls:
        w = tilt * crossing_weights(geo, x, L)
        out.append(sample_mean_estimate(cs.per_sample_sum(w)))
    return out


def estimate_gamma_L(x: SplitPoint, L: float, m: float, box: Box, p: ModelParams, n: int,
                     seed: RngSeed, workers: int = 1) -> Estimate:
    return gamma_scan(x, [L], m, box, p, n, seed, workers)[0]


def tilted_sup(cs: ClusterSamples, L: float, m: float) -> Estimate:
    """Plug-in max of T_m(origin, u) over sampled box sites u with |u1 - x1| > L."""
    geo = cs.geometry
    x = geo.box.site(cs.origin)
    region = _long_distance_from(geo, x) > L
    if not region.any():
        raise ValueError(f"no box site lies outside the cylinder of radius {L}")
    tau = cs.hits / cs.n
    tilted = _tilt(geo, x, m) * tau
    idx = np.flatnonzero(region)
    best = int(idx[np.argmax(tilted[idx])])
    est = bernoulli_estimate(int(cs.hits[best]), cs.n).scaled(float(_tilt(geo, x, m)[best]))
    return Estimate(est.mean, est.stderr, cs.n, site=geo.box.site(best))


def estimate_Tm_sup(L: float, m: float, box: Box, p: ModelParams, n: int, seed: RngSeed,
                    workers: int = 1) -> Estimate:
    """Sup of the tilted connectivity from the origin outside C_L(0)."""
    cs = sample_clusters(p.origin(), box, p, n, seed, workers)
    return tilted_sup(cs, L, m)


def estimate_tau_graph(n_sites: int, edges: Sequence[tuple[int, int, float]], x: int, y: int,
                       n: int, seed: RngSeed, workers: int = 1) -> Estimate:
    """estimate_tau on an explicit small graph with integer site labels.

    Edge keys hash the (sorted) label pair, so draws are shared with any other
    graph on the same labels.
    """
    if x == y:
        return Estimate(1.0, 0.0, n)
    if not edges:
        return Estimate(0.0, 0.0, n)
    ends = np.array([(min(a, b), max(a, b)) for a, b, _ in edges], dtype=np.int64)
    probs = np.array([q for _, _, q in edges], dtype=np.float64)
    keys = edge_keys(ends[:, :1].copy(), ends[:, 1:].copy())

    def block(s0, s1):
        return _kernels.connected_block(n_sites, ends, keys, probs, x, y,
                                        np.uint64(seed.seed), s0, s1)

    hits = sum(int(b.sum()) for b in run_blocks(block, seed.stream, n, workers))
    return bernoulli_estimate(hits, n)
