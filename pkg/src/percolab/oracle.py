"""
Exact connectivity on small graphs by exhaustive enumeration, with a
deletion-contraction recursion as an independent cross-check, and exact
instance-by-instance checks of the Hammersley-Simon-Lieb and FKG bounds.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Hashable, Iterable, Optional, Sequence

import numba as nb
import numpy as np

from ._kernels import find, union
from .model import Box, ModelParams, enumerate_edges

DEFAULT_CAP = 24
HSL_TOLERANCE = 1e-12


class EnumerationCapError(ValueError):
    pass


def default_cap() -> int:
    env = os.environ.get("PERCOLAB_CAP")
    return int(env) if env else DEFAULT_CAP


class WeightedGraph:
    """Simple undirected graph with an open-probability on every edge."""

    def __init__(self, sites: Sequence[Hashable], edges: Iterable[tuple], cap: Optional[int] = None):
        self.sites = list(sites)
        self.index = {s: i for i, s in enumerate(self.sites)}
        if len(self.index) != len(self.sites):
            raise ValueError("duplicate sites")
        self.cap = default_cap() if cap is None else cap
        seen = set()
        self.edges = []
        for a, b, q in edges:
            if a == b:
                raise ValueError(f"self-loop at {a!r}")
            if a not in self.index or b not in self.index:
                raise ValueError(f"edge ({a!r}, {b!r}) has an unknown endpoint")
            pair = frozenset((a, b))
            if pair in seen:
                raise ValueError(f"duplicate edge ({a!r}, {b!r})")
            if not (0.0 <= q <= 1.0):
                raise ValueError(f"edge ({a!r}, {b!r}) has probability {q!r} outside [0, 1]")
            seen.add(pair)
            self.edges.append((a, b, float(q)))

    def __repr__(self):
        return f"WeightedGraph({len(self.sites)} sites, {len(self.edges)} edges)"

    def probability(self, a, b) -> float:
        for u, v, q in self.edges:
            if {u, v} == {a, b}:
                return q
        return 0.0

    def induced(self, S: Iterable[Hashable]) -> "WeightedGraph":
        keep = set(S)
        return WeightedGraph([s for s in self.sites if s in keep],
                             [e for e in self.edges if e[0] in keep and e[1] in keep],
                             cap=self.cap)

    def _arrays(self):
        ends = np.array([(self.index[a], self.index[b]) for a, b, _ in self.edges],
                        dtype=np.int64).reshape(-1, 2)
        probs = np.array([q for _, _, q in self.edges], dtype=np.float64)
        return ends, probs

    @cached_property
    def connectivity(self) -> np.ndarray:
        """Matrix of exact tau over all site pairs."""
        if len(self.edges) > self.cap:
            raise EnumerationCapError(
                f"{len(self.edges)} edges exceed the enumeration cap of {self.cap}")
        ends, probs = self._arrays()
        return _enumerate_connectivity(len(self.sites), ends, probs)

    def descriptor(self) -> dict:
        return {"sites": [str(s) for s in self.sites],
                "edges": [[str(a), str(b), q] for a, b, q in self.edges]}


@nb.njit(cache=True)
def _enumerate_connectivity(n_sites, ends, probs):
    n_edges = ends.shape[0]
    total = np.zeros((n_sites, n_sites))
    block = np.zeros((n_sites, n_sites))
    parent = np.empty(n_sites, dtype=np.int64)
    rank = np.empty(n_sites, dtype=np.int64)
    roots = np.empty(n_sites, dtype=np.int64)
    n_conf = 1 << n_edges
    for mask in range(n_conf):
        w = 1.0
        for j in range(n_sites):
            parent[j] = j
            rank[j] = 0
        for e in range(n_edges):
            if (mask >> e) & 1:
                w *= probs[e]
                union(parent, rank, ends[e, 0], ends[e, 1])
            else:
                w *= 1.0 - probs[e]
        if w == 0.0:
            continue
        for j in range(n_sites):
            roots[j] = find(parent, j)
        for i in range(n_sites):
            for j in range(i, n_sites):
                if roots[i] == roots[j]:
                    block[i, j] += w
        if (mask & 0xFFFF) == 0xFFFF:
            total += block
            block[:, :] = 0.0
    total += block
    for i in range(n_sites):
        for j in range(i):
            total[i, j] = total[j, i]
    return total


def exact_tau(g: WeightedGraph, x, y) -> float:
    return float(g.connectivity[g.index[x], g.index[y]])


def exact_tau_restricted(g: WeightedGraph, x, y, S: Iterable[Hashable]) -> float:
    S = set(S)
    if x not in S:
        raise ValueError("x must belong to S")
    if y not in S:
        return 0.0
    return exact_tau(g.induced(S), x, y)


def tau_deletion_contraction(g: WeightedGraph, x, y) -> float:
    """tau_xy = p_e tau(G/e) + (1 - p_e) tau(G - e), recursing on the first edge.

    Independent of the enumerator: works on a multigraph of site classes.
    """
    label = {s: i for i, s in enumerate(g.sites)}
    edges = tuple((label[a], label[b], q) for a, b, q in g.edges)

    def rec(edges, x, y):
        if x == y:
            return 1.0
        if not edges:
            return 0.0
        (a, b, q), rest = edges[0], edges[1:]
        deleted = rec(rest, x, y)
        if q == 0.0:
            return deleted

        def relabel(s):
            return a if s == b else s

        contracted_edges = tuple((relabel(u), relabel(v), r) for u, v, r in rest
                                 if relabel(u) != relabel(v))
        contracted = rec(contracted_edges, relabel(x), relabel(y))
        return q * contracted + (1.0 - q) * deleted

    return rec(edges, label[x], label[y])


@dataclass
class HslReport:
    lhs: float
    rhs: float
    slack: float
    holds: bool

    def to_json(self, **extra) -> str:
        return json.dumps({**extra, **asdict(self)}, sort_keys=True)


@dataclass
class FkgReport:
    tau: float
    best_path_bound: float
    direct: float
    holds: bool

    def to_json(self, **extra) -> str:
        return json.dumps({**extra, **asdict(self)}, sort_keys=True)


def check_hsl(g: WeightedGraph, x, y, S: Iterable[Hashable]) -> HslReport:
    """Exact sides of tau_xy <= sum_{u in S, v not in S} tau^S_xu p_uv tau_vy."""
    S = set(S)
    if x not in S:
        raise ValueError("x must belong to S")
    if y in S:
        raise ValueError("y must lie outside S")
    full = g.connectivity
    inner_graph = g.induced(S)
    inner = inner_graph.connectivity
    ix = inner_graph.index[x]
    iy = g.index[y]
    rhs = 0.0
    for a, b, q in g.edges:
        for u, v in ((a, b), (b, a)):
            if u in S and v not in S:
                rhs += inner[ix, inner_graph.index[u]] * q * full[g.index[v], iy]
    lhs = float(full[g.index[x], iy])
    rhs = float(rhs)
    slack = rhs - lhs
    return HslReport(lhs, rhs, slack, bool(slack >= -HSL_TOLERANCE))


def best_path_product(g: WeightedGraph, x, y) -> float:
    """Max over simple open paths from x to y of the product of edge probabilities."""
    if x == y:
        return 1.0
    adj: dict = {s: [] for s in g.sites}
    for a, b, q in g.edges:
        adj[a].append((b, q))
        adj[b].append((a, q))
    best = 0.0
    visited = {x}

    def dfs(u, prod):
        nonlocal best
        if prod <= best:
            return
        if u == y:
            best = prod
            return
        for v, q in adj[u]:
            if v not in visited:
                visited.add(v)
                dfs(v, prod * q)
                visited.remove(v)

    dfs(x, 1.0)
    return best


def check_fkg_lower(g: WeightedGraph, x, y) -> FkgReport:
    tau = exact_tau(g, x, y)
    bound = best_path_product(g, x, y)
    direct = g.probability(x, y)
    return FkgReport(tau, bound, direct, bool(tau >= bound - HSL_TOLERANCE))


def model_subgraph(box: Box, p: ModelParams, cap: Optional[int] = None) -> WeightedGraph:
    """The model's edges inside ``box`` as a WeightedGraph over SplitPoints."""
    cap = default_cap() if cap is None else cap
    edges = enumerate_edges(box, p)
    if len(edges) > cap:
        raise EnumerationCapError(f"box has {len(edges)} edges, cap is {cap}")
    return WeightedGraph(list(box.sites()), [(e.u, e.v, e.probability) for e in edges], cap=cap)


def random_graph(rng: np.random.Generator, max_sites: int = 8, max_edges: int = 14) -> WeightedGraph:
    """Erdos-Renyi-style instance on 2..max_sites integer-labelled sites."""
    n = int(rng.integers(2, max_sites + 1))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    density = rng.uniform(0.2, 0.9)
    chosen = [pq for pq in pairs if rng.uniform() < density]
    if len(chosen) > max_edges:
        idx = rng.choice(len(chosen), size=max_edges, replace=False)
        chosen = [chosen[i] for i in sorted(idx)]
    return WeightedGraph(range(n), [(a, b, float(rng.uniform())) for a, b in chosen])


def random_hsl_instance(rng: np.random.Generator, g: WeightedGraph):
    """Pick x, y != x and a random S containing x but not y."""
    i, j = rng.choice(len(g.sites), size=2, replace=False)
    x, y = g.sites[int(i)], g.sites[int(j)]
    S = {x} | {s for s in g.sites if s not in (x, y) and rng.uniform() < 0.5}
    return x, y, S


def hsl_model_instances(seed: int, count: int = 50):
    """Seeded HSL instances on model boxes across the acceptance grid.

    Cycles over (k, d) in {(0,1), (1,1), (1,2)}, beta in {0.1, 0.3},
    epsilon in {0.5, 1}; box shapes are kept within 16 edges.
    """
    rng = np.random.default_rng(seed)
    shapes = {
        (0, 1): [Box((), (), (0,), (r,)) for r in (2, 3, 4, 5)],
        (1, 1): [Box((0,), (a,), (0,), (b,)) for a, b in ((1, 1), (1, 2), (2, 2), (1, 3), (3, 1))],
        (1, 2): [Box((0,), (a,), (0, 0), (b, c)) for a, b, c in ((1, 1, 1), (1, 0, 2), (2, 1, 0))],
    }
    grid = [(kd, beta, eps) for kd in shapes for beta in (0.1, 0.3) for eps in (0.5, 1.0)]
    out = []
    for i in range(count):
        (k, d), beta, eps = grid[i % len(grid)]
        p = ModelParams(k, d, eps, beta)
        box = shapes[(k, d)][int(rng.integers(len(shapes[(k, d)])))]
        g = model_subgraph(box, p)
        x, y, S = random_hsl_instance(rng, g)
        out.append((p, box, g, x, y, S))
    return out


def series_parallel_fixtures(p: float = 0.3, q: float = 0.6) -> list[tuple[str, WeightedGraph, object, object, float]]:
    """Closed-form fixtures: (name, graph, x, y, exact tau)."""
    return [
        ("single", WeightedGraph("xy", [("x", "y", p)]), "x", "y", p),
        ("series", WeightedGraph("xuy", [("x", "u", p), ("u", "y", q)]), "x", "y", p * q),
        ("parallel", _parallel(p, q), "x", "y", p + q - p * q),
        ("triangle", WeightedGraph("xuy", [("x", "u", 0.5), ("u", "y", 0.5), ("x", "y", 0.5)]),
         "x", "y", 5 / 8),
    ]


def _parallel(p, q):
    # two disjoint routes x-a-y and x-b-y with one certain edge each
    return WeightedGraph("xaby", [("x", "a", p), ("a", "y", 1.0), ("x", "b", q), ("b", "y", 1.0)])


def isclose(a: float, b: float, tol: float = 1e-12) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
