"""
Lattice geometry, couplings and bond probabilities of the mixed
short/long-range percolation model on Z^(k+d).

A site is split as ``u = (u0, u1)`` with ``u0`` in Z^k (short, nearest
neighbour directions) and ``u1`` in Z^d (long-range directions).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence


class DimensionError(ValueError):
    """Raised when a site does not match the ambient (k, d) split."""


def l1_norm(x: Iterable[int]) -> int:
    """Return sum(|x_i|)."""
    return sum(abs(int(c)) for c in x)


@dataclass(frozen=True, order=True)
class SplitPoint:
    u0: tuple[int, ...]
    u1: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "u0", tuple(int(c) for c in self.u0))
        object.__setattr__(self, "u1", tuple(int(c) for c in self.u1))

    @classmethod
    def from_coords(cls, coords: Sequence[int], k: int) -> "SplitPoint":
        coords = tuple(coords)
        return cls(coords[:k], coords[k:])

    @property
    def coords(self) -> tuple[int, ...]:
        return self.u0 + self.u1

    def check(self, k: int, d: int) -> None:
        if len(self.u0) != k or len(self.u1) != d:
            raise DimensionError(
                f"site {self} has split ({len(self.u0)}, {len(self.u1)}), "
                f"expected ({k}, {d})"
            )

    def __str__(self):
        return ",".join(map(str, self.coords))


@dataclass(frozen=True)
class ModelParams:
    k: int
    d: int
    epsilon: float
    beta: float

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {self.beta!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def exponent(self) -> float:
        """The long-range decay exponent d + epsilon."""
        return self.d + self.epsilon

    def with_beta(self, beta: float) -> "ModelParams":
        return ModelParams(self.k, self.d, self.epsilon, beta)

    def as_record(self) -> dict:
        return {"k": self.k, "d": self.d, "epsilon": self.epsilon, "beta": self.beta}

    def origin(self) -> SplitPoint:
        return SplitPoint((0,) * self.k, (0,) * self.d)


@dataclass(frozen=True)
class Box:
    """Closed coordinate box with free boundary; all four vectors inclusive."""

    lo0: tuple[int, ...]
    hi0: tuple[int, ...]
    lo1: tuple[int, ...]
    hi1: tuple[int, ...]

    def __post_init__(self):
        for name in ("lo0", "hi0", "lo1", "hi1"):
            object.__setattr__(self, name, tuple(int(c) for c in getattr(self, name)))
        if len(self.lo0) != len(self.hi0) or len(self.lo1) != len(self.hi1):
            raise DimensionError("box bounds have mismatched lengths")
        if any(a > b for a, b in zip(self.lo + (), self.hi)):
            raise ValueError(f"empty box: lo={self.lo} hi={self.hi}")

    @classmethod
    def centered(cls, radius0: Sequence[int], radius1: Sequence[int]) -> "Box":
        r0, r1 = tuple(radius0), tuple(radius1)
        return cls(tuple(-r for r in r0), r0, tuple(-r for r in r1), r1)

    @property
    def k(self) -> int:
        return len(self.lo0)

    @property
    def d(self) -> int:
        return len(self.lo1)

    @property
    def lo(self) -> tuple[int, ...]:
        return self.lo0 + self.lo1

    @property
    def hi(self) -> tuple[int, ...]:
        return self.hi0 + self.hi1

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def fiber_size(self) -> int:
        return math.prod(self.shape[self.k:])

    @property
    def n_fibers(self) -> int:
        return math.prod(self.shape[: self.k])

    def site_count(self) -> int:
        return math.prod(self.shape)

    def check(self, p: ModelParams) -> None:
        if self.k != p.k or self.d != p.d:
            raise DimensionError(
                f"box has split ({self.k}, {self.d}), params have ({p.k}, {p.d})"
            )

    def contains(self, x: SplitPoint) -> bool:
        c = x.coords
        return len(c) == len(self.lo) and all(
            a <= v <= b for v, a, b in zip(c, self.lo, self.hi)
        )

    def index(self, x: SplitPoint) -> int:
        """Row-major linear index of a site (short coordinates vary slowest)."""
        if not self.contains(x):
            raise ValueError(f"site {x} is outside the box")
        idx = 0
        for v, a, n in zip(x.coords, self.lo, self.shape):
            idx = idx * n + (v - a)
        return idx

    def site(self, index: int) -> SplitPoint:
        coords = []
        for a, n in zip(reversed(self.lo), reversed(self.shape)):
            index, r = divmod(index, n)
            coords.append(a + r)
        return SplitPoint.from_coords(tuple(reversed(coords)), self.k)

    def sites(self) -> Iterator[SplitPoint]:
        ranges = [range(a, b + 1) for a, b in zip(self.lo, self.hi)]
        for c in itertools.product(*ranges):
            yield SplitPoint.from_coords(c, self.k)

    def as_record(self) -> dict:
        return {"lo0": self.lo0, "hi0": self.hi0, "lo1": self.lo1, "hi1": self.hi1}


@dataclass(frozen=True)
class Edge:
    u: SplitPoint
    v: SplitPoint
    probability: float

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError("self-loops are not edges")
        if self.v < self.u:
            u, v = self.v, self.u
            object.__setattr__(self, "u", u)
            object.__setattr__(self, "v", v)

    @property
    def ends(self) -> tuple[SplitPoint, SplitPoint]:
        return self.u, self.v


def _check_pair(u: SplitPoint, v: SplitPoint, p: ModelParams) -> None:
    u.check(p.k, p.d)
    v.check(p.k, p.d)


def long_coupling(distance: int, exponent: float) -> float:
    """Coupling 2 / (1 + r^exponent) between distinct sites of one fiber."""
    return 2.0 / (1.0 + float(distance) ** exponent)


def coupling(u: SplitPoint, v: SplitPoint, p: ModelParams) -> float:
    """J_uv: long-range inside a fiber, unit between short nearest neighbours."""
    _check_pair(u, v, p)
    if u.u0 == v.u0:
        if u.u1 == v.u1:
            return 0.0
        return long_coupling(l1_norm(a - b for a, b in zip(u.u1, v.u1)), p.exponent)
    if u.u1 == v.u1 and l1_norm(a - b for a, b in zip(u.u0, v.u0)) == 1:
        return 1.0
    return 0.0


def bond_probability(u: SplitPoint, v: SplitPoint, p: ModelParams) -> float:
    return p.beta * coupling(u, v, p)


def long_probability_table(p: ModelParams, max_distance: int) -> list[float]:
    """Bond probability of a fiber edge indexed by its L1 length (index 0 unused)."""
    return [0.0] + [p.beta * long_coupling(r, p.exponent) for r in range(1, max_distance + 1)]


def enumerate_edges(box: Box, p: ModelParams) -> list[Edge]:
    """All positive-probability unordered pairs inside ``box``.

    Long-range pairs share u0; short pairs share u1 and are unit L1 apart in
    u0. Pairs with probability 0 (beta = 0) are dropped.
    """
    box.check(p)
    sites = list(box.sites())
    edges = []
    fibers: dict[tuple[int, ...], list[SplitPoint]] = {}
    for s in sites:
        fibers.setdefault(s.u0, []).append(s)
    for members in fibers.values():
        for a, b in itertools.combinations(members, 2):
            prob = bond_probability(a, b, p)
            if prob > 0:
                edges.append(Edge(a, b, prob))
    if p.k:
        short_prob = p.beta
        if short_prob > 0:
            for s in sites:
                for axis in range(p.k):
                    if s.u0[axis] + 1 > box.hi0[axis]:
                        continue
                    u0 = list(s.u0)
                    u0[axis] += 1
                    edges.append(Edge(s, SplitPoint(u0, s.u1), short_prob))
    return edges


def expected_edge_count(box: Box) -> int:
    """Number of candidate edges of a rectangular box (for beta > 0)."""
    fiber = box.fiber_size
    nn_pairs = 0
    shape0 = box.shape[: box.k]
    for axis, n in enumerate(shape0):
        nn_pairs += (n - 1) * math.prod(m for j, m in enumerate(shape0) if j != axis)
    return box.n_fibers * fiber * (fiber - 1) // 2 + nn_pairs * fiber


def shell_sizes(dim: int, max_radius: int) -> list[int]:
    """Exact number of points of Z^dim at each L1 radius 0..max_radius.

    Dynamic programming over coordinates; dim = 0 gives only the origin.
    """
    counts = [1] + [0] * max_radius
    for _ in range(dim):
        nxt = [0] * (max_radius + 1)
        for r, c in enumerate(counts):
            if not c:
                continue
            for step in range(0, max_radius - r + 1):
                nxt[r + step] += c * (1 if step == 0 else 2)
        counts = nxt
    return counts
