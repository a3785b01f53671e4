import itertools
import math

import pytest
from hypothesis import given, strategies as st

from percolab.model import (Box, DimensionError, Edge, ModelParams, SplitPoint, bond_probability,
                            coupling, enumerate_edges, expected_edge_count, l1_norm, shell_sizes)


def pt(u0, u1):
    return SplitPoint(u0, u1)


@pytest.mark.parametrize("x, expected", [((0, 0, 0), 0), ((1, -2, 3), 6), ((-5,), 5)])
def test_l1_norm(x, expected):
    assert l1_norm(x) == expected


def test_coupling_cases():
    p = ModelParams(1, 1, 1.0, 1.0)
    assert coupling(pt([0], [0]), pt([0], [1]), p) == 1.0
    assert coupling(pt([0], [3]), pt([1], [3]), p) == 1.0
    assert coupling(pt([0], [3]), pt([0], [3]), p) == 0.0
    assert coupling(pt([0], [0]), pt([1], [1]), p) == 0.0
    assert coupling(pt([0], [0]), pt([2], [0]), p) == 0.0
    q = ModelParams(0, 1, 1.0, 1.0)
    assert coupling(pt([], [0]), pt([], [2]), q) == pytest.approx(0.4, abs=1e-15)


def test_bond_probability_examples():
    p = ModelParams(1, 1, 1.0, 0.0)
    assert bond_probability(pt([0], [0]), pt([0], [5]), p) == 0.0
    assert bond_probability(pt([0], [0]), pt([1], [0]), p.with_beta(0.5)) == 0.5
    q = ModelParams(0, 1, 0.5, 0.25)
    assert bond_probability(pt([], [0]), pt([], [3]), q) == 0.25 * 2 / (1 + 3 ** 1.5)


def test_dimension_mismatch():
    p = ModelParams(1, 1, 1.0, 0.5)
    with pytest.raises(DimensionError):
        coupling(pt([0, 0], [0]), pt([0], [1]), p)


@pytest.mark.parametrize("kw", [dict(k=-1, d=1, epsilon=1, beta=0.1),
                                dict(k=0, d=0, epsilon=1, beta=0.1),
                                dict(k=0, d=1, epsilon=0, beta=0.1),
                                dict(k=0, d=1, epsilon=1, beta=1.5)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        ModelParams(**kw)


def brute_edges(box, p):
    """All unordered site pairs of the box with positive probability."""
    sites = list(box.sites())
    return {frozenset((a, b)) for a, b in itertools.combinations(sites, 2)
            if bond_probability(a, b, p) > 0}


BOXES = [
    (ModelParams(0, 1, 1.0, 0.5), Box((), (), (0,), (2,))),
    (ModelParams(1, 1, 1.0, 0.5), Box((0,), (1,), (0,), (0,))),
    (ModelParams(1, 1, 0.5, 0.3), Box((-1,), (1,), (-2,), (3,))),
    (ModelParams(2, 1, 1.0, 0.3), Box((0, 0), (2, 1), (0,), (2,))),
    (ModelParams(1, 2, 1.0, 0.3), Box((0,), (2,), (0, -1), (1, 1))),
]


@pytest.mark.parametrize("p, box", BOXES)
def test_enumerate_edges_matches_pair_enumeration(p, box):
    edges = enumerate_edges(box, p)
    ids = [frozenset(e.ends) for e in edges]
    assert len(ids) == len(set(ids))
    assert set(ids) == brute_edges(box, p)
    assert len(edges) == expected_edge_count(box)
    for e in edges:
        assert e.u < e.v
        assert e.probability == bond_probability(e.u, e.v, p) > 0


def test_enumerate_edges_examples():
    p = ModelParams(0, 1, 1.0, 0.5)
    edges = enumerate_edges(Box((), (), (0,), (2,)), p)
    assert {tuple(x.u1[0] for x in e.ends) for e in edges} == {(0, 1), (1, 2), (0, 2)}
    q = ModelParams(1, 1, 1.0, 0.5)
    assert len(enumerate_edges(Box((0,), (1,), (0,), (0,)), q)) == 1
    assert enumerate_edges(Box((0,), (0,), (0,), (0,)), q) == []


def test_edge_canonical_order():
    a, b = pt([1], [0]), pt([0], [0])
    assert Edge(a, b, 0.1).u == b
    with pytest.raises(ValueError):
        Edge(a, a, 0.1)


def test_box_indexing_roundtrip():
    box = Box((-1,), (1,), (-2, 0), (1, 2))
    for i, s in enumerate(box.sites()):
        assert box.index(s) == i
        assert box.site(i) == s
    assert box.site_count() == 3 * 4 * 3


@pytest.mark.parametrize("dim", [0, 1, 2, 3])
def test_shell_sizes_match_enumeration(dim):
    R = 6
    counts = [0] * (R + 1)
    for x in itertools.product(range(-R, R + 1), repeat=dim):
        if l1_norm(x) <= R:
            counts[l1_norm(x)] += 1
    assert shell_sizes(dim, R) == counts


site = st.tuples(st.integers(-20, 20), st.integers(-20, 20), st.integers(-20, 20))


@given(site, site, site, st.floats(0.05, 3.0))
def test_coupling_symmetry_translation_range(a, b, t, eps):
    p = ModelParams(1, 2, eps, 1.0)
    u, v = SplitPoint.from_coords(a, 1), SplitPoint.from_coords(b, 1)
    shift = lambda s: SplitPoint.from_coords([c + dc for c, dc in zip(s.coords, t)], 1)  # noqa: E731
    j = coupling(u, v, p)
    assert j == coupling(v, u, p)
    assert j == coupling(shift(u), shift(v), p)
    assert 0.0 <= j <= 1.0


def test_summability_bound_and_monotone_partial_sums():
    p = ModelParams(1, 1, 0.5, 0.4)
    u = p.origin()
    sizes = shell_sizes(p.d, 10_000)
    bound = p.beta * (2 * p.k + 2 * sum(sizes[n] * 2 / (1 + n ** p.exponent)
                                        for n in range(1, len(sizes))))
    prev = 0.0
    for r in (1, 2, 4, 8, 16, 32):
        box = Box.centered([r], [r])
        total = sum(bond_probability(u, v, p) for v in box.sites())
        assert total >= prev
        assert total <= bound
        prev = total
