import itertools

import networkx as nx
import pytest
from hypothesis import settings

# compiled kernels specialise on first call; wall-clock deadlines are meaningless here
settings.register_profile("percolab", deadline=None, max_examples=60)
settings.load_profile("percolab")

ACCEPTANCE_LINES = []


def brute_tau(n_sites, edges, x, y):
    """Exact tau by enumerating all 2^|E| states with networkx connectivity."""
    total = 0.0
    for state in itertools.product((0, 1), repeat=len(edges)):
        g = nx.Graph()
        g.add_nodes_from(range(n_sites))
        w = 1.0
        for (a, b, q), s in zip(edges, state):
            w *= q if s else 1.0 - q
            if s:
                g.add_edge(a, b)
        if nx.has_path(g, x, y):
            total += w
    return total


@pytest.fixture
def brute():
    return brute_tau


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
