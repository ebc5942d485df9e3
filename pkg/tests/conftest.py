import itertools

import numpy as np
import pytest

from rcc.graph import Graph


def random_graph(rng, n, p):
    A = np.triu(rng.random((n, n)) < p, 1)
    u, v = np.nonzero(A)
    return Graph(n, zip(u.tolist(), v.tolist()))


def brute_force_maximal_cliques(G):
    """Maximal cliques by checking every vertex subset."""
    n = G.vertex_count
    adj = G.adjacency
    cliques = [
        frozenset(S)
        for k in range(1, n + 1)
        for S in itertools.combinations(range(n), k)
        if all(v in adj[u] for u, v in itertools.combinations(S, 2))
    ]
    cset = set(cliques)
    maximal = [S for S in cliques if not any(S | {v} in cset for v in range(n) if v not in S)]
    return sorted(tuple(sorted(S)) for S in maximal)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle():
    return Graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def k4():
    return Graph(4, [(u, v) for u in range(4) for v in range(u + 1, 4)])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:  # pragma: no cover
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
