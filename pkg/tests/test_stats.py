import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_maximal_cliques, random_graph
from rcc.graph import Graph
from rcc.stats import (
    TABLE_FIELDS,
    CliqueBudgetExceeded,
    average_local_clustering,
    average_max_clique_per_vertex,
    degree_distribution,
    density,
    local_clustering,
    max_clique_per_vertex,
    maximal_cliques,
    read_histogram_csv,
    sparsity_regression,
    summarize,
    triangle_counts,
    triangles_per_vertex,
    write_histogram_csv,
    write_summary_csv,
    write_summary_json,
)
from rcc.validation import ValidationError


@st.composite
def graphs(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    keep = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Graph(n, [p for p, k in zip(pairs, keep) if k])


def test_k4_summary(k4):
    s = summarize(k4)
    assert s.triangles_per_vertex == pytest.approx(1.0)
    assert s.density == pytest.approx(1.0)
    assert s.average_degree == pytest.approx(3.0)
    assert s.average_max_clique_per_vertex == pytest.approx(4.0)
    assert s.average_local_clustering == pytest.approx(1.0)
    row = s.table_row()
    assert list(row) == list(TABLE_FIELDS)
    assert row["density (×1k)"] == pytest.approx(1000.0)


def test_path_and_star():
    P = Graph(4, [(0, 1), (1, 2), (2, 3)])
    assert density(P) == pytest.approx(0.5)
    assert triangles_per_vertex(P) == 0
    assert average_local_clustering(P) == 0
    star = Graph(5, [(0, v) for v in range(1, 5)])
    # only the hub has degree >= 2
    assert average_local_clustering(star) == 0
    assert average_local_clustering(Graph(4, [(0, 1), (1, 2), (0, 2), (2, 3)])) == pytest.approx((1 + 1 + 1 / 3) / 3)
    assert average_local_clustering(
        Graph(4, [(0, 1), (1, 2), (0, 2), (2, 3)]), include_low_degree=True
    ) == pytest.approx((1 + 1 + 1 / 3) / 4)


def test_density_needs_two_vertices():
    with pytest.raises(ValidationError):
        density(Graph(1))


def test_degree_distribution():
    G = Graph(4, [(0, 1), (0, 2), (0, 3)])
    d = degree_distribution(G)
    assert d.histogram == {1: 3, 3: 1}
    assert d.mean == pytest.approx(1.5)
    assert d.normalized.tolist() == [0.75, 0.25, 0.25, 0.25]


def test_maximal_cliques_match_brute_force_and_networkx():
    rng = np.random.default_rng(0)
    for _ in range(60):
        G = random_graph(rng, int(rng.integers(1, 11)), rng.uniform(0.1, 0.9))
        mine = maximal_cliques(G)
        assert mine == brute_force_maximal_cliques(G)
        assert mine == sorted(tuple(sorted(q)) for q in nx.find_cliques(G.to_networkx()))


@settings(max_examples=80, deadline=None)
@given(graphs(max_n=9))
def test_clustering_and_triangles_match_networkx(G):
    g = G.to_networkx()
    tri = nx.triangles(g)
    assert triangle_counts(G).tolist() == [tri[v] for v in range(G.vertex_count)]
    cl = nx.clustering(g)
    for v in range(G.vertex_count):
        assert local_clustering(G, v) == pytest.approx(cl[v])
    assert average_local_clustering(G, include_low_degree=True) == pytest.approx(nx.average_clustering(g))


@settings(max_examples=60, deadline=None)
@given(graphs(max_n=9))
def test_max_clique_per_vertex_is_largest_containing_clique(G):
    best = max_clique_per_vertex(G)
    for v in range(G.vertex_count):
        assert best[v] == max(len(q) for q in brute_force_maximal_cliques(G) if v in q)


def test_clique_budget():
    G = Graph(6, [(u, v) for u in range(6) for v in range(u + 1, 6) if (u + v) % 3])
    n_all = len(maximal_cliques(G))
    with pytest.raises(CliqueBudgetExceeded) as err:
        maximal_cliques(G, max_cliques=n_all - 1)
    assert len(err.value.partial) == n_all - 1
    with pytest.raises(CliqueBudgetExceeded):
        average_max_clique_per_vertex(G, max_cliques=1)


def test_skip_max_clique_gives_nan(k4):
    s = summarize(k4, skip_max_clique=True)
    assert math.isnan(s.average_max_clique_per_vertex)


def test_sparsity_regression_recovers_slope():
    V = np.array([10, 30, 100, 300, 1000])
    res = sparsity_regression(zip(V, 2.0 * V**1.4))
    assert res.slope == pytest.approx(1.4)
    assert res.ci_low <= 1.4 <= res.ci_high
    with pytest.raises(ValidationError):
        sparsity_regression([(10, 5), (10, 6), (10, 7)])


def test_summary_writers_roundtrip(tmp_path, k4):
    import csv
    import json

    s = summarize(k4)
    write_summary_csv([s], tmp_path / "s.csv")
    with (tmp_path / "s.csv").open() as fh:
        row = next(csv.DictReader(fh))
    assert float(row["av. degree"]) == 3.0
    write_summary_json(summarize(k4, skip_max_clique=True), tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["max. clique"] is None
    write_histogram_csv([1, 1, 3], tmp_path / "h.csv")
    assert read_histogram_csv(tmp_path / "h.csv") == {1: 2, 3: 1}
