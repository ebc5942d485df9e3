import numpy as np
import pytest

from rcc.graph import cover_to_graph, cover_to_multigraph
from rcc.ibp import Hyperparams, sample_clique_matrix
from rcc.simulate import expand_grid, growth_trajectory, loglog_checkpoints, run_grid, worker_count
from rcc.validation import ValidationError


def test_growth_trajectory_matches_prefix_graphs(rng):
    Z = sample_clique_matrix(Hyperparams(5.0, 0.5, 1.0), 40, rng)
    cps = [1, 2, 5, 17, 40]
    tr = growth_trajectory(Z, cps)
    for k, n in enumerate(cps):
        P = Z.prefix(n)
        used = int((P.column_counts > 0).sum())
        assert tr.vertices[k] == used
        assert tr.edges[k] == cover_to_graph(P).edge_count
        assert tr.multi_edges[k] == cover_to_multigraph(P).edge_count


def test_trajectory_rejects_bad_checkpoints(rng):
    Z = sample_clique_matrix(Hyperparams(2.0, 0.5, 1.0), 5, rng)
    with pytest.raises(ValidationError):
        growth_trajectory(Z, [6])


def test_grid_expansion():
    pts = expand_grid({"sigma": [0.2, 0.5], "alpha": 20, "c": [1, 3]})
    assert len(pts) == 4
    assert pts[0] == {"alpha": 20, "c": 1, "sigma": 0.2}
    with pytest.raises(ValidationError):
        expand_grid({})
    with pytest.raises(ValidationError):
        expand_grid({"sigma": []})


def _key(results):
    return [
        (r.grid_index, r.replicate, r.trajectory.vertices.tolist(), r.trajectory.edges.tolist(), r.stats)
        for r in results
    ]


def test_parallel_grid_equals_sequential():
    grid = {"alpha": 5.0, "sigma": [0.3, 0.7], "c": 1.0}
    seq = run_grid(grid, 30, 3, seed=9, workers=1)
    par = run_grid(grid, 30, 3, seed=9, workers=2)
    assert _key(seq) == _key(par)
    other = run_grid(grid, 30, 3, seed=10, workers=1)
    assert _key(other) != _key(seq)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("RCC_THREADS", "1")
    assert worker_count(8) == 1
    monkeypatch.setenv("RCC_THREADS", "many")
    with pytest.raises(ValidationError):
        worker_count(4)


def test_loglog_checkpoints():
    cps = loglog_checkpoints(1000, 10, 20)
    assert cps[0] == 10 and cps[-1] == 1000
    assert np.all(np.diff(cps) > 0)
