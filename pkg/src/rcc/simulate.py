"""Simulation studies: growth trajectories and replicate grids."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .graph import cover_to_graph
from .ibp import CliqueMatrix, Hyperparams, sample_clique_matrix
from .stats import average_local_clustering, average_max_clique_per_vertex, degree_distribution, density
from .validation import ValidationError

__all__ = [
    "GrowthTrajectory",
    "growth_trajectory",
    "replicate_seed",
    "worker_count",
    "run_grid",
]


@dataclass
class GrowthTrajectory:
    """Vertex and edge counts after the first ``n_cliques[k]`` cliques."""

    n_cliques: np.ndarray
    vertices: np.ndarray
    edges: np.ndarray
    multi_edges: np.ndarray

    def rows(self):
        for n, v, e, m in zip(self.n_cliques, self.vertices, self.edges, self.multi_edges):
            yield int(n), int(v), int(e), int(m)


def growth_trajectory(Z: CliqueMatrix, checkpoints=None) -> GrowthTrajectory:
    """Counts of vertices, graph edges and multigraph edges as cliques accumulate.

    Computed for every prefix length in ``checkpoints`` (default: every row).
    """
    N = Z.num_cliques
    if checkpoints is None:
        checkpoints = np.arange(1, N + 1)
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if checkpoints.size and (checkpoints.min() < 0 or checkpoints.max() > N):
        raise ValidationError("checkpoints must lie in 0..num_cliques")
    K = Z.vertex_count
    sizes = Z.row_sizes
    # vertex first appearance (vertices are labelled in order of appearance, but do not rely on it)
    first_v = np.full(K, N, dtype=np.int64)
    codes, code_rows = [], []
    for n, r in enumerate(Z.rows):
        if not r:
            continue
        a = np.asarray(r, dtype=np.int64)
        np.minimum.at(first_v, a, n)
        if len(a) > 1:
            iu, ju = np.triu_indices(len(a), 1)
            codes.append(a[iu] * K + a[ju])
            code_rows.append(np.full(len(iu), n, dtype=np.int64))
    if codes:
        codes = np.concatenate(codes)
        code_rows = np.concatenate(code_rows)
        _, first_idx = np.unique(codes, return_index=True)
        first_e = code_rows[first_idx]
    else:
        first_e = np.zeros(0, dtype=np.int64)
    v_new = np.bincount(first_v[first_v < N], minlength=N)
    e_new = np.bincount(first_e, minlength=N)
    m_new = sizes * (sizes - 1) // 2
    cum = lambda x: np.concatenate([[0], np.cumsum(x)])  # noqa: E731
    return GrowthTrajectory(
        checkpoints,
        cum(v_new)[checkpoints],
        cum(e_new)[checkpoints],
        cum(m_new)[checkpoints],
    )


def replicate_seed(master_seed, grid_index, replicate):
    """Independent seed sequence for one (grid point, replicate) pair."""
    return np.random.SeedSequence([int(master_seed), int(grid_index), int(replicate)])


def worker_count(requested=None):
    """Worker-pool size, capped by the ``RCC_THREADS`` environment variable."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("RCC_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"RCC_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


@dataclass
class ReplicateResult:
    grid_index: int
    replicate: int
    params: dict
    trajectory: GrowthTrajectory
    stats: dict = field(default_factory=dict)
    degrees: np.ndarray = None


def _one_replicate(args):
    grid_index, replicate, params, n_cliques, checkpoints, master_seed, with_stats = args
    rng = np.random.default_rng(replicate_seed(master_seed, grid_index, replicate))
    hp = Hyperparams(params["alpha"], params["sigma"], params["c"], params.get("tau", n_cliques))
    Z = sample_clique_matrix(hp, n_cliques, rng)
    traj = growth_trajectory(Z, checkpoints)
    stats, degrees = {}, None
    if with_stats:
        G = cover_to_graph(Z)
        degrees = degree_distribution(G).degrees
        if G.vertex_count >= 2:
            stats["density"] = density(G)
            stats["avg_max_clique"] = average_max_clique_per_vertex(G)
            stats["clustering"] = average_local_clustering(G)
    return ReplicateResult(grid_index, replicate, params, traj, stats, degrees)


def expand_grid(grid: dict):
    """Cartesian product of a ``{name: value or list}`` mapping, in sorted-key order."""
    if not grid:
        raise ValidationError("hyperparameter grid is empty")
    keys = sorted(grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in (grid[k] for k in keys)]
    if any(len(v) == 0 for v in values):
        raise ValidationError("hyperparameter grid has an empty axis")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def run_grid(grid, n_cliques, replicates, seed=0, checkpoints=None, with_stats=True, workers=None):
    """Simulate every grid point ``replicates`` times.

    Results are ordered by (grid index, replicate) and do not depend on the
    number of workers.
    """
    if replicates < 1:
        raise ValidationError("replicates must be >= 1")
    points = expand_grid(grid)
    if checkpoints is None:
        checkpoints = np.arange(1, n_cliques + 1)
    jobs = [
        (g, r, p, n_cliques, checkpoints, seed, with_stats)
        for g, p in enumerate(points)
        for r in range(replicates)
    ]
    n_workers = worker_count(workers)
    if n_workers == 1 or len(jobs) == 1:
        return [_one_replicate(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_one_replicate, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))


def loglog_checkpoints(n_max, n_min=1, num=40):
    """Roughly log-spaced distinct integers in ``[n_min, n_max]``."""
    pts = np.unique(np.round(np.logspace(math.log10(n_min), math.log10(n_max), num)).astype(np.int64))
    return pts[(pts >= n_min) & (pts <= n_max)]
