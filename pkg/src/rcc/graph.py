"""Graphs and multigraphs built from clique covers, plus edge-list I/O."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .ibp import CliqueMatrix
from .validation import ValidationError, check_count, check_probability, check_random_state

__all__ = [
    "Graph",
    "Multigraph",
    "NoisyOrParams",
    "EdgeListError",
    "cover_to_graph",
    "cover_to_multigraph",
    "noisy_or_edge_prob",
    "sample_observed_graph",
    "generating_clique_intersection_graph",
    "read_edgelist",
    "write_edgelist",
    "read_multigraph",
    "write_multigraph",
]

log = logging.getLogger(__name__)


def _pair(u, v):
    return (u, v) if u < v else (v, u)


class Graph:
    """Undirected simple graph on vertices ``0..vertex_count-1``."""

    __slots__ = ("_n", "_adj", "_n_edges")

    def __init__(self, vertex_count, edges=()):
        n = check_count(vertex_count, "vertex_count")
        adj = [set() for _ in range(n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValidationError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValidationError(f"edge ({u}, {v}) outside 0..{n - 1}")
            adj[u].add(v)
            adj[v].add(u)
        self._n = n
        self._adj = tuple(frozenset(a) for a in adj)
        self._n_edges = sum(len(a) for a in adj) // 2

    @property
    def vertex_count(self) -> int:
        return self._n

    @property
    def edge_count(self) -> int:
        return self._n_edges

    @property
    def adjacency(self):
        """Tuple of neighbour sets, indexed by vertex."""
        return self._adj

    def neighbors(self, v):
        return self._adj[v]

    def degree(self, v) -> int:
        return len(self._adj[v])

    def has_edge(self, u, v) -> bool:
        return v in self._adj[u]

    @property
    def edges(self):
        """Sorted list of ``(u, v)`` pairs with ``u < v``."""
        return sorted((u, v) for u in range(self._n) for v in self._adj[u] if u < v)

    def edge_set(self):
        return {(u, v) for u in range(self._n) for v in self._adj[u] if u < v}

    def to_adjacency_matrix(self) -> np.ndarray:
        A = np.zeros((self._n, self._n), dtype=np.int8)
        for u, v in self.edges:
            A[u, v] = A[v, u] = 1
        return A

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(range(self._n))
        g.add_edges_from(self.edges)
        return g

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self._n == other._n and self._adj == other._adj

    def __hash__(self):
        return hash((self._n, self._adj))

    def __repr__(self):
        return f"Graph(vertex_count={self._n}, edge_count={self._n_edges})"


class Multigraph:
    """Undirected multigraph stored as pair -> multiplicity."""

    __slots__ = ("_n", "_mult")

    def __init__(self, vertex_count, multiplicities=None):
        self._n = check_count(vertex_count, "vertex_count")
        mult = {}
        for (u, v), k in (multiplicities or {}).items():
            u, v, k = int(u), int(v), int(k)
            if u == v:
                raise ValidationError(f"self-loop at vertex {u}")
            if not (0 <= u < self._n and 0 <= v < self._n):
                raise ValidationError(f"edge ({u}, {v}) outside 0..{self._n - 1}")
            if k < 1:
                raise ValidationError("multiplicities must be positive")
            p = _pair(u, v)
            mult[p] = mult.get(p, 0) + k
        self._mult = mult

    @property
    def vertex_count(self) -> int:
        return self._n

    @property
    def edge_multiplicity(self):
        return dict(self._mult)

    def multiplicity(self, u, v) -> int:
        return self._mult.get(_pair(u, v), 0)

    @property
    def edge_count(self) -> int:
        """Total number of edges counted with multiplicity."""
        return sum(self._mult.values())

    def simple(self) -> Graph:
        return Graph(self._n, self._mult.keys())

    def __eq__(self, other):
        if not isinstance(other, Multigraph):
            return NotImplemented
        return self._n == other._n and self._mult == other._mult

    def __repr__(self):
        return f"Multigraph(vertex_count={self._n}, edge_count={self.edge_count})"


@dataclass(frozen=True)
class NoisyOrParams:
    """Edge-activation probabilities: one shared ``pi`` or one per clique."""

    pi: object = 1.0
    mode: str = "shared"

    def __post_init__(self):
        if self.mode == "shared":
            object.__setattr__(self, "pi", check_probability(self.pi))
        elif self.mode == "per-clique":
            object.__setattr__(self, "pi", tuple(check_probability(p, "pi_n") for p in self.pi))
        else:
            raise ValidationError(f"mode must be 'shared' or 'per-clique', got {self.mode!r}")

    def for_clique(self, n) -> float:
        return self.pi if self.mode == "shared" else self.pi[n]

    def check_against(self, Z):
        if self.mode == "per-clique" and len(self.pi) != Z.num_cliques:
            raise ValidationError(f"{len(self.pi)} clique probabilities for {Z.num_cliques} cliques")


# ---------------------------------------------------------------------------


def _shared_counts(Z: CliqueMatrix):
    counts = {}
    for r in Z.rows:
        for p in combinations(r, 2):
            counts[p] = counts.get(p, 0) + 1
    return counts


def cover_to_graph(Z: CliqueMatrix) -> Graph:
    """Graph with an edge between every pair of vertices sharing a clique."""
    edges = set()
    for r in Z.rows:
        edges.update(combinations(r, 2))
    return Graph(Z.vertex_count, edges)


def cover_to_multigraph(Z: CliqueMatrix) -> Multigraph:
    """Multigraph whose edge multiplicities count shared cliques (``Z^T Z`` off the diagonal)."""
    return Multigraph(Z.vertex_count, _shared_counts(Z))


def noisy_or_edge_prob(i, j, Z: CliqueMatrix, p: NoisyOrParams) -> float:
    if i == j:
        raise ValidationError("noisy-OR probability is defined for distinct vertices")
    p.check_against(Z)
    log_off = 0.0
    for n, r in enumerate(Z.rows):
        if i in r and j in r:
            pi = p.for_clique(n)
            if pi >= 1.0:
                return 1.0
            log_off += math.log1p(-pi)
    return -math.expm1(log_off)


def sample_observed_graph(Z: CliqueMatrix, p: NoisyOrParams, rng=None, method="pairwise") -> Graph:
    """Partially observed graph under the noisy-OR model.

    ``method="pairwise"`` draws one Bernoulli per covered vertex pair with the
    noisy-OR probability.  ``method="superposition"`` overlays one
    Erdős–Rényi ``G(|C_n|, pi_n)`` subgraph per clique.  Both give every pair
    the same marginal probability and independent pairs.
    """
    rng = check_random_state(rng)
    p.check_against(Z)
    edges = []
    if method == "pairwise":
        if p.mode == "shared":
            items = sorted(_shared_counts(Z).items())
            if not items:
                return Graph(Z.vertex_count)
            m = np.array([k for _, k in items], dtype=float)
            prob = -np.expm1(m * np.log1p(-p.pi)) if p.pi < 1 else np.ones_like(m)
            hits = rng.random(len(items)) < prob
            edges = [pair for (pair, _), h in zip(items, hits) if h]
        else:
            off = {}
            for n, r in enumerate(Z.rows):
                pi = p.pi[n]
                lp = math.log1p(-pi) if pi < 1 else -math.inf
                for pair in combinations(r, 2):
                    off[pair] = off.get(pair, 0.0) + lp
            items = sorted(off.items())
            if not items:
                return Graph(Z.vertex_count)
            prob = -np.expm1(np.array([v for _, v in items]))
            hits = rng.random(len(items)) < prob
            edges = [pair for (pair, _), h in zip(items, hits) if h]
    elif method == "superposition":
        edges = set()
        for n, r in enumerate(Z.rows):
            pairs = list(combinations(r, 2))
            if not pairs:
                continue
            hits = rng.random(len(pairs)) < p.for_clique(n)
            edges.update(pair for pair, h in zip(pairs, hits) if h)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return Graph(Z.vertex_count, edges)


def generating_clique_intersection_graph(Z: CliqueMatrix) -> Graph:
    """Graph on the rows of ``Z``; two rows are adjacent when they share a vertex."""
    by_vertex = [[] for _ in range(Z.vertex_count)]
    for n, r in enumerate(Z.rows):
        for v in r:
            by_vertex[v].append(n)
    edges = set()
    for rows in by_vertex:
        edges.update(combinations(rows, 2))
    return Graph(Z.num_cliques, edges)


# ---------------------------------------------------------------------------
# Edge lists


class EdgeListError(ValueError):
    """Malformed edge-list file; ``lineno`` is 1-based."""

    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


def _parse_lines(path, n_fields, header=None):
    path = Path(path)
    out = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            body, _, comment = line.partition("#")
            words = comment.split()
            if header is not None and len(words) == 2 and words[0] == "vertices" and words[1].isdigit():
                header["vertices"] = int(words[1])
            line = body.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != n_fields:
                raise EdgeListError(path, lineno, f"expected {n_fields} fields, got {len(parts)}")
            try:
                vals = [int(x) for x in parts]
            except ValueError:
                raise EdgeListError(path, lineno, f"non-integer field in {line!r}") from None
            if min(vals[:2]) < 0:
                raise EdgeListError(path, lineno, "vertex ids must be non-negative")
            out.append((lineno, vals))
    return out


def _vertex_total(top, header, vertex_count, path):
    if vertex_count is None:
        vertex_count = header.get("vertices", top + 1)
    if vertex_count <= top:
        raise ValidationError(f"{path}: vertex id {top} exceeds the declared {vertex_count} vertices")
    return vertex_count


def read_edgelist(path, vertex_count=None) -> Graph:
    """Read a whitespace-separated ``u v`` edge list; duplicates and reversed pairs are merged.

    A ``# vertices N`` comment (as written by :func:`write_edgelist`) fixes the
    vertex count so that isolated trailing vertices survive a round trip.
    """
    edges = set()
    top = -1
    header = {}
    for lineno, (u, v) in _parse_lines(path, 2, header):
        top = max(top, u, v)
        if u == v:
            log.warning("%s:%d: dropping self-loop at %d", path, lineno, u)
            continue
        edges.add(_pair(u, v))
    return Graph(_vertex_total(top, header, vertex_count, path), edges)


def write_edgelist(G: Graph, path, header=None):
    with Path(path).open("w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        fh.write(f"# vertices {G.vertex_count}\n")
        for u, v in G.edges:
            fh.write(f"{u} {v}\n")


def read_multigraph(path, vertex_count=None) -> Multigraph:
    mult = {}
    top = -1
    header = {}
    for lineno, (u, v, k) in _parse_lines(path, 3, header):
        top = max(top, u, v)
        if u == v:
            raise EdgeListError(path, lineno, "self-loop")
        if k < 1:
            raise EdgeListError(path, lineno, "multiplicity must be positive")
        p = _pair(u, v)
        mult[p] = mult.get(p, 0) + k
    return Multigraph(_vertex_total(top, header, vertex_count, path), mult)


def write_multigraph(M: Multigraph, path):
    with Path(path).open("w") as fh:
        fh.write(f"# vertices {M.vertex_count}\n")
        for (u, v), k in sorted(M.edge_multiplicity.items()):
            fh.write(f"{u} {v} {k}\n")
