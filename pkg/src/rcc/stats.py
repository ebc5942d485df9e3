"""Graph statistics: density, degrees, clustering, triangles and maximal cliques."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .graph import Graph
from .validation import ValidationError

__all__ = [
    "GraphSummary",
    "DegreeDistribution",
    "RegressionResult",
    "CliqueBudgetExceeded",
    "TABLE_FIELDS",
    "density",
    "degree_distribution",
    "local_clustering",
    "average_local_clustering",
    "triangle_counts",
    "triangles_per_vertex",
    "iter_maximal_cliques",
    "maximal_cliques",
    "max_clique_per_vertex",
    "average_max_clique_per_vertex",
    "sparsity_regression",
    "summarize",
    "write_summary_csv",
    "write_summary_json",
    "write_histogram_csv",
    "read_histogram_csv",
]

DEFAULT_CLIQUE_BUDGET = 10**6

# Row labels of the summary table, in order.
TABLE_FIELDS = (
    "triang./vertex",
    "density (×1k)",
    "av. degree",
    "max. clique",
    "cluster. coeff.",
)


class CliqueBudgetExceeded(RuntimeError):
    """Raised when maximal-clique enumeration exceeds its budget.

    ``partial`` holds the cliques found before the budget ran out.
    """

    def __init__(self, budget, partial):
        super().__init__(f"more than {budget} maximal cliques; enumeration aborted")
        self.budget = budget
        self.partial = partial


def density(G: Graph) -> float:
    n = G.vertex_count
    if n < 2:
        raise ValidationError("density needs at least two vertices")
    return 2.0 * G.edge_count / (n * (n - 1))


@dataclass
class DegreeDistribution:
    degrees: np.ndarray
    histogram: dict

    @property
    def normalized(self) -> np.ndarray:
        """Degrees divided by the number of vertices."""
        n = len(self.degrees)
        return self.degrees / n if n else self.degrees.astype(float)

    @property
    def mean(self) -> float:
        return float(self.degrees.mean()) if len(self.degrees) else 0.0


def degree_distribution(G: Graph) -> DegreeDistribution:
    deg = np.array([len(a) for a in G.adjacency], dtype=np.int64)
    hist = dict(sorted(Counter(deg.tolist()).items()))
    return DegreeDistribution(deg, hist)


def triangle_counts(G: Graph) -> np.ndarray:
    """Number of triangles through each vertex.

    Edges are oriented from lower to higher (degree, id) rank, so each
    triangle is found exactly once by intersecting out-neighbourhoods.
    """
    adj = G.adjacency
    n = G.vertex_count
    rank = sorted(range(n), key=lambda v: (len(adj[v]), v))
    pos = [0] * n
    for i, v in enumerate(rank):
        pos[v] = i
    out = [frozenset(w for w in adj[v] if pos[w] > pos[v]) for v in range(n)]
    tri = np.zeros(n, dtype=np.int64)
    for u in range(n):
        ou = out[u]
        for v in ou:
            common = ou & out[v]
            if common:
                k = len(common)
                tri[u] += k
                tri[v] += k
                for w in common:
                    tri[w] += 1
    return tri


def triangles_per_vertex(G: Graph) -> float:
    if G.vertex_count == 0:
        return 0.0
    return float(triangle_counts(G).sum() / 3 / G.vertex_count)


def local_clustering(G: Graph, v) -> float:
    """Fraction of neighbour pairs of ``v`` that are adjacent (0 when degree < 2)."""
    nb = G.adjacency[v]
    k = len(nb)
    if k < 2:
        return 0.0
    adj = G.adjacency
    links = sum(len(adj[u] & nb) for u in nb) // 2
    return links / (k * (k - 1) / 2)


def average_local_clustering(G: Graph, include_low_degree=False, triangles=None) -> float:
    """Mean local clustering coefficient.

    Vertices of degree < 2 are left out of the average unless
    ``include_low_degree`` is set, in which case they count as 0.
    """
    tri = triangle_counts(G) if triangles is None else triangles
    deg = np.array([len(a) for a in G.adjacency], dtype=float)
    ok = deg >= 2
    coeff = np.zeros(G.vertex_count)
    coeff[ok] = 2.0 * tri[ok] / (deg[ok] * (deg[ok] - 1))
    pool = coeff if include_low_degree else coeff[ok]
    return float(pool.mean()) if pool.size else 0.0


def iter_maximal_cliques(G: Graph, max_cliques=DEFAULT_CLIQUE_BUDGET):
    """Yield every maximal clique as a sorted tuple (Bron–Kerbosch with Tomita pivoting).

    Isolated vertices are reported as singleton cliques.
    """
    adj = G.adjacency
    stack = [((), frozenset(range(G.vertex_count)), frozenset())]
    found = 0
    while stack:
        R, P, X = stack.pop()
        if not P:
            if not X:
                found += 1
                if max_cliques is not None and found > max_cliques:
                    raise CliqueBudgetExceeded(max_cliques, None)
                yield tuple(sorted(R))
            continue
        pivot = max(P | X, key=lambda u: len(P & adj[u]))
        for v in sorted(P - adj[pivot], reverse=True):
            nv = adj[v]
            stack.append((R + (v,), P & nv, X & nv))
            P = P - {v}
            X = X | {v}


def maximal_cliques(G: Graph, max_cliques=DEFAULT_CLIQUE_BUDGET):
    """Sorted list of all maximal cliques; raises :class:`CliqueBudgetExceeded` past the budget."""
    out = []
    try:
        for q in iter_maximal_cliques(G, max_cliques):
            out.append(q)
    except CliqueBudgetExceeded as exc:
        exc.partial = sorted(out)
        raise
    return sorted(out)


def max_clique_per_vertex(G: Graph, max_cliques=DEFAULT_CLIQUE_BUDGET) -> np.ndarray:
    """Size of the largest maximal clique containing each vertex."""
    best = np.ones(G.vertex_count, dtype=np.int64)
    for q in iter_maximal_cliques(G, max_cliques):
        k = len(q)
        for v in q:
            if best[v] < k:
                best[v] = k
    return best


def average_max_clique_per_vertex(G: Graph, max_cliques=DEFAULT_CLIQUE_BUDGET) -> float:
    if G.vertex_count == 0:
        return 0.0
    return float(max_clique_per_vertex(G, max_cliques).mean())


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int


def sparsity_regression(samples, level=0.95) -> RegressionResult:
    """Least-squares slope of log|E| on log|V| for ``(|V|, |E|)`` pairs."""
    arr = np.asarray(list(samples), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 3:
        raise ValidationError("need at least three (|V|, |E|) pairs")
    if arr[:, 0].min() < 2 or arr[:, 1].min() <= 0:
        raise ValidationError("every sample needs |V| >= 2 and |E| >= 1")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    if np.ptp(x) == 0:
        raise ValidationError("all samples have the same |V|; slope undefined")
    fit = sps.linregress(x, y)
    t = sps.t.ppf(0.5 + level / 2, len(x) - 2) if len(x) > 2 else math.inf
    return RegressionResult(
        float(fit.slope),
        float(fit.intercept),
        float(fit.stderr),
        float(fit.slope - t * fit.stderr),
        float(fit.slope + t * fit.stderr),
        len(x),
    )


@dataclass
class GraphSummary:
    """The five summary statistics plus the graph size."""

    triangles_per_vertex: float
    density: float
    average_degree: float
    average_max_clique_per_vertex: float
    average_local_clustering: float
    vertex_count: int
    edge_count: int

    def table_row(self) -> dict:
        """Statistics keyed by the table labels; density is scaled by 1000."""
        return dict(
            zip(
                TABLE_FIELDS,
                (
                    self.triangles_per_vertex,
                    1000.0 * self.density,
                    self.average_degree,
                    self.average_max_clique_per_vertex,
                    self.average_local_clustering,
                ),
            )
        )

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(
    G: Graph,
    skip_max_clique=False,
    include_low_degree=False,
    max_cliques=DEFAULT_CLIQUE_BUDGET,
) -> GraphSummary:
    """Compute every summary statistic of ``G``.

    With ``skip_max_clique`` the maximal-clique statistic is reported as NaN,
    which is useful for graphs too large to enumerate.
    """
    n = G.vertex_count
    dens = density(G)
    tri = triangle_counts(G)
    mc = math.nan if skip_max_clique else average_max_clique_per_vertex(G, max_cliques)
    return GraphSummary(
        triangles_per_vertex=float(tri.sum() / 3 / n),
        density=dens,
        average_degree=2.0 * G.edge_count / n,
        average_max_clique_per_vertex=mc,
        average_local_clustering=average_local_clustering(G, include_low_degree, tri),
        vertex_count=n,
        edge_count=G.edge_count,
    )


def _fmt(x):
    return "" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def write_summary_csv(rows, path, labels=None):
    """Write one table row per summary (``rows`` is a list of :class:`GraphSummary` or dicts)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        head = ["label", *TABLE_FIELDS] if labels is not None else list(TABLE_FIELDS)
        w.writerow(head)
        for i, r in enumerate(rows):
            vals = r.table_row() if isinstance(r, GraphSummary) else r
            line = [_fmt(vals[k]) for k in TABLE_FIELDS]
            w.writerow([labels[i], *line] if labels is not None else line)


def write_summary_json(summary, path, extra=None):
    row = summary.table_row() if isinstance(summary, GraphSummary) else dict(summary)
    row = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in row.items()}
    if extra:
        row = {**row, **extra}
    Path(path).write_text(json.dumps(row, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def write_histogram_csv(values, path):
    """Write ``value,count`` lines for the integer ``values``."""
    hist = sorted(Counter(int(v) for v in values).items())
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "count"])
        w.writerows(hist)


def read_histogram_csv(path) -> dict:
    with Path(path).open(newline="") as fh:
        r = csv.DictReader(fh)
        return {int(row["value"]): int(row["count"]) for row in r}
