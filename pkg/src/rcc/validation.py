"""Input validation helpers shared by the estimators and the functional API."""

from __future__ import annotations

import numbers

import numpy as np


class ValidationError(ValueError):
    """Raised when user input violates a documented precondition."""


def check_random_state(seed=None) -> np.random.Generator:
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts ``None``, an integer, a :class:`~numpy.random.SeedSequence` or an
    existing generator (returned unchanged, so state is shared with the caller).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValidationError(f"cannot build a random generator from {seed!r}")


def check_scalar(x, name, *, low=None, high=None, include_low=False, include_high=False):
    """Return ``x`` as float after checking it is finite and inside the bounds."""
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise ValidationError(f"{name} must be a real number, got {x!r}")
    x = float(x)
    if not np.isfinite(x):
        raise ValidationError(f"{name} must be finite, got {x}")
    if low is not None and (x < low or (x == low and not include_low)):
        op = ">=" if include_low else ">"
        raise ValidationError(f"{name} must be {op} {low}, got {x}")
    if high is not None and (x > high or (x == high and not include_high)):
        op = "<=" if include_high else "<"
        raise ValidationError(f"{name} must be {op} {high}, got {x}")
    return x


def check_count(n, name, *, low=0):
    if isinstance(n, bool) or not isinstance(n, numbers.Integral):
        raise ValidationError(f"{name} must be an integer, got {n!r}")
    n = int(n)
    if n < low:
        raise ValidationError(f"{name} must be >= {low}, got {n}")
    return n


def check_probability(p, name="pi"):
    return check_scalar(p, name, low=0.0, high=1.0, include_low=True, include_high=True)


def check_graph(G):
    """Coerce ``G`` into a :class:`rcc.graph.Graph`.

    Accepts a Graph, a networkx-like object with ``nodes``/``edges`` whose
    nodes are ``0..n-1``, or a square symmetric 0/1 adjacency array.
    """
    from .graph import Graph

    if isinstance(G, Graph):
        return G
    if hasattr(G, "edges") and hasattr(G, "nodes"):
        nodes = list(G.nodes)
        n = len(nodes)
        if sorted(nodes) != list(range(n)):
            raise ValidationError("graph nodes must be the integers 0..n-1")
        return Graph(n, G.edges)
    A = np.asarray(G)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"adjacency must be a square matrix, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise ValidationError("adjacency must be symmetric")
    if np.any(np.diag(A)):
        raise ValidationError("adjacency must have an empty diagonal")
    u, v = np.nonzero(np.triu(A, 1))
    return Graph(A.shape[0], zip(u.tolist(), v.tolist()))


def check_clique_matrix(Z, *, allow_empty_columns=True):
    """Coerce ``Z`` into a :class:`rcc.ibp.CliqueMatrix` (dense 0/1 arrays accepted)."""
    from .ibp import CliqueMatrix

    if isinstance(Z, CliqueMatrix):
        out = Z
    else:
        A = np.asarray(Z)
        if A.ndim != 2:
            raise ValidationError(f"clique matrix must be 2-d, got shape {A.shape}")
        if not np.isin(A, (0, 1)).all():
            raise ValidationError("clique matrix must be binary")
        out = CliqueMatrix.from_dense(A)
    if not allow_empty_columns and out.vertex_count and out.column_counts.min() == 0:
        raise ValidationError("every vertex must belong to at least one clique")
    return out
