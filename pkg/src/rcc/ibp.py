"""Stable-beta Indian buffet process: sampling, densities and expectations.

Rows of a clique matrix are cliques, columns are vertices.  The law of a
matrix is the sequential predictive scheme of the stable-beta IBP with mass
``alpha``, discount ``sigma`` and concentration ``c``; the number of rows is
Poisson(``tau``).
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .validation import (
    ValidationError,
    check_count,
    check_random_state,
    check_scalar,
)

__all__ = [
    "Hyperparams",
    "CliqueMatrix",
    "AtomMeasure",
    "EdgeCountEstimate",
    "predictive_prob",
    "new_vertex_rate",
    "new_vertex_rates",
    "sample_clique_matrix",
    "log_joint",
    "log_joint_from_counts",
    "log_joint_grad",
    "expected_vertex_count",
    "asymptotic_vertex_count",
    "zipf_count_prediction",
    "expected_count_exact",
    "expected_clique_overlap",
    "levy_density",
    "levy_mass",
    "sample_atoms",
    "expected_edge_count_mc",
]


@dataclass(frozen=True)
class Hyperparams:
    """Parameter bundle of the random clique cover prior."""

    alpha: float
    sigma: float
    c: float
    tau: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_scalar(self.alpha, "alpha", low=0.0))
        object.__setattr__(self, "sigma", check_scalar(self.sigma, "sigma", low=0.0, high=1.0))
        c = check_scalar(self.c, "c")
        if not c > -self.sigma:
            raise ValidationError(f"c must be > -sigma = {-self.sigma}, got {c}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "tau", check_scalar(self.tau, "tau", low=0.0))

    def replace(self, **changes) -> "Hyperparams":
        d = self.to_dict()
        d.update(changes)
        return Hyperparams(**d)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "sigma": self.sigma, "c": self.c, "tau": self.tau}

    @classmethod
    def from_dict(cls, d) -> "Hyperparams":
        try:
            return cls(d["alpha"], d["sigma"], d["c"], d.get("tau", 1.0))
        except KeyError as exc:
            raise ValidationError(f"missing hyperparameter {exc.args[0]!r}") from None


class CliqueMatrix:
    """Binary clique-by-vertex incidence matrix stored as sorted row tuples.

    Rows may be empty (used during inference); columns are the vertex ids
    ``0..vertex_count-1``.
    """

    __slots__ = ("_rows", "_n_vertices", "_counts")

    def __init__(self, rows, vertex_count=None):
        rows = tuple(tuple(sorted({int(v) for v in r})) for r in rows)
        top = max((r[-1] for r in rows if r), default=-1)
        if vertex_count is None:
            vertex_count = top + 1
        vertex_count = check_count(vertex_count, "vertex_count")
        if top >= vertex_count or any(r and r[0] < 0 for r in rows):
            raise ValidationError("row contains a vertex index outside 0..vertex_count-1")
        counts = np.zeros(vertex_count, dtype=np.int64)
        for r in rows:
            counts[list(r)] += 1
        counts.setflags(write=False)
        self._rows = rows
        self._n_vertices = vertex_count
        self._counts = counts

    @property
    def rows(self):
        return self._rows

    @property
    def num_cliques(self) -> int:
        return len(self._rows)

    @property
    def vertex_count(self) -> int:
        return self._n_vertices

    @property
    def column_counts(self) -> np.ndarray:
        return self._counts

    @property
    def row_sizes(self) -> np.ndarray:
        return np.array([len(r) for r in self._rows], dtype=np.int64)

    def __len__(self):
        return len(self._rows)

    def __eq__(self, other):
        if not isinstance(other, CliqueMatrix):
            return NotImplemented
        return self._rows == other._rows and self._n_vertices == other._n_vertices

    def __hash__(self):
        return hash((self._rows, self._n_vertices))

    def __repr__(self):
        return f"CliqueMatrix(num_cliques={self.num_cliques}, vertex_count={self.vertex_count})"

    def prefix(self, n) -> "CliqueMatrix":
        """The first ``n`` rows, keeping only vertices that appear in them."""
        rows = self._rows[:n]
        top = max((r[-1] for r in rows if r), default=-1)
        return CliqueMatrix(rows, top + 1)

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.num_cliques, self.vertex_count), dtype=np.int8)
        for n, r in enumerate(self._rows):
            A[n, list(r)] = 1
        return A

    def to_sparse(self):
        from scipy import sparse

        indptr = np.cumsum([0] + [len(r) for r in self._rows])
        indices = np.fromiter((v for r in self._rows for v in r), dtype=np.int64, count=indptr[-1])
        data = np.ones(len(indices), dtype=np.int8)
        return sparse.csr_matrix((data, indices, indptr), shape=(self.num_cliques, self.vertex_count))

    @classmethod
    def from_dense(cls, A) -> "CliqueMatrix":
        A = np.asarray(A)
        return cls([np.flatnonzero(row).tolist() for row in A], A.shape[1])

    def to_json(self) -> dict:
        return {
            "n_cliques": self.num_cliques,
            "vertices": self.vertex_count,
            "rows": [list(r) for r in self._rows],
        }

    @classmethod
    def from_json(cls, d) -> "CliqueMatrix":
        if isinstance(d, str):
            d = json.loads(d)
        Z = cls(d["rows"], d["vertices"])
        if Z.num_cliques != d.get("n_cliques", Z.num_cliques):
            raise ValidationError("n_cliques does not match the number of rows")
        return Z


@dataclass(frozen=True)
class AtomMeasure:
    """Atoms of a stable beta process truncated below ``truncation_level``."""

    weights: np.ndarray
    truncation_level: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.size and (w.min() <= self.truncation_level or w.max() > 1.0):
            raise ValidationError("atom weights must lie in (truncation_level, 1]")
        object.__setattr__(self, "weights", w)


# ---------------------------------------------------------------------------
# Predictive scheme


def predictive_prob(m, n, hp: Hyperparams) -> float:
    """Probability that row ``n`` (1-based) includes a vertex seen ``m`` times before."""
    m = check_count(m, "m", low=1)
    n = check_count(n, "n", low=1)
    if m > n - 1:
        raise ValidationError(f"a vertex cannot have been seen {m} times in {n - 1} rows")
    return (m - hp.sigma) / (n + hp.c - 1)


def _log_rate_const(hp):
    return math.log(hp.alpha) + math.lgamma(1 + hp.c) - math.lgamma(hp.c + hp.sigma)


def new_vertex_rate(n, hp: Hyperparams) -> float:
    """Poisson rate of brand-new vertices in row ``n`` (1-based)."""
    n = check_count(n, "n", low=1)
    s, c = hp.sigma, hp.c
    return math.exp(_log_rate_const(hp) + math.lgamma(n + c + s - 1) - math.lgamma(n + c))


def new_vertex_rates(n_rows, hp: Hyperparams) -> np.ndarray:
    """Vector of :func:`new_vertex_rate` for rows ``1..n_rows``."""
    n = np.arange(1, n_rows + 1, dtype=float)
    s, c = hp.sigma, hp.c
    return np.exp(_log_rate_const(hp) + special.gammaln(n + c + s - 1) - special.gammaln(n + c))


class _CountGroups:
    """Vertices bucketed by how many rows they appear in, with O(1) moves."""

    def __init__(self):
        self.members = {}  # count -> list of vertex ids
        self.pos = []  # vertex -> index inside its bucket
        self.count = []

    def add_new(self, v):
        bucket = self.members.setdefault(1, [])
        self.pos.append(len(bucket))
        self.count.append(1)
        bucket.append(v)

    def bump(self, v):
        m = self.count[v]
        bucket = self.members[m]
        i = self.pos[v]
        last = bucket.pop()
        if last != v:
            bucket[i] = last
            self.pos[last] = i
        if not bucket:
            del self.members[m]
        dest = self.members.setdefault(m + 1, [])
        self.pos[v] = len(dest)
        dest.append(v)
        self.count[v] = m + 1


def sample_clique_matrix(hp: Hyperparams, n_cliques=None, rng=None, method="grouped") -> CliqueMatrix:
    """Draw a clique matrix from the stable-beta IBP.

    ``n_cliques=None`` draws the number of rows from Poisson(tau).  Vertices
    are numbered in order of first appearance.

    ``method="naive"`` flips one coin per previously seen vertex and row;
    ``method="grouped"`` (default) draws one binomial per distinct count and
    then picks which vertices of that count are included.  Both produce the
    same distribution; the grouped form is much faster for large matrices.
    """
    rng = check_random_state(rng)
    if n_cliques is None:
        n_cliques = int(rng.poisson(hp.tau))
    n_cliques = check_count(n_cliques, "n_cliques")
    rates = new_vertex_rates(n_cliques, hp)
    if method == "naive":
        return _sample_naive(hp, n_cliques, rates, rng)
    if method != "grouped":
        raise ValidationError(f"unknown method {method!r}")

    sigma, c = hp.sigma, hp.c
    groups = _CountGroups()
    rows = []
    n_seen = 0
    for n in range(1, n_cliques + 1):
        row = []
        if groups.members:
            levels = np.fromiter(sorted(groups.members), dtype=np.int64)
            sizes = np.fromiter((len(groups.members[m]) for m in levels), dtype=np.int64, count=len(levels))
            draws = rng.binomial(sizes, (levels - sigma) / (n + c - 1))
            for m, size, b in zip(levels.tolist(), sizes.tolist(), draws.tolist()):
                if b == 0:
                    continue
                if b == size:
                    row.extend(groups.members[m])
                else:
                    picks = rng.choice(size, size=b, replace=False)
                    bucket = groups.members[m]
                    row.extend(bucket[i] for i in picks.tolist())
            for v in row:
                groups.bump(v)
        k_new = int(rng.poisson(rates[n - 1]))
        for v in range(n_seen, n_seen + k_new):
            groups.add_new(v)
            row.append(v)
        n_seen += k_new
        rows.append(row)
    return CliqueMatrix(rows, n_seen)


def _sample_naive(hp, n_cliques, rates, rng):
    counts = np.zeros(0, dtype=np.int64)
    rows = []
    for n in range(1, n_cliques + 1):
        p = (counts - hp.sigma) / (n + hp.c - 1)
        seen = np.flatnonzero(rng.random(len(counts)) < p)
        k_new = int(rng.poisson(rates[n - 1]))
        counts[seen] += 1
        new = np.arange(len(counts), len(counts) + k_new)
        counts = np.concatenate([counts, np.ones(k_new, dtype=np.int64)])
        rows.append(seen.tolist() + new.tolist())
    return CliqueMatrix(rows, len(counts))


# ---------------------------------------------------------------------------
# Densities


def _poisson_logpmf(k, rate):
    if rate == 0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(rate) - rate - math.lgamma(k + 1)


def log_joint_from_counts(n_rows, count_hist, hp: Hyperparams, include_n_prior=False, rate_sum=None) -> float:
    """Log probability of a labelled clique matrix given only its sufficient statistics.

    ``count_hist`` maps a column count ``m >= 1`` to the number of vertices
    appearing in exactly ``m`` of the ``n_rows`` rows.  Vertex labels are
    treated as a uniformly random assignment, which makes the value invariant
    to permutations of rows and columns.  ``rate_sum`` may pass a precomputed
    total of :func:`new_vertex_rates`.
    """
    N = n_rows
    s, c = hp.sigma, hp.c
    if rate_sum is None:
        rate_sum = float(new_vertex_rates(N, hp).sum()) if N else 0.0
    K = 0
    total = -rate_sum
    lg_nc = math.lgamma(N + c)
    for m, h in sorted(count_hist.items()):  # fixed order keeps sums reproducible
        if not h:
            continue
        if m < 1 or m > N:
            raise ValidationError(f"column count {m} impossible with {N} rows")
        K += h
        total += h * (math.lgamma(m - s) + math.lgamma(N - m + c + s) - lg_nc)
    if K:
        total += K * (_log_rate_const(hp) - math.lgamma(1 - s)) - math.lgamma(K + 1)
    if include_n_prior:
        total += _poisson_logpmf(N, hp.tau)
    return total


def log_joint(Z, hp: Hyperparams, include_n_prior=False) -> float:
    """Log probability of clique matrix ``Z`` under the stable-beta IBP.

    Equivalent to the sequential product of predictive inclusion/exclusion
    probabilities and Poisson new-vertex terms, with the per-row ``k_n!``
    label factors replaced by a single ``K!`` (uniformly random labelling of
    the ``K`` vertices).  All-zero rows count towards the number of rows.
    All-zero columns are not allowed.
    """
    counts = Z.column_counts
    if counts.size and counts.min() == 0:
        raise ValidationError("log_joint needs every column to appear in at least one row")
    hist = Counter(counts.tolist())
    return log_joint_from_counts(Z.num_cliques, hist, hp, include_n_prior)


def log_joint_grad(Z, hp: Hyperparams, include_n_prior=True) -> np.ndarray:
    """Gradient of :func:`log_joint` w.r.t. ``(alpha, sigma, c, tau)``."""
    counts = np.asarray(Z.column_counts, dtype=float)
    if counts.size and counts.min() == 0:
        raise ValidationError("log_joint needs every column to appear in at least one row")
    N, K = Z.num_cliques, counts.size
    a, s, c, tau = hp.alpha, hp.sigma, hp.c, hp.tau
    psi = special.digamma
    n = np.arange(1, N + 1, dtype=float)
    lam = new_vertex_rates(N, hp)
    d_alpha = K / a - lam.sum() / a
    d_sigma = -np.sum(lam * (psi(n + c + s - 1) - psi(c + s)))
    d_c = -np.sum(lam * (psi(1 + c) + psi(n + c + s - 1) - psi(n + c) - psi(c + s)))
    if K:
        d_sigma += K * (psi(1 - s) - psi(c + s))
        d_sigma += np.sum(-psi(counts - s) + psi(N - counts + c + s))
        d_c += K * (psi(1 + c) - psi(c + s))
        d_c += np.sum(psi(N - counts + c + s)) - K * psi(N + c)
    d_tau = (N / tau - 1.0) if include_n_prior else 0.0
    return np.array([d_alpha, d_sigma, d_c, d_tau])


# ---------------------------------------------------------------------------
# Expectations


def expected_vertex_count(hp: Hyperparams, n_cliques) -> float:
    """Exact expected number of vertices in ``n_cliques`` rows."""
    n_cliques = check_count(n_cliques, "n_cliques")
    return float(new_vertex_rates(n_cliques, hp).sum())


def asymptotic_vertex_count(hp: Hyperparams, n_cliques) -> float:
    """Large-N approximation ``(alpha/sigma) G(1+c)/G(c+sigma) N**sigma``."""
    s, c = hp.sigma, hp.c
    return hp.alpha / s * math.exp(math.lgamma(1 + c) - math.lgamma(c + s)) * n_cliques**s


def zipf_count_prediction(hp: Hyperparams, n_cliques, j) -> float:
    """Asymptotic expected number of vertices appearing in exactly ``j`` rows."""
    j = check_count(j, "j", low=1)
    s, c = hp.sigma, hp.c
    log_k = (
        math.log(hp.alpha)
        + math.lgamma(j - s)
        + math.lgamma(1 + c)
        - math.lgamma(j + 1)
        - math.lgamma(1 - s)
        - math.lgamma(c + s)
    )
    return math.exp(log_k) * n_cliques**s


def expected_count_exact(hp: Hyperparams, n_cliques, j) -> float:
    """Exact expected number of vertices appearing in exactly ``j`` of ``n_cliques`` rows."""
    j = check_count(j, "j", low=1)
    N = check_count(n_cliques, "n_cliques")
    if j > N:
        return 0.0
    s, c = hp.sigma, hp.c
    log_k = (
        _log_rate_const(hp)
        + math.lgamma(j - s)
        - math.lgamma(1 - s)
        + math.lgamma(N - j + c + s)
        - math.lgamma(N + c)
        + math.lgamma(N + 1)
        - math.lgamma(j + 1)
        - math.lgamma(N - j + 1)
    )
    return math.exp(log_k)


def expected_clique_overlap(hp: Hyperparams) -> float:
    """Expected number of vertices shared by two cliques."""
    return hp.alpha * (1 - hp.sigma) / (1 + hp.c)


def _levy_log_const(hp):
    return (
        math.log(hp.alpha)
        + math.lgamma(1 + hp.c)
        - math.lgamma(1 - hp.sigma)
        - math.lgamma(hp.c + hp.sigma)
    )


def levy_density(mu, hp: Hyperparams):
    """Density of the stable beta Lévy measure at ``mu`` in (0, 1)."""
    mu = np.asarray(mu, dtype=float)
    if np.any((mu <= 0) | (mu >= 1)):
        raise ValidationError("mu must lie strictly inside (0, 1)")
    s, c = hp.sigma, hp.c
    out = np.exp(_levy_log_const(hp) - (s + 1) * np.log(mu) + (c + s - 1) * np.log1p(-mu))
    return float(out) if out.ndim == 0 else out


def levy_mass(lo, hi, hp: Hyperparams) -> float:
    """Lévy measure of the interval ``(lo, hi)``, with ``0 < lo < hi <= 1``."""
    # quad never evaluates the endpoints, so hi = 1 is safe
    val, _ = integrate.quad(lambda m: levy_density(m, hp), lo, hi, limit=200)
    return val


def _tail_first_moment(eps, hp):
    # integral of mu * nu(dmu) over (0, eps)
    s, c = hp.sigma, hp.c
    a, b = 1 - s, c + s
    return math.exp(_levy_log_const(hp) + special.betaln(a, b)) * special.betainc(a, b, eps)


def sample_atoms(hp: Hyperparams, truncation=1e-6, rng=None) -> AtomMeasure:
    """Sample the atoms of the stable beta process that exceed ``truncation``.

    The Lévy intensity is split at 1/2.  On ``(eps, 1/2]`` atoms are proposed
    from the ``mu**(-sigma-1)`` envelope and on ``(1/2, 1)`` from the
    ``(1-mu)**(c+sigma-1)`` envelope; each proposal is thinned by the ratio of
    the remaining factor to its maximum on the piece.
    """
    rng = check_random_state(rng)
    eps = check_scalar(truncation, "truncation", low=0.0, high=0.5)
    s, c = hp.sigma, hp.c
    log_k = _levy_log_const(hp)
    b = c + s - 1
    out = []

    # (eps, 1/2]: envelope K mu^{-s-1} * max((1-mu)^b)
    env_max = max((1 - eps) ** b, 0.5**b)
    env_mass = math.exp(log_k) * env_max * (eps**-s - 0.5**-s) / s
    n_prop = rng.poisson(env_mass)
    u = rng.random(n_prop)
    # inverse cdf of mu^{-s-1} on (eps, 1/2]
    mu = (eps**-s - u * (eps**-s - 0.5**-s)) ** (-1 / s)
    keep = rng.random(n_prop) < (1 - mu) ** b / env_max
    out.append(mu[keep])

    # (1/2, 1): envelope K (1-mu)^b * 2^{s+1}
    env_max = 2.0 ** (s + 1)
    bb = c + s
    env_mass = math.exp(log_k) * env_max * 0.5**bb / bb
    n_prop = rng.poisson(env_mass)
    u = rng.random(n_prop)
    mu = 1 - 0.5 * u ** (1 / bb)
    keep = rng.random(n_prop) < mu ** (-s - 1) / env_max
    out.append(mu[keep])

    w = np.concatenate(out)
    w = w[(w > eps) & (w <= 1)]
    return AtomMeasure(np.sort(w)[::-1], eps)


@dataclass(frozen=True)
class EdgeCountEstimate:
    mean: float
    stderr: float
    boundary: float = 0.0
    n_replicates: int = 0
    per_replicate: np.ndarray = field(default=None, repr=False)


def _pair_sum(w, n_cliques, chunk=2048):
    # sum over i != j of 1 - (1 - w_i w_j)^N, halved
    total = 0.0
    lw = np.log(w)
    for start in range(0, len(w), chunk):
        blk = w[start : start + chunk]
        prod = np.outer(blk, w)
        vals = -np.expm1(n_cliques * np.log1p(-np.minimum(prod, 1 - 1e-16)))
        vals[prod >= 1.0] = 1.0
        total += vals.sum()
        idx = np.arange(start, start + len(blk))
        diag = -np.expm1(n_cliques * np.log1p(-np.minimum(np.exp(2 * lw[idx]), 1 - 1e-16)))
        total -= diag.sum()
    return 0.5 * total


def expected_edge_count_mc(hp: Hyperparams, n_cliques, truncation=None, rng=None, n_replicates=20):
    """Monte-Carlo estimate of the expected number of edges after ``n_cliques`` cliques.

    Each replicate draws truncated atoms and evaluates
    ``1/2 sum_{i != j} 1 - (1 - w_i w_j)^N`` exactly.  ``n_cliques`` may be a
    sequence, in which case the same atoms are reused for every entry and a
    list of estimates is returned.  A ``RuntimeWarning`` is issued when the
    bound on the mass lost to truncation exceeds 1% of the estimate.
    """
    rng = check_random_state(rng)
    scalar = np.ndim(n_cliques) == 0
    Ns = [int(n) for n in np.atleast_1d(n_cliques)]
    if truncation is None:
        truncation = min(1e-6, 1.0 / (10 * max(max(Ns), 1)))
    vals = np.zeros((n_replicates, len(Ns)))
    bounds = np.zeros((n_replicates, len(Ns)))
    tail = _tail_first_moment(truncation, hp)
    for r in range(n_replicates):
        atoms = sample_atoms(hp, truncation, rng).weights
        wsum = atoms.sum()
        for k, N in enumerate(Ns):
            vals[r, k] = _pair_sum(atoms, N) if N > 0 else 0.0
            # pairs with at least one atom below eps: 1-(1-wv)^N <= N w v
            bounds[r, k] = N * (wsum * tail + 0.5 * tail**2) if N > 0 else 0.0
    out = []
    for k, N in enumerate(Ns):
        mean = vals[:, k].mean()
        se = vals[:, k].std(ddof=1) / math.sqrt(n_replicates) if n_replicates > 1 else math.nan
        bound = bounds[:, k].mean()
        if mean > 0 and bound > 0.01 * mean:
            warnings.warn(
                f"truncation at {truncation:g} may drop up to {bound:.3g} edges "
                f"({100 * bound / mean:.1f}% of the estimate) at N={N}",
                RuntimeWarning,
                stacklevel=2,
            )
        out.append(EdgeCountEstimate(mean, se, bound, n_replicates, vals[:, k].copy()))
    return out[0] if scalar else out
