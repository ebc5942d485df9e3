"""Posterior inference of latent clique covers.

The sampler state is an unordered collection of cliques ("rows") over the
vertices of an observed graph.  Moves:

* split/merge (reversible jump) anchored at a uniformly chosen edge,
* Gibbs updates of single memberships,
* Metropolis–Hastings on the number of empty cliques,
* Metropolis–Hastings on the noisy-OR edge probability,
* hyperparameter updates (MH step or gradient refit).

Two observation models are supported.  ``"full"``: the graph is exactly the
union of the cliques.  ``"partial"``: each clique ``n`` switches each of its
internal edges on with probability ``pi_n`` (noisy-OR).
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .graph import Graph, NoisyOrParams
from .hyper import fit_hyperparams, mh_hyper_step
from .ibp import CliqueMatrix, Hyperparams, log_joint_from_counts, new_vertex_rate
from .validation import ValidationError, check_graph, check_random_state

__all__ = [
    "McmcConfig",
    "McmcState",
    "McmcSample",
    "McmcResult",
    "InvariantViolation",
    "MOVES",
    "init_cover",
    "full_log_likelihood",
    "partial_log_likelihood",
    "propose_split_merge",
    "gibbs_sweep",
    "resample_empty_cliques",
    "empty_move_log_ratio",
    "gibbs_conditional",
    "resample_pi",
    "resample_hyperparams",
    "run_mcmc",
    "save_checkpoint",
    "load_checkpoint",
    "write_trace_csv",
]

MOVES = ("split_merge", "gibbs", "empty", "pi", "hyper")

NEG_INF = -math.inf


class InvariantViolation(AssertionError):
    """The sampler state stopped being consistent with the observed graph."""


def _pair(u, v):
    return (u, v) if u < v else (v, u)


def _log(x):
    return math.log(x) if x > 0 else NEG_INF


# ---------------------------------------------------------------------------
# Initialisation and likelihoods


def init_cover(G, strategy="two-cliques") -> CliqueMatrix:
    """A clique cover that reproduces ``G`` exactly.

    ``"two-cliques"`` uses one clique per edge.  ``"greedy-cover"`` grows each
    clique from an uncovered edge by absorbing common neighbours, preferring
    those that cover the most uncovered edges.  Isolated vertices get a
    singleton clique in both cases so that every vertex is in some clique.
    """
    G = check_graph(G)
    if G.vertex_count == 0:
        raise ValidationError("cannot build a cover of an empty graph")
    adj = G.adjacency
    rows = []
    if strategy == "two-cliques":
        rows = [list(e) for e in G.edges]
    elif strategy == "greedy-cover":
        uncovered = G.edge_set()
        for u, v in G.edges:
            if (u, v) not in uncovered:
                continue
            clique = [u, v]
            cand = set(adj[u] & adj[v])
            while cand:
                def gain(w):
                    return sum(_pair(w, x) in uncovered for x in clique)

                best = max(sorted(cand), key=gain)
                if gain(best) == 0:
                    break
                clique.append(best)
                cand &= adj[best]
                cand.discard(best)
            for p in combinations(sorted(clique), 2):
                uncovered.discard(p)
            rows.append(sorted(clique))
    else:
        raise ValidationError(f"unknown strategy {strategy!r}")
    rows.extend([v] for v in range(G.vertex_count) if not adj[v])
    return CliqueMatrix(rows, G.vertex_count)


def full_log_likelihood(Z: CliqueMatrix, G) -> float:
    """0 when the cliques of ``Z`` reproduce ``G`` exactly, otherwise -inf."""
    from .graph import cover_to_graph

    G = check_graph(G)
    if Z.vertex_count != G.vertex_count:
        return NEG_INF
    return 0.0 if cover_to_graph(Z) == G else NEG_INF


def partial_log_likelihood(Z: CliqueMatrix, G, p: NoisyOrParams) -> float:
    """Noisy-OR log likelihood of ``G`` given latent cliques ``Z``.

    Sums, over vertex pairs, ``log(1 - prod(1 - pi_n))`` for edges and
    ``sum log(1 - pi_n)`` for non-edges, the product/sum running over the
    cliques containing both endpoints.
    """
    G = check_graph(G)
    p.check_against(Z)
    if Z.vertex_count != G.vertex_count:
        raise ValidationError("Z and G have different vertex counts")
    surv = {}
    for n, r in enumerate(Z.rows):
        pi = p.for_clique(n)
        lq = math.log1p(-pi) if pi < 1 else NEG_INF
        for pr in combinations(r, 2):
            surv[pr] = surv.get(pr, 0.0) + lq
    total = 0.0
    for u, v in G.edges:
        if (u, v) not in surv:
            return NEG_INF
    for (u, v), s in surv.items():
        if G.has_edge(u, v):
            total += _log(-math.expm1(s))
        else:
            total += s
    return total


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class McmcConfig:
    """Sampler settings.  ``moves`` maps move names in :data:`MOVES` to probabilities."""

    iterations: int = 1000
    thin: int = 1
    burn_in: int = 0
    moves: dict = None
    seed: int = 0
    mode: str = "full"
    pi_mode: str = "shared"
    hyperparams: Hyperparams = None
    pi: float = 0.5
    hyper_method: str = "fixed"
    hyper_every: int = 0
    pi_step: float = 0.5
    hyper_step: float = 0.1
    init: str = "two-cliques"
    debug: bool = False

    def __post_init__(self):
        if self.mode not in ("full", "partial"):
            raise ValidationError(f"mode must be 'full' or 'partial', got {self.mode!r}")
        if self.pi_mode not in ("shared", "per-clique"):
            raise ValidationError(f"pi_mode must be 'shared' or 'per-clique', got {self.pi_mode!r}")
        if self.hyper_method not in ("fixed", "gradient", "mh"):
            raise ValidationError(f"unknown hyper_method {self.hyper_method!r}")
        if self.hyperparams is None:
            self.hyperparams = Hyperparams(2.0, 0.5, 1.0, 10.0)
        elif isinstance(self.hyperparams, dict):
            self.hyperparams = Hyperparams.from_dict(self.hyperparams)
        if self.moves is None:
            if self.mode == "full":
                self.moves = {"split_merge": 1.0}
            else:
                self.moves = {"split_merge": 0.4, "gibbs": 0.2, "empty": 0.2, "pi": 0.2}
            if self.hyper_method == "mh":
                scale = 0.9
                self.moves = {k: v * scale for k, v in self.moves.items()}
                self.moves["hyper"] = 0.1
        unknown = set(self.moves) - set(MOVES)
        if unknown:
            raise ValidationError(f"unknown moves {sorted(unknown)}")
        if any(v < 0 for v in self.moves.values()):
            raise ValidationError("move probabilities must be non-negative")
        if abs(sum(self.moves.values()) - 1.0) > 1e-9:
            raise ValidationError(f"move probabilities sum to {sum(self.moves.values())}, not 1")
        if self.mode == "full" and self.moves.get("pi", 0) > 0:
            raise ValidationError("the 'pi' move needs mode='partial'")
        if self.iterations < 0 or self.thin < 1 or self.burn_in < 0:
            raise ValidationError("iterations/burn_in must be >= 0 and thin >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hyperparams"] = self.hyperparams.to_dict()
        return d


# ---------------------------------------------------------------------------
# State


class McmcState:
    """Mutable sampler state with incrementally maintained caches.

    Rows carry stable integer ids; ``rows[rid]`` is the member set and
    ``vertex_rows[v]`` the sorted ids of rows containing ``v``.
    """

    def __init__(self, graph, cover: CliqueMatrix, hp: Hyperparams, mode="full", pi=0.5,
                 pi_mode="shared", rng=None, row_ids=None):
        G = check_graph(graph)
        if cover.vertex_count != G.vertex_count:
            raise ValidationError("cover and graph have different vertex counts")
        if cover.vertex_count and cover.column_counts.min() == 0:
            raise ValidationError("every vertex must belong to at least one clique")
        if mode not in ("full", "partial"):
            raise ValidationError(f"unknown mode {mode!r}")
        self.graph = G
        self.adj = G.adjacency
        self.edges = G.edges
        self.mode = mode
        self.pi_mode = pi_mode
        self.hp = hp
        self.rng = check_random_state(rng)
        self.iteration = 0
        self.stats = {m: [0, 0] for m in MOVES}  # move -> [accepted, proposed]

        ids = list(range(cover.num_cliques)) if row_ids is None else [int(i) for i in row_ids]
        if len(ids) != cover.num_cliques or len(set(ids)) != len(ids):
            raise ValidationError("row_ids must be distinct, one per clique")
        self.rows = {rid: set(r) for rid, r in zip(ids, cover.rows)}
        self.next_id = max(ids, default=-1) + 1
        self.vertex_rows = [[] for _ in range(G.vertex_count)]
        for rid in sorted(self.rows):
            for v in self.rows[rid]:
                self.vertex_rows[v].append(rid)
        self.empty = {rid for rid, r in self.rows.items() if not r}
        self.hist = Counter(len(x) for x in self.vertex_rows)

        if pi_mode == "shared":
            self.pi = float(pi)
        else:
            if isinstance(pi, dict):
                self.pi = {int(k): float(v) for k, v in pi.items()}
            elif np.ndim(pi) == 0:
                self.pi = {rid: float(pi) for rid in self.rows}
            else:
                self.pi = dict(zip(ids, (float(x) for x in pi)))
            if set(self.pi) != set(self.rows):
                raise ValidationError("need one clique probability per clique")
        self._set_pi_cache()

        self.cov = {}
        for r in self.rows.values():
            for p in combinations(sorted(r), 2):
                self.cov[p] = self.cov.get(p, 0) + 1
        self.n_bad = self._count_bad()
        self._rate_cum = [0.0]
        self.log_prior = self.compute_log_prior()
        self.log_lik = self.compute_log_lik()

    # -- basic quantities ---------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def vertex_count(self) -> int:
        return len(self.vertex_rows)

    def count(self, v) -> int:
        return len(self.vertex_rows[v])

    def _set_pi_cache(self):
        if self.pi_mode == "shared":
            self._lq = math.log1p(-self.pi) if self.pi < 1 else NEG_INF
        else:
            self._lq = {rid: (math.log1p(-p) if p < 1 else NEG_INF) for rid, p in self.pi.items()}

    def _count_bad(self):
        bad = 0
        for (u, v) in self.cov:
            if v not in self.adj[u]:
                bad += 1
        for u, v in self.edges:
            if (u, v) not in self.cov:
                bad += 1
        return bad

    def _rate_sum(self, N):
        cum = self._rate_cum
        while len(cum) <= N:
            cum.append(cum[-1] + new_vertex_rate(len(cum), self.hp))
        return cum[N]

    def _lj(self, N, hist):
        return log_joint_from_counts(N, hist, self.hp, include_n_prior=True, rate_sum=self._rate_sum(N))

    def compute_log_prior(self) -> float:
        return self._lj(self.n_rows, self.hist)

    def set_hyperparams(self, hp: Hyperparams):
        self.hp = hp
        self._rate_cum = [0.0]
        self.log_prior = self.compute_log_prior()

    def set_pi(self, pi):
        self.pi = pi
        self._set_pi_cache()
        self.log_lik = self.compute_log_lik()

    # -- likelihood ------------------------------------------------------------

    def _survival(self, u, v, exclude=()):
        """Sum of log(1 - pi_n) over rows containing both u and v (per-clique mode)."""
        a, b = self.vertex_rows[u], self.vertex_rows[v]
        if len(a) > len(b):
            a, b = b, a
        sb = set(b)
        return sum(self._lq[r] for r in a if r in sb and r not in exclude)

    def _pair_ll(self, edge, m, s=None):
        """Log likelihood of one vertex pair covered ``m`` times (log-survival ``s``)."""
        if self.mode == "full":
            return 0.0 if (m > 0) == edge else NEG_INF
        if m == 0:
            return NEG_INF if edge else 0.0
        if s is None:
            s = m * self._lq
        if edge:
            return _log(-math.expm1(s))
        return s

    def compute_log_lik(self) -> float:
        if self.mode == "full":
            return 0.0 if self._count_bad() == 0 else NEG_INF
        total = 0.0
        for u, v in self.edges:
            if (u, v) not in self.cov:
                return NEG_INF
        shared = self.pi_mode == "shared"
        for (u, v), m in self.cov.items():
            s = None if shared else self._survival(u, v)
            total += self._pair_ll(v in self.adj[u], m, s)
        return total

    # -- mutation primitives --------------------------------------------------

    def _cov_add(self, p, d):
        old = self.cov.get(p, 0)
        new = old + d
        if new < 0:
            raise InvariantViolation(f"negative coverage for pair {p}")
        edge = p[1] in self.adj[p[0]]
        self.n_bad += ((new > 0) != edge) - ((old > 0) != edge)
        if new:
            self.cov[p] = new
        else:
            del self.cov[p]

    def _hist_move(self, hist, old, new):
        if old:
            hist[old] -= 1
            if not hist[old]:
                del hist[old]
        if new:
            hist[new] += 1

    def _add_member(self, rid, v):
        row = self.rows[rid]
        for u in row:
            self._cov_add(_pair(u, v), 1)
        if not row:
            self.empty.discard(rid)
        row.add(v)
        vr = self.vertex_rows[v]
        self._hist_move(self.hist, len(vr), len(vr) + 1)
        bisect.insort(vr, rid)

    def _remove_member(self, rid, v):
        row = self.rows[rid]
        row.discard(v)
        for u in row:
            self._cov_add(_pair(u, v), -1)
        if not row:
            self.empty.add(rid)
        vr = self.vertex_rows[v]
        self._hist_move(self.hist, len(vr), len(vr) - 1)
        vr.remove(rid)

    def _new_row(self, members=(), pi=None):
        rid = self.next_id
        self.next_id += 1
        self.rows[rid] = set()
        self.empty.add(rid)
        if self.pi_mode == "per-clique":
            self.pi[rid] = pi
            self._lq[rid] = math.log1p(-pi) if pi < 1 else NEG_INF
        for v in sorted(members):
            self._add_member(rid, v)
        return rid

    def _drop_row(self, rid):
        for v in sorted(self.rows[rid]):
            self._remove_member(rid, v)
        del self.rows[rid]
        self.empty.discard(rid)
        if self.pi_mode == "per-clique":
            del self.pi[rid]
            del self._lq[rid]

    # -- export ------------------------------------------------------------------

    def row_ids(self):
        return sorted(self.rows)

    def cover(self) -> CliqueMatrix:
        """Current cliques in row-id order (empty rows included)."""
        return CliqueMatrix([self.rows[r] for r in self.row_ids()], self.vertex_count)

    def pi_value(self):
        if self.pi_mode == "shared":
            return self.pi
        return [self.pi[r] for r in self.row_ids()]

    def noisy_or(self) -> NoisyOrParams:
        if self.pi_mode == "shared":
            return NoisyOrParams(self.pi, "shared")
        return NoisyOrParams(tuple(self.pi_value()), "per-clique")

    def key(self):
        """Hashable description of the cover as a multiset of cliques."""
        return tuple(sorted(tuple(sorted(r)) for r in self.rows.values()))

    @property
    def log_joint(self) -> float:
        return self.log_prior

    def check(self, tol=1e-8):
        """Verify structural invariants and cached values; raises :class:`InvariantViolation`."""
        if any(c == 0 for c in map(len, self.vertex_rows)):
            raise InvariantViolation("a vertex belongs to no clique")
        if self.mode == "full" and self.n_bad:
            raise InvariantViolation(f"cover differs from the graph on {self.n_bad} pairs")
        if self.mode == "partial":
            for u, v in self.edges:
                if (u, v) not in self.cov:
                    raise InvariantViolation(f"observed edge ({u}, {v}) is not covered")
        cov = Counter()
        for r in self.rows.values():
            cov.update(combinations(sorted(r), 2))
        if dict(cov) != self.cov:
            raise InvariantViolation("pair coverage cache is stale")
        if Counter(len(x) for x in self.vertex_rows) != +self.hist:
            raise InvariantViolation("count histogram cache is stale")
        lp = self.compute_log_prior()
        if not math.isclose(lp, self.log_prior, rel_tol=0, abs_tol=tol * max(1.0, abs(lp))):
            raise InvariantViolation(f"log prior cache {self.log_prior} != {lp}")
        ll = self.compute_log_lik()
        if ll == NEG_INF or self.log_lik == NEG_INF:
            if ll != self.log_lik:
                raise InvariantViolation(f"log likelihood cache {self.log_lik} != {ll}")
        elif not math.isclose(ll, self.log_lik, rel_tol=0, abs_tol=tol * max(1.0, abs(ll))):
            raise InvariantViolation(f"log likelihood cache {self.log_lik} != {ll}")

    # -- checkpointing -------------------------------------------------------------

    def to_checkpoint(self) -> dict:
        return {
            "cover": self.cover().to_json(),
            "row_ids": self.row_ids(),
            "next_row_id": self.next_id,
            "pi": self.pi_value(),
            "pi_mode": self.pi_mode,
            "mode": self.mode,
            "hyperparams": self.hp.to_dict(),
            "iteration": self.iteration,
            "move_stats": self.stats,
            "log_prior": self.log_prior,
            "log_lik": self.log_lik,
            "rng_state": self.rng.bit_generator.state,
        }

    @classmethod
    def from_checkpoint(cls, data: dict, graph) -> "McmcState":
        bitgen = getattr(np.random, data["rng_state"]["bit_generator"])()
        bitgen.state = data["rng_state"]
        rng = np.random.Generator(bitgen)
        cover = CliqueMatrix.from_json(data["cover"])
        st = cls(graph, cover, Hyperparams.from_dict(data["hyperparams"]), data["mode"],
                 data["pi"], data["pi_mode"], rng, data["row_ids"])
        st.next_id = int(data["next_row_id"])
        st.iteration = int(data["iteration"])
        st.stats = {m: list(v) for m, v in data.get("move_stats", st.stats).items()}
        # restore the running sums so a resumed chain is bit-identical
        for key, attr in (("log_prior", "log_prior"), ("log_lik", "log_lik")):
            if key in data:
                saved, fresh = float(data[key]), getattr(st, attr)
                if not math.isclose(saved, fresh, rel_tol=1e-8, abs_tol=1e-8):
                    raise ValidationError(f"checkpoint {key} {saved} disagrees with recomputed {fresh}")
                setattr(st, attr, saved)
        return st


def save_checkpoint(state: McmcState, path):
    Path(path).write_text(json.dumps(state.to_checkpoint()) + "\n")


def load_checkpoint(path, graph) -> McmcState:
    return McmcState.from_checkpoint(json.loads(Path(path).read_text()), graph)


# ---------------------------------------------------------------------------
# Split / merge


def _split_options(k, i, j, constrained_only_a, constrained_only_b):
    """Allowed (in_a, in_b) settings for member ``k`` of a clique being split."""
    if k == i:
        opts = [(1, 0), (1, 1)]
    elif k == j:
        opts = [(0, 1), (1, 1)]
    else:
        opts = [(1, 0), (0, 1), (1, 1)]
    if constrained_only_b:
        opts = [o for o in opts if o != (1, 0)]
    if constrained_only_a:
        opts = [o for o in opts if o != (0, 1)]
    return opts


def _assignment_log_prob(members, i, j, settings, sole_cover, full, choose=None):
    """Walk the members in order, scoring (and optionally drawing) each setting.

    ``sole_cover(k, k2)`` says whether pair (k, k2) is covered by the parent
    clique only; in full mode such pairs must end up in a common child.
    ``choose(opts)`` draws a setting; when None the given ``settings`` are
    scored instead.  Returns ``(log_prob, settings)``.
    """
    logq = 0.0
    only_a, only_b = [], []
    out = {}
    for k in members:
        ca = cb = False
        if full:
            ca = any(sole_cover(k, x) for x in only_a)
            cb = any(sole_cover(k, x) for x in only_b)
        opts = _split_options(k, i, j, ca, cb)
        if choose is None:
            s = settings[k]
            if s not in opts:
                return NEG_INF, None
        else:
            s = choose(opts)
        logq -= math.log(len(opts))
        out[k] = s
        if s == (1, 0):
            only_a.append(k)
        elif s == (0, 1):
            only_b.append(k)
    return logq, out


def _pair_delta_ll(state, pairs_change):
    """Log-likelihood change for pairs whose covering rows change.

    ``pairs_change`` yields ``(pair, dm, s_new)`` where ``s_new`` is the new
    log-survival (per-clique mode only).
    """
    if state.mode == "full":
        return 0.0
    shared = state.pi_mode == "shared"
    d = 0.0
    for (u, v), dm, s_new in pairs_change:
        m = state.cov.get((u, v), 0)
        edge = v in state.adj[u]
        if shared:
            old = state._pair_ll(edge, m)
            new = state._pair_ll(edge, m + dm)
        else:
            old = state._pair_ll(edge, m, state._survival(u, v))
            new = state._pair_ll(edge, m + dm, s_new)
        if new == NEG_INF:
            return NEG_INF
        d += new - old
    return d


def propose_split_merge(state: McmcState, rng=None) -> bool:
    """One reversible-jump split/merge proposal; returns whether it was accepted.

    An edge ``(i, j)`` (``i < j``) is drawn uniformly, then a clique containing
    ``i`` and one containing ``j``.  If they coincide the clique is split into
    a child holding ``i`` and a child holding ``j``; every member gets one of
    the settings (first child only, second only, both), with ``i`` never only
    in the second child and ``j`` never only in the first.  In full mode a
    setting is ruled out when it would separate two members whose edge no
    other clique covers.  Otherwise the two cliques are merged.

    Acceptance uses the probability of the specific proposal path; every
    split path has exactly one reverse merge path and vice versa.
    """
    rng = state.rng if rng is None else rng
    st = state
    st.stats["split_merge"][1] += 1
    E = st.edges
    if not E:
        return False
    i, j = E[int(rng.random() * len(E))]
    vi, vj = st.vertex_rows[i], st.vertex_rows[j]
    di, dj = len(vi), len(vj)
    ri = vi[int(rng.random() * di)]
    rj = vj[int(rng.random() * dj)]
    N = st.n_rows
    full = st.mode == "full"
    per_clique = st.pi_mode == "per-clique"

    if ri == rj:
        C = st.rows[ri]
        members = sorted(C)
        cov = st.cov

        def sole(k, k2):
            return cov[_pair(k, k2)] == 1

        def choose(opts):
            return opts[int(rng.random() * len(opts))]

        logq, settings = _assignment_log_prob(members, i, j, None, sole, full, choose)
        A = [k for k in members if settings[k][0]]
        B = [k for k in members if settings[k][1]]
        both = [k for k in members if settings[k] == (1, 1)]
        pi_b = float(rng.random()) if per_clique else None

        # likelihood change over pairs inside the parent clique
        def changes():
            sa, sb = set(A), set(B)
            lq_c = st._lq[ri] if per_clique else None
            lq_b = (math.log1p(-pi_b) if pi_b < 1 else NEG_INF) if per_clique else None
            for k, k2 in combinations(members, 2):
                ina = k in sa and k2 in sa
                inb = k in sb and k2 in sb
                dm = ina + inb - 1
                if dm == 0 and not per_clique:
                    continue
                s_new = None
                if per_clique:
                    s_new = st._survival(k, k2, exclude=(ri,))
                    if ina:
                        s_new += lq_c
                    if inb:
                        s_new += lq_b
                yield (k, k2), dm, s_new

        dll = _pair_delta_ll(st, changes())
        if dll == NEG_INF:
            return False
        hist = st.hist.copy()
        for k in both:
            c = len(st.vertex_rows[k])
            st._hist_move(hist, c, c + 1)
        new_prior = st._lj(N + 1, hist)
        di2 = di + (i in B)
        dj2 = dj + (j in A)
        log_a = (new_prior - st.log_prior) + dll + math.log(N + 1) + math.log(di * dj) - logq - math.log(di2 * dj2)
        if log_a < 0 and math.log(rng.random()) >= log_a:
            return False
        # apply: A keeps the parent's id (and pi), B is a new row
        for k in members:
            if not settings[k][0]:
                st._remove_member(ri, k)
        st._new_row(B, pi_b)
        st.log_prior = new_prior
        st.log_lik += dll
        st.stats["split_merge"][0] += 1
        return True

    # merge
    A, B = st.rows[ri], st.rows[rj]
    union = sorted(A | B)
    adj = st.adj
    if full:
        for a in A:
            if a in B:
                continue
            na = adj[a]
            for b in B:
                if b not in A and b not in na:
                    return False
    settings = {k: (int(k in A), int(k in B)) for k in union}
    cov = st.cov

    def sole_after(k, k2):
        # pair covered only by the merged clique afterwards
        m = cov.get(_pair(k, k2), 0)
        return m - (k in A and k2 in A) - (k in B and k2 in B) == 0

    logq_rev, _ = _assignment_log_prob(union, i, j, settings, sole_after, full)
    if logq_rev == NEG_INF:
        return False

    def changes():
        lq_a = st._lq[ri] if per_clique else None
        for k, k2 in combinations(union, 2):
            ina = k in A and k2 in A
            inb = k in B and k2 in B
            dm = 1 - ina - inb
            if dm == 0 and not per_clique:
                continue
            s_new = None
            if per_clique:
                s_new = st._survival(k, k2, exclude=(ri, rj)) + lq_a
            yield (k, k2), dm, s_new

    dll = _pair_delta_ll(st, changes())
    if dll == NEG_INF:
        return False
    hist = st.hist.copy()
    for k in A & B:
        c = len(st.vertex_rows[k])
        st._hist_move(hist, c, c - 1)
    new_prior = st._lj(N - 1, hist)
    di2 = di - (i in B)
    dj2 = dj - (j in A)
    log_a = (new_prior - st.log_prior) + dll + math.log(di * dj) + logq_rev - math.log(di2 * dj2) - math.log(N)
    if log_a < 0 and math.log(rng.random()) >= log_a:
        return False
    for k in sorted(B - A):
        st._add_member(ri, k)
    st._drop_row(rj)
    st.log_prior = new_prior
    st.log_lik += dll
    st.stats["split_merge"][0] += 1
    return True


# ---------------------------------------------------------------------------
# Gibbs, empty cliques, pi, hyperparameters


def gibbs_conditional(state: McmcState, rid, v):
    """Probability that ``v`` belongs to row ``rid`` given everything else, or
    None when ``v`` appears in no other row (the entry is then left alone)."""
    st = state
    row = st.rows[rid]
    z = v in row
    m_not = len(st.vertex_rows[v]) - z
    if m_not == 0:
        return None
    N = st.n_rows
    s, c = st.hp.sigma, st.hp.c
    log_odds = math.log(m_not - s) - math.log(N + c - 1 - m_not + s)
    per_clique = st.pi_mode == "per-clique"
    adj_v = st.adj[v]
    lq_r = st._lq[rid] if per_clique else None
    ll1 = ll0 = 0.0
    for u in row:
        if u == v:
            continue
        p = _pair(u, v)
        m0 = st.cov.get(p, 0) - z
        edge = u in adj_v
        if per_clique:
            s0 = st._survival(u, v, exclude=(rid,))
            ll0 += st._pair_ll(edge, m0, s0)
            ll1 += st._pair_ll(edge, m0 + 1, s0 + lq_r)
        else:
            ll0 += st._pair_ll(edge, m0)
            ll1 += st._pair_ll(edge, m0 + 1)
    if ll1 == NEG_INF and ll0 == NEG_INF:
        raise InvariantViolation(f"no valid value for entry ({rid}, {v})")
    if ll1 == NEG_INF:
        return 0.0
    if ll0 == NEG_INF:
        return 1.0
    x = log_odds + ll1 - ll0
    return 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0


def gibbs_sweep(state: McmcState, rng=None) -> int:
    """Resample every membership whose vertex appears in some other row.

    Returns the number of entries that changed.
    """
    rng = state.rng if rng is None else rng
    st = state
    changed = 0
    for rid in st.row_ids():
        for v in range(st.vertex_count):
            p1 = gibbs_conditional(st, rid, v)
            if p1 is None:
                continue
            st.stats["gibbs"][1] += 1
            z = v in st.rows[rid]
            new = rng.random() < p1
            if new == z:
                continue
            if new:
                dll = _entry_delta_ll(st, rid, v, +1)
                st._add_member(rid, v)
            else:
                dll = _entry_delta_ll(st, rid, v, -1)
                st._remove_member(rid, v)
            st.log_lik += dll
            st.log_prior = st.compute_log_prior()
            st.stats["gibbs"][0] += 1
            changed += 1
    return changed


def _entry_delta_ll(st, rid, v, sign):
    if st.mode == "full":
        return 0.0
    per_clique = st.pi_mode == "per-clique"
    lq_r = st._lq[rid] if per_clique else None
    d = 0.0
    for u in st.rows[rid]:
        if u == v:
            continue
        p = _pair(u, v)
        m = st.cov.get(p, 0)
        edge = u in st.adj[v]
        if per_clique:
            s = st._survival(u, v)
            s_new = s + lq_r if sign > 0 else st._survival(u, v, exclude=(rid,))
            d += st._pair_ll(edge, m + sign, s_new) - st._pair_ll(edge, m, s)
        else:
            d += st._pair_ll(edge, m + sign) - st._pair_ll(edge, m)
    return d


def empty_move_log_ratio(state: McmcState, up: bool):
    """Log acceptance ratio of adding (``up``) or removing one empty clique.

    Returns ``(log_ratio, new_log_prior)``.  Besides the prior ratio this
    carries the proposal ratio of the reflecting walk and the count of
    distinct arrangements of the empty rows among all rows.
    """
    st = state
    e = len(st.empty)
    N = st.n_rows
    if up:
        # q(e -> e+1) = 1 at e = 0, else 1/2; the reverse is always 1/2
        log_q = math.log(0.5) - (0.0 if e == 0 else math.log(0.5))
        new_prior = st._lj(N + 1, st.hist)
        return new_prior - st.log_prior + math.log(N + 1) - math.log(e + 1) + log_q, new_prior
    if e == 0:
        return NEG_INF, st.log_prior
    log_q = (0.0 if e == 1 else math.log(0.5)) - math.log(0.5)
    new_prior = st._lj(N - 1, st.hist)
    return new_prior - st.log_prior + math.log(e) - math.log(N) + log_q, new_prior


def resample_empty_cliques(state: McmcState, rng=None) -> bool:
    """Random-walk MH (+1/-1, reflecting at zero) on the number of empty cliques."""
    rng = state.rng if rng is None else rng
    st = state
    st.stats["empty"][1] += 1
    up = not st.empty or rng.random() < 0.5
    log_a, new_prior = empty_move_log_ratio(st, up)
    if log_a < 0 and math.log(rng.random()) >= log_a:
        return False
    if up:
        st._new_row((), float(rng.random()) if st.pi_mode == "per-clique" else None)
    else:
        st._drop_row(max(st.empty))
    st.log_prior = new_prior
    st.stats["empty"][0] += 1
    return True


def _shared_pi_loglik(st, pi):
    lq = math.log1p(-pi) if pi < 1 else NEG_INF
    total = 0.0
    for (u, v), m in st.cov.items():
        if v in st.adj[u]:
            total += _log(-math.expm1(m * lq))
        else:
            total += m * lq
    return total


def _logit(p):
    return math.log(p) - math.log1p(-p)


def _expit(x):
    return 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0


def resample_pi(state: McmcState, rng=None, step=0.5) -> bool:
    """Random-walk MH on logit(pi) under a uniform prior.

    In per-clique mode every clique's probability gets its own update and the
    return value says whether any was accepted.
    """
    rng = state.rng if rng is None else rng
    st = state
    if st.mode != "partial":
        raise ValidationError("pi is only sampled in partial mode")
    if st.pi_mode == "shared":
        st.stats["pi"][1] += 1
        x = _logit(min(max(st.pi, 1e-300), 1 - 1e-16))
        pi_new = _expit(x + step * rng.standard_normal())
        if not 0 < pi_new < 1:
            return False
        new_ll = _shared_pi_loglik(st, pi_new)
        old_ll = st.log_lik
        log_a = new_ll - old_ll + math.log(pi_new) + math.log1p(-pi_new) - math.log(st.pi) - math.log1p(-st.pi)
        if log_a < 0 and math.log(rng.random()) >= log_a:
            return False
        st.pi = pi_new
        st._set_pi_cache()
        st.log_lik = new_ll
        st.stats["pi"][0] += 1
        return True
    any_acc = False
    for rid in st.row_ids():
        st.stats["pi"][1] += 1
        p_old = st.pi[rid]
        x = _logit(min(max(p_old, 1e-300), 1 - 1e-16))
        p_new = _expit(x + step * rng.standard_normal())
        if not 0 < p_new < 1:
            continue
        lq_new = math.log1p(-p_new)
        members = sorted(st.rows[rid])
        d = 0.0
        for u, v in combinations(members, 2):
            m = st.cov[(u, v)]
            edge = v in st.adj[u]
            s = st._survival(u, v)
            s_new = st._survival(u, v, exclude=(rid,)) + lq_new
            d += st._pair_ll(edge, m, s_new) - st._pair_ll(edge, m, s)
        log_a = d + math.log(p_new) + math.log1p(-p_new) - math.log(p_old) - math.log1p(-p_old)
        if log_a < 0 and math.log(rng.random()) >= log_a:
            continue
        st.pi[rid] = p_new
        st._lq[rid] = lq_new
        st.log_lik += d
        st.stats["pi"][0] += 1
        any_acc = True
    return any_acc


def resample_hyperparams(state: McmcState, method="mh", rng=None, step=0.1) -> bool:
    """Update the hyperparameters given the current cover.

    ``"mh"``: one random-walk MH step under the weakly informative prior.
    ``"gradient"``: replace them with the maximum-likelihood estimate.
    """
    rng = state.rng if rng is None else rng
    st = state
    st.stats["hyper"][1] += 1
    N = st.n_rows
    if method == "mh":
        hp, _, acc = mh_hyper_step(N, st.hist, st.hp, rng, step)
        if acc:
            st.set_hyperparams(hp)
            st.stats["hyper"][0] += 1
        return acc
    if method == "gradient":
        counts = np.array([len(x) for x in st.vertex_rows])
        fit = fit_hyperparams((N, counts), "gradient", init=st.hp)
        st.set_hyperparams(fit.hyperparams)
        st.stats["hyper"][0] += 1
        return True
    raise ValidationError(f"unknown hyperparameter method {method!r}")


# ---------------------------------------------------------------------------
# Driver


@dataclass
class McmcSample:
    iteration: int
    cover: CliqueMatrix
    pi: object
    hyperparams: Hyperparams
    log_joint: float
    log_likelihood: float


@dataclass
class McmcResult:
    samples: list
    trace: list
    acceptance: dict
    state: McmcState = field(repr=False, default=None)

    def mode_cover(self) -> CliqueMatrix:
        """Most frequently visited cover among the samples (ties: first seen)."""
        counts = Counter()
        first = {}
        for s in self.samples:
            k = tuple(sorted(tuple(r) for r in s.cover.rows if r))
            counts[k] += 1
            first.setdefault(k, s.cover)
        best = max(counts, key=lambda k: (counts[k], -list(first).index(k)))
        return first[best]


def _acceptance(stats):
    return {m: (a / p if p else math.nan) for m, (a, p) in stats.items()}


def make_state(G, config: McmcConfig, rng=None) -> McmcState:
    rng = check_random_state(config.seed if rng is None else rng)
    G = check_graph(G)
    cover = init_cover(G, config.init)
    return McmcState(G, cover, config.hyperparams, config.mode, config.pi, config.pi_mode, rng)


def mcmc_step(state: McmcState, config: McmcConfig, names, cum):
    """Draw a move type from the configured mix and apply it."""
    u = state.rng.random()
    k = bisect.bisect_right(cum, u)
    move = names[min(k, len(names) - 1)]
    if move == "split_merge":
        propose_split_merge(state)
    elif move == "gibbs":
        gibbs_sweep(state)
    elif move == "empty":
        resample_empty_cliques(state)
    elif move == "pi":
        resample_pi(state, step=config.pi_step)
    elif move == "hyper":
        if config.hyper_method != "fixed":
            resample_hyperparams(state, config.hyper_method, step=config.hyper_step)
    state.iteration += 1
    if config.hyper_every and config.hyper_method == "gradient" and state.iteration % config.hyper_every == 0:
        resample_hyperparams(state, "gradient")
    if config.debug:
        state.check()
    elif state.mode == "full" and state.n_bad:
        raise InvariantViolation(f"cover differs from the graph on {state.n_bad} pairs")
    return move


def run_mcmc(G, config: McmcConfig, rng=None, state: McmcState = None, callback=None) -> McmcResult:
    """Run the sampler for ``config.iterations`` moves.

    Starts from ``state`` when given (e.g. a loaded checkpoint), otherwise
    from ``config.init``.  Samples are kept after ``burn_in`` moves, every
    ``thin`` moves.  ``callback(state)`` runs after every move.  The output
    depends only on the graph, the config and the seed.
    """
    if state is None:
        state = make_state(G, config, rng)
    names = [m for m in MOVES if config.moves.get(m, 0) > 0]
    cum = list(np.cumsum([config.moves[m] for m in names]))
    samples, trace = [], []
    start = state.iteration
    for _ in range(config.iterations):
        mcmc_step(state, config, names, cum)
        if callback is not None:
            callback(state)
        it = state.iteration
        if it - start > config.burn_in and (it - start - config.burn_in) % config.thin == 0:
            samples.append(
                McmcSample(it, state.cover(), state.pi_value(), state.hp, state.log_prior, state.log_lik)
            )
            row = {
                "iteration": it,
                "log_joint": state.log_prior,
                "log_likelihood": state.log_lik,
                "n_cliques": state.n_rows,
                "n_vertices": state.vertex_count,
                "pi": state.pi if state.pi_mode == "shared" else float(np.mean(list(state.pi.values()) or [math.nan])),
            }
            for m, r in _acceptance(state.stats).items():
                row[f"accept_{m}"] = r
            trace.append(row)
    return McmcResult(samples, trace, _acceptance(state.stats), state)


TRACE_FIELDS = ["iteration", "log_joint", "log_likelihood", "n_cliques", "n_vertices", "pi"] + [
    f"accept_{m}" for m in MOVES
]


def write_trace_csv(trace, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_FIELDS)
        w.writeheader()
        for row in trace:
            w.writerow({k: row.get(k, "") for k in TRACE_FIELDS})
