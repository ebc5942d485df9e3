import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcc.ibp import (
    CliqueMatrix,
    Hyperparams,
    asymptotic_vertex_count,
    expected_clique_overlap,
    expected_count_exact,
    expected_edge_count_mc,
    expected_vertex_count,
    levy_density,
    levy_mass,
    log_joint,
    log_joint_from_counts,
    log_joint_grad,
    new_vertex_rate,
    new_vertex_rates,
    predictive_prob,
    sample_atoms,
    sample_clique_matrix,
    zipf_count_prediction,
)
from rcc.graph import cover_to_graph
from rcc.validation import ValidationError

HP = Hyperparams(2.0, 0.5, 1.0, 3.0)


# -- oracles -----------------------------------------------------------------


def sequential_logprob(M, hp):
    """Log probability that the sequential scheme emits ``M`` with columns in appearance order."""
    M = np.asarray(M)
    N, K = M.shape
    first = [int(np.flatnonzero(M[:, k])[0]) for k in range(K)]
    if first != sorted(first):
        return -math.inf
    lp = 0.0
    for n in range(N):
        for k in range(K):
            if first[k] < n:
                m = int(M[:n, k].sum())
                p = (m - hp.sigma) / (n + hp.c)
                lp += math.log(p if M[n, k] else 1 - p)
        k_new = sum(1 for f in first if f == n)
        lam = levy_integral(lambda u: (1 - u) ** n, hp)
        lp += k_new * math.log(lam) - lam - math.lgamma(k_new + 1)
    return lp


def levy_mp(u, hp, w=None):
    """Levy density at ``u``; ``w = 1 - u`` may be passed exactly."""
    a, s, c = hp.alpha, hp.sigma, hp.c
    w = 1 - u if w is None else w
    return a * mpmath.gamma(1 + c) / (mpmath.gamma(1 - s) * mpmath.gamma(c + s)) * u ** (-1 - s) * w ** (c + s - 1)


def levy_integral(g, hp):
    """Integral of ``g(u) * u`` against the Levy measure, with both endpoint
    singularities removed by power substitutions."""
    s, b = hp.sigma, hp.c + hp.sigma
    with mpmath.workdps(30):
        p, q = 1 / (1 - s), 1 / b
        left = mpmath.quad(lambda v: g(v**p) * v**p * levy_mp(v**p, hp) * p * v ** (p - 1), [0, mpmath.mpf(0.5) ** (1 / p)])

        def right_integrand(x):
            w = x**q
            u = 1 - w
            return g(u) * u * levy_mp(u, hp, w) * q * x ** (q - 1)

        right = mpmath.quad(right_integrand, [0, mpmath.mpf(0.5) ** (1 / q)])
        return float(left + right)


def labelled_logprob(M, hp):
    """Average of the sequential probability over all column relabellings."""
    M = np.asarray(M)
    K = M.shape[1]
    vals = [sequential_logprob(M[:, list(p)], hp) for p in itertools.permutations(range(K))]
    vals = [v for v in vals if v > -math.inf]
    top = max(vals)
    return top + math.log(sum(math.exp(v - top) for v in vals)) - math.lgamma(K + 1)


# -- hyperparameters and matrices ----------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(alpha=0, sigma=0.5, c=1),
        dict(alpha=1, sigma=0.0, c=1),
        dict(alpha=1, sigma=1.0, c=1),
        dict(alpha=1, sigma=0.5, c=-0.5),
        dict(alpha=1, sigma=0.5, c=1, tau=0),
    ],
)
def test_hyperparams_reject_out_of_domain(kw):
    with pytest.raises(ValidationError):
        Hyperparams(**kw)


def test_hyperparams_roundtrip():
    assert Hyperparams.from_dict(HP.to_dict()) == HP
    assert HP.replace(alpha=3.0).alpha == 3.0


def test_clique_matrix_views():
    Z = CliqueMatrix([[0, 1], [1, 2], []], 4)
    assert Z.num_cliques == 3 and Z.vertex_count == 4
    assert Z.column_counts.tolist() == [1, 2, 1, 0]
    assert Z.row_sizes.tolist() == [2, 2, 0]
    assert CliqueMatrix.from_dense(Z.to_dense()) == Z
    assert CliqueMatrix.from_json(Z.to_json()) == Z
    assert Z.prefix(1).rows == ((0, 1),)
    assert Z.to_sparse().toarray().tolist() == Z.to_dense().tolist()


def test_predictive_probability():
    assert predictive_prob(1, 2, HP) == pytest.approx(0.25)
    assert predictive_prob(3, 5, HP) == pytest.approx(2.5 / 5)
    with pytest.raises(ValidationError):
        predictive_prob(3, 3, HP)


def test_first_row_rate_is_alpha():
    assert new_vertex_rate(1, HP) == pytest.approx(HP.alpha)


@pytest.mark.parametrize("n", [1, 2, 5, 20])
@pytest.mark.parametrize("hp", [HP, Hyperparams(5.0, 0.2, 3.0), Hyperparams(1.5, 0.8, -0.3)])
def test_new_vertex_rate_matches_levy_integral(n, hp):
    # rate of new vertices in row n = integral of mu (1-mu)^(n-1) against the Levy measure
    oracle = levy_integral(lambda u: (1 - u) ** (n - 1), hp)
    assert new_vertex_rate(n, hp) == pytest.approx(oracle, rel=1e-9)


def test_rates_vector_matches_scalar():
    v = new_vertex_rates(7, HP)
    assert np.allclose(v, [new_vertex_rate(n, HP) for n in range(1, 8)])


# -- densities -----------------------------------------------------------------


@pytest.mark.parametrize(
    "rows",
    [
        [[0, 1, 2]],
        [[0, 1], [1, 2]],
        [[0], [0, 1], [1, 2, 3]],
        [[0, 1], [], [0, 2]],
        [[0, 1, 2], [0, 1, 2]],
    ],
)
def test_log_joint_matches_permutation_oracle(rows):
    Z = CliqueMatrix(rows)
    assert log_joint(Z, HP) == pytest.approx(labelled_logprob(Z.to_dense(), HP), abs=1e-9)


def test_log_joint_n_prior():
    Z = CliqueMatrix([[0, 1], [1]])
    diff = log_joint(Z, HP, include_n_prior=True) - log_joint(Z, HP)
    assert diff == pytest.approx(2 * math.log(3.0) - 3.0 - math.log(2))


def test_log_joint_rejects_empty_column():
    with pytest.raises(ValidationError):
        log_joint(CliqueMatrix([[0]], 2), HP)


def test_log_joint_from_counts_rejects_impossible_count():
    with pytest.raises(ValidationError):
        log_joint_from_counts(2, {3: 1}, HP)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_log_joint_invariant_under_row_and_column_permutations(data):
    N = data.draw(st.integers(1, 6))
    K = data.draw(st.integers(1, 6))
    A = np.array(data.draw(st.lists(st.lists(st.booleans(), min_size=K, max_size=K), min_size=N, max_size=N)))
    A[0, ~A.any(axis=0)] = True
    Z = CliqueMatrix.from_dense(A.astype(int))
    rp = data.draw(st.permutations(range(N)))
    cp = data.draw(st.permutations(range(K)))
    Zp = CliqueMatrix.from_dense(A[np.ix_(rp, cp)].astype(int))
    assert log_joint(Zp, HP, True) == pytest.approx(log_joint(Z, HP, True), abs=1e-10)


def mp_log_joint(N, counts, a, s, c, t):
    """Log joint in arbitrary precision: sequential rates summed term by term."""
    lg = mpmath.loggamma
    K = len(counts)
    rate_const = mpmath.log(a) + lg(1 + c) - lg(c + s)
    total = -sum(mpmath.exp(rate_const + lg(n + c + s - 1) - lg(n + c)) for n in range(1, N + 1))
    total += K * (rate_const - lg(1 - s)) - lg(K + 1)
    total += sum(lg(m - s) + lg(N - m + c + s) - lg(N + c) for m in counts)
    return total + N * mpmath.log(t) - t - lg(N + 1)


def test_gradient_matches_high_precision_derivatives():
    Z = CliqueMatrix([[0, 1, 2], [1, 3], [0, 1], [4]])
    hp = Hyperparams(2.5, 0.35, 0.7, 4.5)
    g = log_joint_grad(Z, hp)
    counts = Z.column_counts.tolist()
    x = [hp.alpha, hp.sigma, hp.c, hp.tau]
    with mpmath.workdps(40):
        assert float(mp_log_joint(Z.num_cliques, counts, *x)) == pytest.approx(log_joint(Z, hp, True), rel=1e-12)
        for k in range(4):
            def fk(v, k=k):
                y = [mpmath.mpf(z) for z in x]
                y[k] = v
                return mp_log_joint(Z.num_cliques, counts, *y)

            num = float(mpmath.diff(fk, mpmath.mpf(x[k])))
            assert g[k] == pytest.approx(num, rel=1e-9)


# -- expectations ---------------------------------------------------------------


def test_exact_counts_sum_to_expected_vertices():
    hp = Hyperparams(5.0, 0.5, 1.0)
    N = 40
    total = sum(expected_count_exact(hp, N, j) for j in range(1, N + 1))
    assert total == pytest.approx(expected_vertex_count(hp, N), rel=1e-10)


def test_expected_vertices_approach_asymptote():
    hp = Hyperparams(5.0, 0.5, 1.0)
    # derived by direct summation of the rates
    assert expected_vertex_count(hp, 500) == pytest.approx(242.5, abs=0.1)
    r = expected_vertex_count(hp, 100000) / asymptotic_vertex_count(hp, 100000)
    assert r == pytest.approx(1.0, abs=0.005)


def test_zipf_prediction_is_large_n_limit():
    hp = Hyperparams(5.0, 0.5, 1.0)
    N = 10**6
    for j in (1, 3, 10):
        assert expected_count_exact(hp, N, j) / zipf_count_prediction(hp, N, j) == pytest.approx(1.0, abs=0.01)


def test_overlap_value():
    assert expected_clique_overlap(Hyperparams(5.0, 0.5, 1.0)) == pytest.approx(1.25)


def test_levy_moments():
    hp = Hyperparams(3.0, 0.4, 2.0)
    from scipy import integrate

    m1, _ = integrate.quad(lambda u: u * levy_density(u, hp), 0, 1, limit=200)
    m2, _ = integrate.quad(lambda u: u * u * levy_density(u, hp), 0, 1, limit=200)
    assert m1 == pytest.approx(hp.alpha, rel=1e-6)
    assert m2 == pytest.approx(hp.alpha * (1 - hp.sigma) / (1 + hp.c), rel=1e-6)
    assert levy_mass(0.5, 1.0, hp) > 0


# -- sampling -------------------------------------------------------------------


def test_sampler_numbers_vertices_in_order_of_appearance(rng):
    Z = sample_clique_matrix(HP, 30, rng)
    first = [min(n for n, r in enumerate(Z.rows) if v in r) for v in range(Z.vertex_count)]
    assert first == sorted(first)
    assert Z.column_counts.min() >= 1


def test_sampler_poisson_row_count(rng):
    Ns = [sample_clique_matrix(HP, None, rng).num_cliques for _ in range(3000)]
    assert np.mean(Ns) == pytest.approx(HP.tau, abs=4 * math.sqrt(HP.tau / 3000))


@pytest.mark.parametrize("method", ["naive", "grouped"])
def test_sampler_matches_exact_count_expectations(method):
    hp = Hyperparams(3.0, 0.5, 1.0)
    rng = np.random.default_rng(7)
    N, reps = 6, 4000
    tallies = np.zeros((reps, N))
    for r in range(reps):
        cc = sample_clique_matrix(hp, N, rng, method=method).column_counts
        tallies[r] = np.bincount(cc, minlength=N + 1)[1:]
    mean = tallies.mean(axis=0)
    se = tallies.std(axis=0, ddof=1) / math.sqrt(reps)
    exact = np.array([expected_count_exact(hp, N, j) for j in range(1, N + 1)])
    assert np.all(np.abs(mean - exact) < 4 * se + 1e-9)


def test_sampler_frequency_matches_log_joint():
    # probability of a specific labelled 2-row matrix, after random relabelling
    hp = Hyperparams(1.0, 0.5, 1.0)
    rng = np.random.default_rng(3)
    target = CliqueMatrix([[0, 1], [1]])
    p = math.exp(log_joint(target, hp))
    n, hits = 100000, 0
    for _ in range(n):
        Z = sample_clique_matrix(hp, 2, rng)
        if Z.vertex_count != 2:
            continue
        perm = rng.permutation(2)
        Zp = CliqueMatrix([[int(perm[v]) for v in r] for r in Z.rows], 2)
        hits += Zp == target
    se = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) < 3.5 * se


def test_sample_atoms_first_moment(rng):
    hp = Hyperparams(4.0, 0.5, 1.0)
    sums = [sample_atoms(hp, 1e-4, rng).weights.sum() for _ in range(400)]
    from scipy import integrate

    expect, _ = integrate.quad(lambda u: u * levy_density(u, hp), 1e-4, 1, limit=200)
    se = np.std(sums, ddof=1) / math.sqrt(len(sums))
    assert abs(np.mean(sums) - expect) < 4 * se


@pytest.mark.filterwarnings("ignore:truncation")
def test_edge_count_mc_matches_simulated_graphs():
    hp = Hyperparams(4.0, 0.5, 1.0)
    rng = np.random.default_rng(11)
    N = 30
    sims = [cover_to_graph(sample_clique_matrix(hp, N, rng)).edge_count for _ in range(600)]
    est = expected_edge_count_mc(hp, N, truncation=1e-5, rng=rng, n_replicates=120)
    se = math.hypot(np.std(sims, ddof=1) / math.sqrt(len(sims)), est.stderr)
    # truncated atoms can only lose edges; est.boundary bounds the loss
    assert -4 * se < np.mean(sims) - est.mean < 4 * se + est.boundary
