import math
import warnings

import numpy as np
import pytest
from scipy import optimize
from sklearn.exceptions import ConvergenceWarning

from rcc.hyper import (
    fit_hyperparams,
    from_unconstrained,
    log_prior,
    mh_hyper_step,
    to_unconstrained,
)
from rcc.ibp import CliqueMatrix, Hyperparams, log_joint, sample_clique_matrix
from rcc.hyper import _objective
from collections import Counter


def test_transform_roundtrip():
    hp = Hyperparams(3.0, 0.3, -0.1, 7.0)
    back = from_unconstrained(to_unconstrained(hp))
    for a, b in zip(back.to_dict().values(), hp.to_dict().values()):
        assert a == pytest.approx(b)


def test_tau_estimate_is_row_count(rng):
    Z = sample_clique_matrix(Hyperparams(3.0, 0.5, 1.0), 37, rng)
    assert fit_hyperparams(Z).hyperparams.tau == 37.0


def test_objective_gradient_matches_finite_differences(rng):
    Z = sample_clique_matrix(Hyperparams(4.0, 0.4, 2.0), 25, rng)
    counts = np.asarray(Z.column_counts)
    hist = Counter(counts.tolist())
    for theta in ([1.0, 0.2, 0.5], [2.0, -1.0, 1.5], [0.3, 1.0, -0.5]):
        err = optimize.check_grad(lambda t: _objective(t, Z.num_cliques, counts, hist)[0],
                                  lambda t: _objective(t, Z.num_cliques, counts, hist)[1], theta, epsilon=1e-6)
        scale = np.linalg.norm(_objective(np.array(theta), Z.num_cliques, counts, hist)[1])
        assert err <= 1e-4 * max(1.0, scale)


def test_gradient_fit_is_a_stationary_point(rng):
    Z = sample_clique_matrix(Hyperparams(5.0, 0.5, 1.0), 200, rng)
    fit = fit_hyperparams(Z)
    assert fit.converged
    best = log_joint(Z, fit.hyperparams, True)
    for d in ([1.02, 1, 1], [0.98, 1, 1]):
        hp = fit.hyperparams
        assert log_joint(Z, hp.replace(alpha=hp.alpha * d[0]), True) <= best + 1e-9


def test_parameter_recovery():
    # ten matrices at alpha=5, sigma=0.5, c=1, N=500
    truth = Hyperparams(5.0, 0.5, 1.0)
    rng = np.random.default_rng(2024)
    est = []
    for _ in range(10):
        Z = sample_clique_matrix(truth, 500, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            h = fit_hyperparams(Z).hyperparams
        est.append((h.alpha, h.sigma))
    a, s = np.mean(est, axis=0)
    assert abs(a / truth.alpha - 1) <= 0.2
    assert abs(s / truth.sigma - 1) <= 0.2


def test_non_convergence_is_reported(rng):
    Z = sample_clique_matrix(Hyperparams(5.0, 0.5, 1.0), 50, rng)
    with pytest.warns(ConvergenceWarning, match="gradient norm"):
        res = fit_hyperparams(Z, max_iter=1)
    assert not res.converged and res.grad_norm > 0


def test_mh_posterior(rng):
    Z = sample_clique_matrix(Hyperparams(5.0, 0.5, 1.0), 200, rng)
    post = fit_hyperparams(Z, "mh", n_samples=1500, burn_in=500, rng=rng)
    assert 0.05 < post.acceptance_rate < 0.95
    assert post.samples.shape == (1500, 4)
    assert np.all(post.samples[:, 1] > 0) and np.all(post.samples[:, 1] < 1)
    assert post.mean.alpha == pytest.approx(5.0, rel=0.5)


def test_mh_step_stays_in_domain(rng):
    Z = CliqueMatrix([[0, 1], [1, 2]])
    hp = Hyperparams(1.0, 0.5, 1.0, 2.0)
    for _ in range(200):
        hp, lp, _ = mh_hyper_step(2, Counter(Z.column_counts.tolist()), hp, rng, 1.0)
        assert 0 < hp.sigma < 1 and hp.c > -hp.sigma and math.isfinite(lp)


def test_log_prior_values():
    hp = Hyperparams(1.0, 0.5, 0.5, 100.0)
    assert log_prior(hp) == pytest.approx(-1.0 - 1.0 + math.log(0.01) - 1.0)
