"""Hyperparameter estimation for the stable-beta IBP prior over clique matrices."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special
from sklearn.exceptions import ConvergenceWarning

from .ibp import CliqueMatrix, Hyperparams, log_joint_from_counts, new_vertex_rates
from .validation import ValidationError, check_random_state

__all__ = [
    "HyperFit",
    "HyperPosterior",
    "to_unconstrained",
    "from_unconstrained",
    "log_prior",
    "fit_hyperparams",
    "mh_hyper_step",
]


def to_unconstrained(hp: Hyperparams) -> np.ndarray:
    """Map to ``(log alpha, logit sigma, log(c + sigma), log tau)``."""
    return np.array(
        [math.log(hp.alpha), special.logit(hp.sigma), math.log(hp.c + hp.sigma), math.log(hp.tau)]
    )


def from_unconstrained(theta) -> Hyperparams:
    a, s_raw, cs, t = (float(x) for x in theta)
    sigma = float(special.expit(s_raw))
    sigma = min(max(sigma, 1e-12), 1 - 1e-12)
    return Hyperparams(math.exp(a), sigma, math.exp(cs) - sigma, math.exp(t))


def _log_jacobian(hp: Hyperparams) -> float:
    return (
        math.log(hp.alpha)
        + math.log(hp.sigma)
        + math.log1p(-hp.sigma)
        + math.log(hp.c + hp.sigma)
        + math.log(hp.tau)
    )


def log_prior(hp: Hyperparams) -> float:
    """Weakly informative prior: alpha ~ Gamma(1, 1), sigma ~ U(0, 1),
    c + sigma ~ Gamma(1, 1), tau ~ Gamma(1, rate=0.01)."""
    return -hp.alpha - (hp.c + hp.sigma) + math.log(0.01) - 0.01 * hp.tau


def _stats(Z):
    if isinstance(Z, CliqueMatrix):
        counts = np.asarray(Z.column_counts)
        N = Z.num_cliques
    else:
        N, counts = Z
        counts = np.asarray(counts)
    if N < 1:
        raise ValidationError("need at least one clique to fit hyperparameters")
    if counts.size and counts.min() < 1:
        raise ValidationError("every vertex must appear in at least one clique")
    return int(N), counts


def _objective(theta3, N, counts, hist):
    """Negative log joint (without the N prior) and its gradient in
    ``(log alpha, logit sigma, log(c + sigma))``."""
    a = math.exp(theta3[0])
    s = float(special.expit(theta3[1]))
    cs = math.exp(theta3[2])
    c = cs - s
    if not (0 < s < 1) or c + s <= 0:
        return math.inf, np.zeros(3)
    hp = Hyperparams.__new__(Hyperparams)
    object.__setattr__(hp, "alpha", a)
    object.__setattr__(hp, "sigma", s)
    object.__setattr__(hp, "c", c)
    object.__setattr__(hp, "tau", 1.0)
    lam = new_vertex_rates(N, hp)
    val = log_joint_from_counts(N, hist, hp, rate_sum=float(lam.sum()))
    K = counts.size
    psi = special.digamma
    n = np.arange(1, N + 1, dtype=float)
    g_a = K / a - lam.sum() / a
    g_s = -np.sum(lam * (psi(n + c + s - 1) - psi(c + s)))
    g_c = -np.sum(lam * (psi(1 + c) + psi(n + c + s - 1) - psi(n + c) - psi(c + s)))
    if K:
        g_s += K * (psi(1 - s) - psi(c + s)) + np.sum(psi(N - counts + c + s) - psi(counts - s))
        g_c += K * (psi(1 + c) - psi(c + s)) + np.sum(psi(N - counts + c + s)) - K * psi(N + c)
    # chain rule: alpha = e^t0; sigma = expit(t1) with c + sigma held fixed; c + sigma = e^t2
    ds = s * (1 - s)
    grad = np.array([g_a * a, (g_s - g_c) * ds, g_c * cs])
    if not np.isfinite(val):
        return math.inf, np.zeros(3)
    return -val, -grad


@dataclass
class HyperFit:
    hyperparams: Hyperparams
    log_joint: float
    converged: bool
    grad_norm: float
    n_iter: int


@dataclass
class HyperPosterior:
    samples: np.ndarray  # (n, 4) columns alpha, sigma, c, tau
    acceptance_rate: float

    @property
    def mean(self) -> Hyperparams:
        a, s, c, t = self.samples.mean(axis=0)
        return Hyperparams(a, s, c, t)


def fit_hyperparams(
    Z,
    method="gradient",
    init=None,
    max_iter=500,
    tol=1e-8,
    n_samples=2000,
    burn_in=500,
    step=0.1,
    rng=None,
):
    """Estimate hyperparameters from a clique matrix.

    ``method="gradient"`` maximises the log joint over ``(alpha, sigma, c)``
    with L-BFGS in the unconstrained space; ``tau`` is set to its closed-form
    maximiser, the number of rows.  A :class:`ConvergenceWarning` reports a
    failed optimisation together with the final gradient norm.

    ``method="mh"`` runs random-walk Metropolis–Hastings in the unconstrained
    space under :func:`log_prior` and returns a :class:`HyperPosterior`.

    ``Z`` may also be a ``(n_rows, column_counts)`` pair.
    """
    N, counts = _stats(Z)
    hist = Counter(counts.tolist())
    if init is None:
        init = Hyperparams(max(float(counts.size) / max(N**0.5, 1.0), 0.5), 0.5, 1.0, float(N))
    if method == "gradient":
        theta0 = to_unconstrained(init)[:3]
        res = optimize.minimize(
            _objective,
            theta0,
            args=(N, counts, hist),
            jac=True,
            method="L-BFGS-B",
            bounds=[(-20, 20), (-30, 30), (-20, 20)],
            options={"maxiter": max_iter, "gtol": tol},
        )
        # the Poisson MLE of tau is the row count itself
        hp = from_unconstrained(np.concatenate([res.x, [0.0]])).replace(tau=float(N))
        _, g = _objective(res.x, N, counts, hist)
        gnorm = float(np.linalg.norm(g))
        if not res.success:
            warnings.warn(
                f"hyperparameter optimisation stopped after {res.nit} iterations "
                f"({res.message}); gradient norm {gnorm:.3g}",
                ConvergenceWarning,
                stacklevel=2,
            )
        lj = log_joint_from_counts(N, hist, hp, include_n_prior=True)
        return HyperFit(hp, lj, bool(res.success), gnorm, int(res.nit))
    if method == "mh":
        rng = check_random_state(rng)
        hp = init
        lp = log_joint_from_counts(N, hist, hp, include_n_prior=True) + log_prior(hp) + _log_jacobian(hp)
        out = np.empty((n_samples, 4))
        accepted = 0
        for it in range(burn_in + n_samples):
            hp, lp, acc = mh_hyper_step(N, hist, hp, rng, step, lp)
            accepted += acc
            if it >= burn_in:
                out[it - burn_in] = (hp.alpha, hp.sigma, hp.c, hp.tau)
        return HyperPosterior(out, accepted / (burn_in + n_samples))
    raise ValidationError(f"unknown method {method!r}")


def _log_target(N, hist, hp):
    return log_joint_from_counts(N, hist, hp, include_n_prior=True) + log_prior(hp) + _log_jacobian(hp)


def mh_hyper_step(N, hist, hp, rng, step=0.1, current=None):
    """One random-walk MH update of all four hyperparameters.

    Returns ``(hyperparams, log_target, accepted)``.
    """
    if current is None:
        current = _log_target(N, hist, hp)
    theta = to_unconstrained(hp) + step * rng.standard_normal(4)
    try:
        prop = from_unconstrained(theta)
    except (ValidationError, OverflowError):
        return hp, current, False
    new = _log_target(N, hist, prop)
    if math.log(rng.random()) < new - current:
        return prop, new, True
    return hp, current, False
