"""Estimator-style wrappers (fit / transform / predict / get_params)."""

from __future__ import annotations

import math
import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning, NotFittedError

from .graph import Graph, NoisyOrParams, cover_to_graph, sample_observed_graph
from .hyper import fit_hyperparams
from .ibp import CliqueMatrix, Hyperparams, log_joint, sample_clique_matrix
from .inference import McmcConfig, McmcState, run_mcmc
from .stats import TABLE_FIELDS, summarize
from .validation import ValidationError, check_clique_matrix, check_graph, check_random_state

__all__ = ["StableBetaIBP", "RandomCliqueCover", "GraphSummarizer"]


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


def _hp_or_none(alpha, sigma, c, tau):
    vals = (alpha, sigma, c, tau)
    if all(v is None for v in vals):
        return None
    if any(v is None for v in vals[:3]):
        raise ValidationError("alpha, sigma and c must be given together")
    return Hyperparams(alpha, sigma, c, 1.0 if tau is None else tau)


class StableBetaIBP(BaseEstimator):
    """Stable-beta IBP prior over clique matrices.

    ``fit(Z)`` estimates the hyperparameters (``method="gradient"`` for the
    maximum-likelihood point, ``"mh"`` for the posterior mean); the given
    ``alpha``/``sigma``/``c``/``tau`` are the starting point.  ``sample``
    draws new matrices and ``score`` is the log joint including the Poisson
    term for the number of rows.
    """

    def __init__(self, alpha=None, sigma=None, c=None, tau=None, method="gradient",
                 max_iter=500, n_samples=2000, burn_in=500, random_state=None):
        self.alpha = alpha
        self.sigma = sigma
        self.c = c
        self.tau = tau
        self.method = method
        self.max_iter = max_iter
        self.n_samples = n_samples
        self.burn_in = burn_in
        self.random_state = random_state

    def _prior_hp(self):
        return _hp_or_none(self.alpha, self.sigma, self.c, self.tau)

    def fit(self, Z, y=None):
        Z = check_clique_matrix(Z, allow_empty_columns=False)
        init = self._prior_hp()
        if self.method == "gradient":
            res = fit_hyperparams(Z, "gradient", init=init, max_iter=self.max_iter)
            self.hyperparams_ = res.hyperparams
            self.converged_ = res.converged
        elif self.method == "mh":
            res = fit_hyperparams(Z, "mh", init=init or Hyperparams(1.0, 0.5, 1.0, max(Z.num_cliques, 1)),
                                  n_samples=self.n_samples, burn_in=self.burn_in,
                                  rng=check_random_state(self.random_state))
            self.posterior_ = res
            self.hyperparams_ = res.mean
            self.converged_ = True
        else:
            raise ValidationError(f"unknown method {self.method!r}")
        self.n_cliques_ = Z.num_cliques
        return self

    def _hp(self):
        if hasattr(self, "hyperparams_"):
            return self.hyperparams_
        hp = self._prior_hp()
        if hp is None:
            raise NotFittedError("give alpha, sigma and c or call fit first")
        return hp

    def sample(self, n_cliques=None, random_state=None) -> CliqueMatrix:
        """Draw one clique matrix; ``n_cliques=None`` draws the row count from Poisson(tau)."""
        rng = check_random_state(self.random_state if random_state is None else random_state)
        return sample_clique_matrix(self._hp(), n_cliques, rng)

    def score(self, Z, y=None) -> float:
        Z = check_clique_matrix(Z, allow_empty_columns=False)
        return log_joint(Z, self._hp(), include_n_prior=True)


class RandomCliqueCover(BaseEstimator):
    """Latent clique cover of an observed graph, fitted by MCMC.

    ``mode="full"`` treats the graph as exactly the union of the cliques;
    ``mode="partial"`` adds a noisy-OR observation layer with edge probability
    ``pi``.  Hyperparameters are refitted every ``hyper_every`` moves when
    ``hyper_method="gradient"``, sampled as an MCMC move when ``"mh"``, and
    held at ``hyperparams`` when ``"fixed"``.  ``None`` picks gradient for
    full mode and MH for partial mode.

    After ``fit``: ``cover_`` (last sample), ``samples_``, ``trace_``,
    ``acceptance_``, ``hyperparams_``, ``pi_`` and ``state_``.
    ``predict(n)`` draws posterior-predictive graphs.
    """

    def __init__(self, mode="full", n_iter=1000, burn_in=0, thin=1, init="two-cliques",
                 hyperparams=None, hyper_method=None, hyper_every=None, pi=0.5,
                 pi_mode="shared", moves=None, random_state=0, debug=False):
        self.mode = mode
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.init = init
        self.hyperparams = hyperparams
        self.hyper_method = hyper_method
        self.hyper_every = hyper_every
        self.pi = pi
        self.pi_mode = pi_mode
        self.moves = moves
        self.random_state = random_state
        self.debug = debug

    def make_config(self) -> McmcConfig:
        method = self.hyper_method or ("gradient" if self.mode == "full" else "mh")
        every = self.hyper_every
        if every is None:
            every = max(1, self.n_iter // 10) if method == "gradient" else 0
        seed = self.random_state if isinstance(self.random_state, (int, np.integer)) else 0
        return McmcConfig(
            iterations=self.n_iter,
            thin=self.thin,
            burn_in=self.burn_in,
            moves=None if self.moves is None else dict(self.moves),
            seed=int(seed),
            mode=self.mode,
            pi_mode=self.pi_mode,
            hyperparams=self.hyperparams,
            pi=self.pi,
            hyper_method=method,
            hyper_every=every,
            init=self.init,
            debug=self.debug,
        )

    def fit(self, G, y=None, state: McmcState = None, callback=None):
        """Run the sampler on ``G``; ``state`` resumes from a checkpoint and
        ``callback(state)`` runs after every move."""
        G = check_graph(G)
        if G.edge_count == 0:
            raise ValidationError("the graph has no edges")
        cfg = self.make_config()
        rng = None
        if isinstance(self.random_state, np.random.Generator):
            rng = self.random_state
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            res = run_mcmc(G, cfg, rng=rng, state=state, callback=callback)
        self.graph_ = G
        self.config_ = cfg
        self.state_ = res.state
        self.samples_ = res.samples
        self.trace_ = res.trace
        self.acceptance_ = res.acceptance
        self.cover_ = res.state.cover()
        self.hyperparams_ = res.state.hp
        self.pi_ = res.state.pi_value() if self.mode == "partial" else 1.0
        return self

    def transform(self, G=None) -> CliqueMatrix:
        """The fitted cover with empty cliques dropped."""
        _check_fitted(self, "cover_")
        if G is not None and check_graph(G) != self.graph_:
            raise ValidationError("transform only applies to the graph the model was fitted on")
        rows = [r for r in self.cover_.rows if r]
        return CliqueMatrix(rows, self.cover_.vertex_count)

    def posterior_pi(self) -> np.ndarray:
        """Shared ``pi`` across the retained samples."""
        _check_fitted(self, "samples_")
        if self.mode != "partial" or self.pi_mode != "shared":
            raise ValidationError("posterior_pi needs partial mode with a shared pi")
        return np.array([s.pi for s in self.samples_], dtype=float)

    def predict(self, n_samples=25, random_state=None):
        """Posterior-predictive graphs drawn from the fitted hyperparameters.

        The row count is drawn from Poisson(tau).  In partial mode the
        observed graph is a noisy-OR draw using the fitted shared ``pi`` (or
        its mean in per-clique mode).
        """
        _check_fitted(self, "hyperparams_")
        rng = check_random_state(random_state)
        out = []
        pi = self.pi_ if np.ndim(self.pi_) == 0 else float(np.mean(self.pi_))
        for _ in range(int(n_samples)):
            Z = sample_clique_matrix(self.hyperparams_, None, rng)
            if self.mode == "partial":
                out.append(sample_observed_graph(Z, NoisyOrParams(pi), rng))
            else:
                out.append(cover_to_graph(Z))
        return out


class GraphSummarizer(TransformerMixin, BaseEstimator):
    """Maps graphs to rows of summary statistics (columns: :data:`TABLE_FIELDS`)."""

    def __init__(self, skip_max_clique=False, include_low_degree=False, max_cliques=10**6):
        self.skip_max_clique = skip_max_clique
        self.include_low_degree = include_low_degree
        self.max_cliques = max_cliques

    def fit(self, X, y=None):
        self.n_features_out_ = len(TABLE_FIELDS)
        return self

    def transform(self, X) -> np.ndarray:
        if isinstance(X, Graph):
            X = [X]
        rows = []
        for G in X:
            s = summarize(check_graph(G), self.skip_max_clique, self.include_low_degree, self.max_cliques)
            rows.append([s.table_row()[k] for k in TABLE_FIELDS])
        return np.array(rows, dtype=float).reshape(-1, len(TABLE_FIELDS))

    def get_feature_names_out(self, input_features=None):
        return np.array(TABLE_FIELDS, dtype=object)


def mean_and_stderr(values) -> tuple:
    """Column means and standard errors, ignoring NaN entries."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    n = np.sum(~np.isnan(arr), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns (skipped statistics)
        mean = np.nanmean(arr, axis=0) if arr.size else np.full(arr.shape[1], math.nan)
        sd = np.nanstd(arr, axis=0, ddof=1) if len(arr) > 1 else np.full(arr.shape[1], math.nan)
        se = sd / np.sqrt(n)
    return mean, se
