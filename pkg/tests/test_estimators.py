import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import random_graph
from rcc import GraphSummarizer, RandomCliqueCover, StableBetaIBP
from rcc.estimators import mean_and_stderr
from rcc.graph import Graph, cover_to_graph
from rcc.ibp import CliqueMatrix, Hyperparams, log_joint, sample_clique_matrix
from rcc.stats import TABLE_FIELDS
from rcc.validation import ValidationError


def test_params_and_clone():
    est = StableBetaIBP(alpha=2.0, sigma=0.4, c=1.0, method="mh", n_samples=50)
    assert est.get_params()["sigma"] == 0.4
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    rcc = RandomCliqueCover(mode="partial", n_iter=10).set_params(pi=0.3)
    assert clone(rcc).pi == 0.3


def test_ibp_fit_sample_score(rng):
    Z = sample_clique_matrix(Hyperparams(5.0, 0.5, 1.0), 150, rng)
    est = StableBetaIBP().fit(Z)
    assert est.converged_
    assert est.hyperparams_.tau == 150.0
    assert est.score(Z) == pytest.approx(log_joint(Z, est.hyperparams_, True))
    draw = est.sample(20, random_state=3)
    assert draw.num_cliques == 20
    assert est.sample(20, random_state=3) == draw


def test_ibp_mh_fit(rng):
    Z = sample_clique_matrix(Hyperparams(5.0, 0.5, 1.0), 100, rng)
    est = StableBetaIBP(method="mh", n_samples=300, burn_in=100, random_state=0).fit(Z)
    assert est.posterior_.samples.shape == (300, 4)
    assert 0 < est.hyperparams_.sigma < 1


def test_ibp_needs_parameters_or_fit():
    with pytest.raises(NotFittedError):
        StableBetaIBP().sample(3)
    with pytest.raises(ValidationError):
        StableBetaIBP(alpha=1.0).sample(3)
    with pytest.raises(ValidationError):
        StableBetaIBP(method="bogus").fit(CliqueMatrix([[0]]))
    assert StableBetaIBP(alpha=1.0, sigma=0.5, c=1.0).sample(4, random_state=0).num_cliques == 4


def test_clique_cover_full_mode(k4):
    G = Graph(6, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)])
    est = RandomCliqueCover(n_iter=400, thin=10, random_state=1).fit(G)
    assert cover_to_graph(est.transform()) == G
    assert est.pi_ == 1.0
    assert len(est.samples_) == 40 and len(est.trace_) == 40
    graphs = est.predict(5, random_state=0)
    assert len(graphs) == 5 and all(isinstance(g, Graph) for g in graphs)
    with pytest.raises(ValidationError):
        est.transform(k4)


def test_clique_cover_partial_mode():
    rng = np.random.default_rng(2)
    G = random_graph(rng, 10, 0.4)
    est = RandomCliqueCover(mode="partial", n_iter=500, thin=5, random_state=4).fit(G)
    pis = est.posterior_pi()
    assert pis.shape == (100,) and np.all((0 < pis) & (pis <= 1))
    assert est.config_.hyper_method == "mh"
    assert G.edge_set() <= cover_to_graph(est.transform()).edge_set()
    same = RandomCliqueCover(mode="partial", n_iter=500, thin=5, random_state=4).fit(G)
    assert same.trace_ == est.trace_


def test_clique_cover_rejects_bad_input():
    with pytest.raises(NotFittedError):
        RandomCliqueCover().transform()
    with pytest.raises(ValidationError):
        RandomCliqueCover().fit(Graph(3))
    with pytest.raises(ValidationError):
        RandomCliqueCover(mode="full", n_iter=10).fit(Graph(2, [(0, 1)])).posterior_pi()


def test_clique_cover_accepts_adjacency_matrix():
    A = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    est = RandomCliqueCover(n_iter=50).fit(A)
    assert cover_to_graph(est.transform()).edge_count == 3


def test_graph_summarizer(k4):
    X = GraphSummarizer().fit_transform([k4, Graph(3, [(0, 1), (1, 2)])])
    assert X.shape == (2, len(TABLE_FIELDS))
    assert X[0, list(TABLE_FIELDS).index("av. degree")] == 3.0
    assert list(GraphSummarizer().fit(None).get_feature_names_out()) == list(TABLE_FIELDS)
    skipped = GraphSummarizer(skip_max_clique=True).fit_transform(k4)
    assert np.isnan(skipped).sum() == 1


def test_mean_and_stderr():
    m, se = mean_and_stderr([[1.0, 2.0], [3.0, math.nan], [5.0, 4.0]])
    assert m.tolist() == [3.0, 3.0]
    assert se[0] == pytest.approx(2 / math.sqrt(3))
    assert se[1] == pytest.approx(math.sqrt(2) / math.sqrt(2))
