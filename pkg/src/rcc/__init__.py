"""Random clique cover graphs under a stable-beta Indian buffet process prior."""

from .estimators import GraphSummarizer, RandomCliqueCover, StableBetaIBP
from .graph import (
    Graph,
    Multigraph,
    NoisyOrParams,
    cover_to_graph,
    cover_to_multigraph,
    read_edgelist,
    sample_observed_graph,
    write_edgelist,
)
from .hyper import fit_hyperparams
from .ibp import CliqueMatrix, Hyperparams, log_joint, sample_clique_matrix
from .inference import McmcConfig, McmcState, init_cover, run_mcmc
from .stats import GraphSummary, summarize
from .validation import ValidationError

__all__ = [
    "CliqueMatrix",
    "Graph",
    "GraphSummarizer",
    "GraphSummary",
    "Hyperparams",
    "McmcConfig",
    "McmcState",
    "Multigraph",
    "NoisyOrParams",
    "RandomCliqueCover",
    "StableBetaIBP",
    "ValidationError",
    "cover_to_graph",
    "cover_to_multigraph",
    "fit_hyperparams",
    "init_cover",
    "log_joint",
    "read_edgelist",
    "run_mcmc",
    "sample_clique_matrix",
    "sample_observed_graph",
    "summarize",
    "write_edgelist",
]
