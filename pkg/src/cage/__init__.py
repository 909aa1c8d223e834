"""Causality-aware global Shapley feature importance (CAGE) and the SAGE baseline."""

from cage.chain_graph import ChainComponent, ChainGraph, build_chain_graph, parents_of_component
from cage.datasets import Dataset, generate_synthetic, load_csv, normalize_split
from cage.explainers import CAGE, SAGE
from cage.gaussian import (
    GaussianModel,
    GibbsConfig,
    condition,
    draw,
    fit_gaussian,
    gibbs_draw,
    sample_out_coalition,
)
from cage.predictors import LinearModel, MLPModel, compute_loss, mean_prediction, predict_batch
from cage.scm import Intervention, LinearScm, analytic_moments, sample, topological_order
from cage.shapley import (
    CoalitionValueCache,
    ExplanationResult,
    build_value_cache,
    estimate_permutation,
    estimate_value,
    exact_enumerate,
    wls_shapley,
)

__version__ = "0.1.0"
