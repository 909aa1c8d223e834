"""Estimator-style front ends for the global importance methods."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from cage.gaussian import DEFAULT_RIDGE, GibbsConfig, fit_gaussian
from cage.predictors import as_feature_matrix
from cage.shapley import build_value_cache, estimate_permutation, estimate_value, exact_enumerate


class CAGE(BaseEstimator):
    """Causality-aware global Shapley importance.

    ``fit`` learns the joint Gaussian used to draw out-of-coalition features (typically
    on training data); ``explain`` estimates importances on held-out data.

    Parameters
    ----------
    model : fitted estimator exposing ``predict`` and ``feature_names_``
    chain_graph : ChainGraph over the model's features
    loss : {"mse", "bce"}
    n_outer, n_inner : outer permutation samples and inner completions per coalition
    sampler : {"exact", "gibbs"}
    """

    method = "cage"

    def __init__(self, model=None, chain_graph=None, loss="mse", n_outer=2000, n_inner=64,
                 sampler="exact", ridge=DEFAULT_RIDGE, gibbs_burn_in=100, gibbs_thinning=5,
                 target_stderr=None, n_jobs=1, random_state=0):
        self.model = model
        self.chain_graph = chain_graph
        self.loss = loss
        self.n_outer = n_outer
        self.n_inner = n_inner
        self.sampler = sampler
        self.ridge = ridge
        self.gibbs_burn_in = gibbs_burn_in
        self.gibbs_thinning = gibbs_thinning
        self.target_stderr = target_stderr
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _check_config(self):
        if self.model is None:
            raise ValueError("a fitted model is required")
        if self.chain_graph is None:
            raise ValueError("cage requires a chain graph")
        if set(self.chain_graph.feature_universe) != set(self.model.feature_names_):
            raise ValueError("chain graph does not cover the model's features")

    def fit(self, X, y=None):
        self._check_config()
        X = as_feature_matrix(X, self.model.feature_names_)
        self.feature_names_ = tuple(self.model.feature_names_)
        self.joint_ = fit_gaussian(X, ridge=self.ridge, names=self.feature_names_)
        self.n_features_in_ = X.shape[1]
        return self

    def _kwargs(self):
        return dict(joint=self.joint_, chain=self.chain_graph, sampler=self.sampler,
                    gibbs=GibbsConfig(1, self.gibbs_burn_in, self.gibbs_thinning))

    def explain(self, X, y):
        """Run the permutation estimator; stores and returns an ``ExplanationResult``."""
        check_is_fitted(self, "n_features_in_")
        self.result_ = estimate_permutation(
            self.method, X, y, self.model, self.loss, N=self.n_outer, M=self.n_inner,
            seed=self.random_state, workers=self.n_jobs, target_stderr=self.target_stderr,
            **self._kwargs())
        self.phi_ = self.result_.phi
        self.stderr_ = self.result_.stderr
        return self.result_

    def value(self, coalition, X, y, return_stderr=False):
        check_is_fitted(self, "n_features_in_")
        return estimate_value(self.method, coalition, X, y, self.model, self.loss, M=self.n_inner,
                              seed=self.random_state, return_stderr=return_stderr, **self._kwargs())

    def value_cache(self, X, y):
        check_is_fitted(self, "n_features_in_")
        return build_value_cache(self.method, X, y, self.model, self.loss, M=self.n_inner,
                                 seed=self.random_state, **self._kwargs())

    def explain_exact(self, X, y):
        """Subset-enumeration oracle with the same sampler and inner sample count."""
        return exact_enumerate(self.value_cache(X, y))


class SAGE(CAGE):
    """Independence-assuming baseline: missing features resampled from their marginals.

    ``fit`` stores the rows whose marginals are resampled; ``chain_graph`` is ignored.
    """

    method = "sage"

    def _check_config(self):
        if self.model is None:
            raise ValueError("a fitted model is required")

    def fit(self, X, y=None):
        self._check_config()
        self.background_ = as_feature_matrix(X, self.model.feature_names_)
        self.feature_names_ = tuple(self.model.feature_names_)
        self.n_features_in_ = self.background_.shape[1]
        return self

    def _kwargs(self):
        return dict(background=np.asarray(self.background_))
