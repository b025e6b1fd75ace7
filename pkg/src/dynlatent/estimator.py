"""Estimator-style front end for fitting and using the model."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import attraction as _attraction
from . import predict as _predict
from .evaluation import fit_auc, fitted_probabilities
from .model import PriorConfig
from .sampler import ChainConfig, run_chain
from .validation import check_fitted, check_network


class DynamicLatentSpaceModel(BaseEstimator):
    """Bayesian dynamic latent space model for longitudinal binary networks.

    Parameters
    ----------
    n_components : int
        Latent dimension ``p``.
    iterations, burn_in, thin : int
        Sweep count, discarded sweeps and storage stride.
    n0 : int
        Controls per stratum for the case-control likelihood; 0 uses the
        exact likelihood.
    proposal_sd_latent, proposal_sd_beta, kappa : float, optional
        Initial proposal scales (tuned during burn-in).
    prior : PriorConfig, optional
    directed : bool
    random_state : int

    Attributes
    ----------
    chain_ : PosteriorChain
    network_ : DynamicNetwork
    positions_ : ndarray of shape (n, T, p)
        Posterior-mean latent trajectories.
    params_ : ModelParams
        Posterior means of the model parameters.
    """

    def __init__(self, n_components=2, iterations=10000, burn_in=2000, thin=10, n0=0,
                 proposal_sd_latent=None, proposal_sd_beta=0.05, kappa=None, prior=None,
                 directed=True, random_state=0):
        self.n_components = n_components
        self.iterations = iterations
        self.burn_in = burn_in
        self.thin = thin
        self.n0 = n0
        self.proposal_sd_latent = proposal_sd_latent
        self.proposal_sd_beta = proposal_sd_beta
        self.kappa = kappa
        self.prior = prior
        self.directed = directed
        self.random_state = random_state

    def _chain_config(self) -> ChainConfig:
        return ChainConfig(iterations=self.iterations, burn_in=self.burn_in, thin=self.thin,
                           proposal_sd_latent=self.proposal_sd_latent,
                           proposal_sd_beta=self.proposal_sd_beta, kappa=self.kappa, n0=self.n0,
                           seed=int(self.random_state), latent_dim=self.n_components)

    def fit(self, Y, y=None, callback=None):
        """Run the sampler on ``Y`` (network or (T, n, n) array with NaN for missing)."""
        net = check_network(Y, self.directed)
        prior = self.prior if self.prior is not None else PriorConfig()
        self.chain_ = run_chain(net, prior, self._chain_config(), callback)
        self.network_ = net
        self.positions_ = self.chain_.posterior_mean_positions()
        self.params_ = self.chain_.posterior_mean_params()
        return self

    def transform(self, Y=None):
        """Posterior-mean latent trajectories, shape (n, T, p)."""
        check_fitted(self)
        return self.positions_

    def fit_transform(self, Y, y=None):
        return self.fit(Y).transform()

    def fitted_proba(self):
        """In-sample edge probabilities (T, n, n) at the posterior means."""
        check_fitted(self)
        return fitted_probabilities(self.chain_)

    def predict_proba(self, Y=None):
        """Edge probabilities for the next time step, shape (n, n)."""
        check_fitted(self)
        return _predict.predict_edge_probs(self.chain_)

    def predict(self, Y=None, cutoff=0.5):
        """Hard next-step predictions, ``1`` where the probability exceeds ``cutoff``."""
        return _predict.hard_threshold(self.predict_proba(), cutoff)

    def predict_latent(self):
        check_fitted(self)
        return _predict.predict_latent(self.chain_)

    def impute(self):
        """Posterior mean of every missing cell, as a (T, n, n) array (NaN elsewhere)."""
        check_fitted(self)
        out = np.full(self.network_.cells.shape, np.nan)
        if self.network_.n_missing:
            out[self.network_.missing_index()] = self.chain_.imputation_mean()
        return out

    def attraction(self, p0=0.5, lam=None, threshold=0.5, include_all=False):
        """Pairs whose posterior null mass of attraction falls below ``threshold``."""
        check_fitted(self)
        prior = _attraction.AttractionPriorConfig(p0, lam)
        return _attraction.scan_all_pairs(self.chain_, prior, threshold, include_all)

    def score(self, Y=None, y=None):
        """In-sample AUC on the observed cells of ``Y`` (the training network by default)."""
        check_fitted(self)
        net = self.network_ if Y is None else check_network(Y, self.directed)
        return fit_auc(net, self.chain_)
