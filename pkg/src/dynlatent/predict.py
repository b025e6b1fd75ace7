"""One-step-ahead prediction from a fitted chain, plus simple baselines."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from .model import DynamicNetwork

logger = logging.getLogger(__name__)


@dataclass
class PredictionResult:
    """Predicted positions and edge probabilities for the next time step.

    ``ess`` holds, per dyad, the effective sample size of the draw weights.
    """

    latent_hat: np.ndarray
    edge_probs: np.ndarray
    ess: np.ndarray | None = None


def _check_chain(chain):
    if chain is None or len(chain) == 0:
        raise ValueError("chain has no stored draws")


def predict_latent(chain) -> np.ndarray:
    """Average of the final-time positions over stored draws, shape (n, p)."""
    _check_chain(chain)
    return chain.X[:, :, -1, :].mean(axis=0)


def _log_transition(chain, latent_hat):
    XT = chain.X[:, :, -1, :]
    if latent_hat.shape != XT.shape[1:]:
        raise ValueError(f"latent_hat must have shape {XT.shape[1:]}")
    p = XT.shape[-1]
    s2 = chain.sigma2[:, None]
    sq = ((XT - latent_hat[None]) ** 2).sum(-1)
    return -0.5 * p * np.log(2 * np.pi * s2) - 0.5 * sq / s2  # (L, n)


def _normalize(logw):
    logw = logw - logw.max(axis=0, keepdims=True)
    w = np.exp(logw)
    total = w.sum(axis=0)
    bad = ~(np.isfinite(total) & (total > 0))
    if bad.any():
        w[:, bad] = 1.0
        total = w.sum(axis=0)
    return w / total, int(bad.sum())


def draw_weights(chain, latent_hat, i: int) -> np.ndarray:
    """Normalized weights over draws for the dyads sent by ``i``, shape (L, n).

    ``w[l, j]`` is proportional to the product of the Gaussian transition
    densities of ``latent_hat[i]`` and ``latent_hat[j]`` from their final
    positions in draw ``l``. Dyads whose weights all underflow fall back to
    uniform weights.
    """
    _check_chain(chain)
    logn = _log_transition(chain, np.asarray(latent_hat, dtype=float))
    return _normalize(logn[:, i, None] + logn)[0]


def predict_edge_probs(chain, latent_hat=None, return_ess: bool = False):
    """Weighted average over draws of the edge probability at ``latent_hat``.

    Returns an (n, n) matrix with a zero diagonal, plus the per-dyad
    effective sample size when ``return_ess`` is set.
    """
    _check_chain(chain)
    if latent_hat is None:
        latent_hat = predict_latent(chain)
    latent_hat = np.asarray(latent_hat, dtype=float)
    logn = _log_transition(chain, latent_hat)
    n = latent_hat.shape[0]
    d = np.sqrt(((latent_hat[:, None] - latent_hat[None]) ** 2).sum(-1))
    r = chain.radii / chain.radii.sum(axis=1, keepdims=True)
    b_in = chain.beta_in[:, None]
    b_out = chain.beta_out[:, None]
    P = np.zeros((n, n))
    ess = np.zeros((n, n))
    n_bad = 0
    for i in range(n):
        w, bad = _normalize(logn[:, i, None] + logn)
        n_bad += bad
        e = b_in * (1 - d[i][None] / r) + b_out * (1 - d[i][None] / r[:, i, None])
        P[i] = (w * special.expit(e)).sum(axis=0)
        ess[i] = 1.0 / (w**2).sum(axis=0)
    if n_bad:
        logger.warning("draw weights degenerate for %d dyads; using uniform weights", n_bad)
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(ess, 0.0)
    return (P, ess) if return_ess else P


def predict(chain) -> PredictionResult:
    latent_hat = predict_latent(chain)
    P, ess = predict_edge_probs(chain, latent_hat, return_ess=True)
    return PredictionResult(latent_hat, P, ess)


def naive_average_predictor(Y: DynamicNetwork) -> np.ndarray:
    """Per-dyad mean of the observed values over time; 0.5 if never observed."""
    obs = Y.observed_mask
    ones = np.where(obs, Y.cells, 0).sum(axis=0)
    count = obs.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(count > 0, ones / np.maximum(count, 1), 0.5)
    np.fill_diagonal(P, 0.0)
    return P


def hard_threshold(P, cutoff: float = 0.5) -> np.ndarray:
    """Binary predictions ``P > cutoff`` (strict)."""
    if not 0 < cutoff < 1:
        raise ValueError("cutoff must be in (0, 1)")
    return (np.asarray(P) > cutoff).astype(np.int8)
