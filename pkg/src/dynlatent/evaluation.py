"""Evaluation metrics and a joint-distribution test of the sampler."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .model import DynamicNetwork, ModelParams, PriorConfig, edge_prob_matrix
from .sampler import ChainConfig, GibbsSampler, draw_inv_gamma
from .synth import draw_edges


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have the same length")
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative label")
    ranks = stats.rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def fitted_probabilities(chain) -> np.ndarray:
    """Edge probabilities (T, n, n) at the posterior means."""
    X_hat = chain.posterior_mean_positions()
    params = chain.posterior_mean_params()
    return np.stack([edge_prob_matrix(X_hat[:, t], params) for t in range(X_hat.shape[1])])


def fit_auc(Y: DynamicNetwork, chain, undirected: bool = False) -> float:
    """AUC of posterior-mean edge probabilities on all observed cells, pooled over time.

    ``undirected`` scores each unordered pair by the probability of a tie in
    either direction against the label ``max(y_ij, y_ji)``.
    """
    P = fitted_probabilities(chain)
    obs = Y.observed_mask & Y.offdiag
    if undirected:
        P = to_undirected_scores(P)
        labels = np.maximum(Y.cells, Y.cells.transpose(0, 2, 1))
        obs = obs & obs.transpose(0, 2, 1) & np.triu(np.ones((Y.n, Y.n), dtype=bool), 1)
        cells = labels
    else:
        cells = Y.cells
    if not obs.any():
        raise ValueError("no observed cells to evaluate")
    return auc(P[obs], cells[obs])


def to_undirected_scores(P) -> np.ndarray:
    """Probability of a tie in at least one direction, ``1 - (1-P_ij)(1-P_ji)``."""
    P = np.asarray(P, dtype=float)
    return 1.0 - (1.0 - P) * (1.0 - np.swapaxes(P, -1, -2))


def to_undirected_labels(Y) -> np.ndarray:
    Y = np.asarray(Y)
    return np.maximum(Y, np.swapaxes(Y, -1, -2))


@dataclass
class DistanceRatios:
    ratios: np.ndarray
    skipped: int

    @property
    def quantiles(self) -> dict:
        q = np.quantile(self.ratios, [0.05, 0.25, 0.5, 0.75, 0.95])
        return dict(zip(("q05", "q25", "median", "q75", "q95"), map(float, q)))

    @property
    def iqr(self) -> float:
        q = self.quantiles
        return q["q75"] - q["q25"]


def distance_ratio_distribution(X_hat, X_true) -> DistanceRatios:
    """Estimated over true pairwise distances for every unordered pair and time."""
    X_hat = np.asarray(X_hat, dtype=float)
    X_true = np.asarray(X_true, dtype=float)
    if X_hat.shape != X_true.shape:
        raise ValueError("X_hat and X_true must have the same shape")
    n, T, _ = X_hat.shape
    iu = np.triu_indices(n, 1)
    out, skipped = [], 0
    for t in range(T):
        dh = np.sqrt(((X_hat[:, None, t] - X_hat[None, :, t]) ** 2).sum(-1))[iu]
        dt = np.sqrt(((X_true[:, None, t] - X_true[None, :, t]) ** 2).sum(-1))[iu]
        ok = dt > 0
        skipped += int((~ok).sum())
        out.append(dh[ok] / dt[ok])
    return DistanceRatios(np.concatenate(out), skipped)


def detection_scores(reports, truth, n: int):
    """Actor-level sensitivity and specificity of attraction detection.

    ``truth`` lists planted ``(influenced, influencer[, mu])`` tuples. An
    actor counts as detected if any report names it as influenced.
    Sensitivity is NaN when nothing was planted.
    """
    influenced = {int(p[0]) for p in truth}
    detected = {int(r.influenced) for r in reports}
    others = set(range(n)) - influenced
    sens = len(detected & influenced) / len(influenced) if influenced else float("nan")
    spec = len(others - detected) / len(others) if others else float("nan")
    return sens, spec


def mse(P, Y_true, mask=None) -> float:
    """Mean squared difference between probabilities and binary outcomes."""
    P = np.asarray(P, dtype=float)
    Y_true = np.asarray(Y_true, dtype=float)
    if mask is not None:
        P, Y_true = P[mask], Y_true[mask]
    if P.size == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean((P - Y_true) ** 2))


# ---------------------------------------------------------------------------
# Joint-distribution test
# ---------------------------------------------------------------------------

GEWEKE_STATS = ("tau2", "sigma2", "beta_in", "beta_out", "r0", "edges")


def geweke_prior(n: int) -> PriorConfig:
    """Proper prior with finite moments, suited to the joint-distribution test."""
    return PriorConfig(nu_in=1.0, xi_in=0.25, nu_out=1.0, xi_out=0.25, theta_sigma=6.0,
                       phi_sigma=1.0, theta_tau=6.0, phi_tau=5.0, alpha=np.full(n, 5.0))


def prior_draw(prior: PriorConfig, n: int, T: int, p: int, rng):
    """One draw of (X, params) from the prior."""
    prior = prior.resolve(n)
    tau2 = draw_inv_gamma(rng, prior.theta_tau, prior.phi_tau)
    sigma2 = draw_inv_gamma(rng, prior.theta_sigma, prior.phi_sigma)
    b_in = prior.nu_in + np.sqrt(prior.xi_in) * rng.standard_normal()
    b_out = prior.nu_out + np.sqrt(prior.xi_out) * rng.standard_normal()
    radii = rng.dirichlet(prior.alpha)
    X = np.empty((n, T, p))
    X[:, 0] = np.sqrt(tau2) * rng.standard_normal((n, p))
    for t in range(1, T):
        X[:, t] = X[:, t - 1] + np.sqrt(sigma2) * rng.standard_normal((n, p))
    return X, ModelParams(tau2, sigma2, b_in, b_out, radii / radii.sum())


def _statistics(params: ModelParams, Y) -> np.ndarray:
    g = np.array([params.tau2, params.sigma2, params.beta_in, params.beta_out,
                  params.radii[0], float(Y.sum())])
    return np.concatenate([g, g**2])


def _batch_means_se(x, n_batches=50):
    m = len(x) // n_batches
    means = x[: m * n_batches].reshape(n_batches, m, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


@dataclass
class GewekeResult:
    names: list
    z: np.ndarray
    mc_mean: np.ndarray
    sc_mean: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def passed(self, bound: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z) < bound))


def geweke_joint_test(prior: PriorConfig | None = None, n: int = 4, T: int = 3, p: int = 2,
                      sweeps: int = 100_000, rng=None, sigma2_update=None, kappa: float = 50.0,
                      proposal_sd_latent: float = 0.5, proposal_sd_beta: float = 0.5,
                      directed: bool = True) -> GewekeResult:
    """Compare marginal-conditional and successive-conditional simulators.

    The first draws ``sweeps`` independent (params, data) pairs from the
    prior predictive. The second alternates one sampler sweep with a fresh
    data draw. For a correct sampler both target the same joint
    distribution, so the z-scores of first and second moments (using
    batch-means errors for the dependent chain) should be small.
    ``sigma2_update`` replaces the sampler's sigma2 block (fault injection).
    """
    if n > 5 or T > 3:
        raise ValueError("the joint-distribution test is meant for n <= 5, T <= 3")
    rng = np.random.default_rng(rng)
    prior = geweke_prior(n) if prior is None else prior.resolve(n)
    seeds = rng.spawn(3)
    mc_rng, sc_rng = seeds[0], seeds[1]

    mc = np.empty((sweeps, 2 * len(GEWEKE_STATS)))
    for k in range(sweeps):
        X, params = prior_draw(prior, n, T, p, mc_rng)
        Y = draw_edges(X, params, mc_rng, directed)
        mc[k] = _statistics(params, Y)

    X, params = prior_draw(prior, n, T, p, sc_rng)
    Y = draw_edges(X, params, sc_rng, directed)
    config = ChainConfig(iterations=sweeps + 1, burn_in=0, thin=1, kappa=kappa, seed=0,
                         proposal_sd_latent=proposal_sd_latent, proposal_sd_beta=proposal_sd_beta,
                         latent_dim=p)
    net = DynamicNetwork(Y, directed=directed)
    streams = dict(zip(("init", "latent", "tau2", "sigma2", "beta", "radii", "missing", "controls"),
                       (np.random.default_rng(s) for s in seeds[2].spawn(8))))
    sampler = GibbsSampler(net, prior, config, X, params, None, streams)
    if sigma2_update is not None:
        sampler.sigma2_update = sigma2_update
    data_rng = streams["missing"]
    sc = np.empty_like(mc)
    for k in range(sweeps):
        sampler.sweep()
        Y = draw_edges(sampler.X, sampler.params, data_rng, directed)
        sampler.set_data(Y)
        sc[k] = _statistics(sampler.params, Y)

    se_mc = mc.std(axis=0, ddof=1) / np.sqrt(sweeps)
    se_sc = _batch_means_se(sc)
    z = (mc.mean(axis=0) - sc.mean(axis=0)) / np.sqrt(se_mc**2 + se_sc**2)
    names = list(GEWEKE_STATS) + [f"{s}^2" for s in GEWEKE_STATS]
    return GewekeResult(names, z, mc.mean(axis=0), sc.mean(axis=0))


def sigma2_update_wrong_shape(X, prior: PriorConfig, rng) -> float:
    """A deliberately wrong sigma2 full conditional (shape missing the factor 1/2)."""
    n, T, p = X.shape
    steps = np.diff(X, axis=1)
    shape = prior.theta_sigma + n * p * (T - 1)
    scale = prior.phi_sigma + 0.5 * float((steps**2).sum())
    return draw_inv_gamma(rng, shape, scale)
