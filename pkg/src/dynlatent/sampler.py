"""Metropolis-Hastings within Gibbs sampler for the dynamic latent space model.

One sweep updates, in order: every latent position (random-walk MH, time
major), ``tau2`` and ``sigma2`` (conjugate inverse-gamma draws), ``beta_in``
and ``beta_out`` (random-walk MH), the radii (joint MH with a Dirichlet
proposal centred on the current value), and finally every missing dyad
(Bernoulli draw from the current edge probability).

Randomness comes from one master seed. ``numpy.random.SeedSequence(seed)``
is spawned into independent streams, one per block, in the order
``init, latent, tau2, sigma2, beta, radii, missing, controls``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, special
from scipy.sparse import csgraph

from . import _kernels
from .model import (
    DynamicNetwork,
    ModelParams,
    PriorConfig,
    _controls_from_current,
    log_dirichlet,
    log_likelihood_case_control,
    log_likelihood_exact,
    log_normal,
)

logger = logging.getLogger(__name__)

STREAMS = ("init", "latent", "tau2", "sigma2", "beta", "radii", "missing", "controls")
TARGET_ACCEPT = 0.25
MIN_RADIUS = 1e-12


@dataclass
class ChainConfig:
    """Settings of one MCMC run.

    ``proposal_sd_latent=None`` starts at half the initial step scale;
    ``kappa=None`` means ``1000 * n``; ``adapt_until=None`` means adapt
    through the burn-in. ``n0=0`` uses the exact likelihood throughout.
    """

    iterations: int = 10000
    burn_in: int = 2000
    thin: int = 10
    proposal_sd_latent: float | None = None
    proposal_sd_beta: float = 0.05
    kappa: float | None = None
    n0: int = 0
    seed: int = 0
    adapt_until: int | None = None
    latent_dim: int = 2
    adapt_every: int = 50

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.n0 < 0:
            raise ValueError("n0 must be >= 0")
        if self.proposal_sd_latent is not None and self.proposal_sd_latent < 0:
            raise ValueError("proposal_sd_latent must be >= 0")
        if self.proposal_sd_beta < 0:
            raise ValueError("proposal_sd_beta must be >= 0")
        if self.adapt_every < 1:
            raise ValueError("adapt_every must be >= 1")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    @property
    def adapt_end(self) -> int:
        return self.burn_in if self.adapt_until is None else self.adapt_until

    def streams(self) -> dict:
        seqs = np.random.SeedSequence(self.seed).spawn(len(STREAMS))
        return {name: np.random.default_rng(s) for name, s in zip(STREAMS, seqs)}


@dataclass
class PosteriorChain:
    """Stored, Procrustes-aligned posterior draws.

    ``X`` has shape (L, n, T, p); ``imputed`` has shape (L, M) with columns
    ordered like :meth:`DynamicNetwork.missing_index`.
    """

    X: np.ndarray
    tau2: np.ndarray
    sigma2: np.ndarray
    beta_in: np.ndarray
    beta_out: np.ndarray
    radii: np.ndarray
    imputed: np.ndarray
    reference: np.ndarray
    acceptance: dict
    seed: int
    directed: bool = True
    config: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def T(self) -> int:
        return self.X.shape[2]

    @property
    def p(self) -> int:
        return self.X.shape[3]

    def params(self, l: int) -> ModelParams:
        r = self.radii[l]
        return ModelParams(float(self.tau2[l]), float(self.sigma2[l]), float(self.beta_in[l]),
                           float(self.beta_out[l]), r / r.sum())

    def posterior_mean_positions(self) -> np.ndarray:
        return self.X.mean(axis=0)

    def posterior_mean_params(self) -> ModelParams:
        r = self.radii.mean(axis=0)
        return ModelParams(float(self.tau2.mean()), float(self.sigma2.mean()),
                           float(self.beta_in.mean()), float(self.beta_out.mean()), r / r.sum())

    def imputation_mean(self) -> np.ndarray:
        return self.imputed.mean(axis=0) if self.imputed.size else np.zeros(0)

    def save(self, path) -> None:
        import json

        from .io import save_npz

        # timing is left out so identical runs give identical files
        save_npz(path, dict(
            X=self.X, tau2=self.tau2, sigma2=self.sigma2, beta_in=self.beta_in,
            beta_out=self.beta_out, radii=self.radii, imputed=self.imputed,
            reference=self.reference,
            meta=np.array(json.dumps({"acceptance": self.acceptance, "seed": self.seed,
                                      "directed": self.directed, "config": self.config},
                                     sort_keys=True))))

    @classmethod
    def load(cls, path) -> "PosteriorChain":
        import json

        with np.load(path, allow_pickle=False) as f:
            meta = json.loads(str(f["meta"]))
            arrays = {k: f[k] for k in ("X", "tau2", "sigma2", "beta_in", "beta_out",
                                        "radii", "imputed", "reference")}
        return cls(**arrays, **meta)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _classical_mds(dist: np.ndarray, p: int) -> np.ndarray:
    n = dist.shape[0]
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (dist**2) @ J
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:p]
    vals = np.clip(vals[order], 0.0, None)
    out = vecs[:, order] * np.sqrt(vals)
    if out.shape[1] < p:
        out = np.hstack([out, np.zeros((n, p - out.shape[1]))])
    return out


def _capped_path_lengths(adj: np.ndarray, directed: bool = False) -> np.ndarray:
    sp = csgraph.shortest_path(adj.astype(float), directed=directed, unweighted=True)
    finite = np.isfinite(sp)
    cap = sp[finite].max() + 1.0 if finite.any() else 1.0
    sp[~finite] = cap
    return sp


def _fallback_current(Y: DynamicNetwork, imputed) -> np.ndarray:
    if imputed is not None or not Y.missing_mask.any():
        return Y.complete(imputed)
    out = Y.cells.copy()
    out[Y.missing_mask] = 0
    return out


def initialize(Y: DynamicNetwork, config: ChainConfig, imputed=None):
    """Starting latent positions and parameters.

    Every time slice starts at the same configuration: classical MDS of the
    shortest-path distances in the union of all slices (unreachable pairs
    at diameter + 1). When the union is dense the per-slice path lengths are
    averaged instead. A shared start avoids reflections between slices,
    which random-walk updates cannot undo. Radii are proportional to total
    degree + 1, both betas start at 1, and a global scale for the positions
    is chosen by maximising the likelihood. ``tau2`` is the per-coordinate
    variance of the initial positions and ``sigma2`` starts at
    ``tau2 / 100``.
    """
    ycur = _fallback_current(Y, imputed)
    n, T, p = Y.n, Y.T, config.latent_dim
    ties = (ycur == 1) | (ycur == 1).transpose(0, 2, 1)
    union = ties.any(axis=0)
    if union.sum() <= 0.5 * n * (n - 1):
        dist = _capped_path_lengths(union)
    else:
        dist = np.mean([_capped_path_lengths(ties[t]) for t in range(T)], axis=0)
    X = np.repeat(_classical_mds(dist, p)[:, None], T, axis=1)
    spread = np.sqrt((X**2).sum(-1).mean())
    if spread > 0:
        X /= spread
    else:
        # fully degenerate configuration: spread actors on a small circle
        ang = 2 * np.pi * np.arange(n) / n
        X[:, :, 0] = np.cos(ang)[:, None]
        if p > 1:
            X[:, :, 1] = np.sin(ang)[:, None]

    degree = (ycur == 1).sum(axis=(0, 2)) + (ycur == 1).sum(axis=(0, 1))
    radii = (degree + 1.0) / (degree + 1.0).sum()
    inv_r = 1.0 / radii
    X = np.ascontiguousarray(X)

    def neg_ll(log_c):
        ones, zeros = _kernels.stratum_sums(ycur, X * np.exp(log_c), 1.0, 1.0, inv_r)
        return -(ones.sum() + zeros.sum())

    grid = np.linspace(np.log(1e-5), np.log(10.0), 61)
    vals = [neg_ll(g) for g in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best = optimize.minimize_scalar(neg_ll, bounds=(lo, hi), method="bounded").x if hi > lo else grid[k]
    X = X * np.exp(best)

    tau2 = float(max((X[:, 0] ** 2).mean(), 1e-12))
    sigma2 = max(1e-2 * tau2, 1e-12)
    return X, ModelParams(tau2, sigma2, 1.0, 1.0, radii)


def attachment_probabilities(indegree: np.ndarray, path_len: np.ndarray, i: int) -> np.ndarray:
    """Link probabilities i -> j proportional to ``indegree_j / path_len_ij``.

    Unreachable targets get zero weight; if every weight vanishes the
    distribution is uniform over the other actors.
    """
    n = indegree.size
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(np.isfinite(path_len[i]) & (path_len[i] > 0), indegree / path_len[i], 0.0)
    w[i] = 0.0
    if w.sum() <= 0:
        w = np.ones(n)
        w[i] = 0.0
    return w / w.sum()


def impute_missing_init(Y: DynamicNetwork, rng) -> np.ndarray:
    """Preferential-attachment starting values for the missing dyads.

    For each (sender, time) slice with missing cells, draws
    ``round(d_i * m / (n - 1))`` targets among its ``m`` missing cells,
    where ``d_i`` is the sender's average outdegree, with probabilities from
    :func:`attachment_probabilities` on the aggregated observed graph.
    Returns values ordered like :meth:`DynamicNetwork.missing_index`.
    """
    rng = np.random.default_rng(rng)
    cells, miss, obs = Y.cells, Y.missing_mask, Y.observed_mask
    n = Y.n
    ones = cells == 1
    agg = ones.any(axis=0)
    indegree = ones.sum(axis=1).mean(axis=0)
    n_obs = obs.sum(axis=2)
    per_t = ones.sum(axis=2) / np.maximum(n_obs, 1) * (n - 1)
    seen = (n_obs > 0).sum(axis=0)
    outdeg = np.where(seen > 0, np.where(n_obs > 0, per_t, 0.0).sum(axis=0) / np.maximum(seen, 1), 0.0)
    path = csgraph.shortest_path(agg.astype(float), directed=True, unweighted=True)

    fill = np.zeros_like(cells)
    for t, i in zip(*np.nonzero(miss.any(axis=2))):
        cols = np.flatnonzero(miss[t, i])
        k = min(int(np.round(outdeg[i] * cols.size / (n - 1))), cols.size)
        if k == 0:
            continue
        w = attachment_probabilities(indegree, path, i)[cols]
        positive = np.flatnonzero(w > 0)
        take = min(k, positive.size)
        chosen = rng.choice(cols[positive], size=take, replace=False, p=w[positive] / w[positive].sum()) if take else np.empty(0, int)
        if take < k:
            rest = np.setdiff1d(cols, chosen)
            chosen = np.concatenate([chosen, rng.choice(rest, size=k - take, replace=False)])
        fill[t, i, chosen] = 1
    if not Y.directed:
        upper = np.triu(np.ones((n, n), dtype=bool), 1)
        fill = np.where(upper[None], fill, fill.transpose(0, 2, 1))
    return fill[miss].astype(np.int8)


# ---------------------------------------------------------------------------
# Procrustes
# ---------------------------------------------------------------------------


def _rotation(Xs: np.ndarray, X0s: np.ndarray) -> np.ndarray:
    M = Xs.T @ X0s
    U, S, Vt = np.linalg.svd(M)
    p = M.shape[0]
    if S.size < p or S[-1] <= 1e-12 * max(S[0], 1e-300):
        logger.warning("rank-deficient Procrustes cross-product; using identity")
        return np.eye(p)
    return U @ Vt


def procrustes_align(X, X0):
    """Orthogonal transform of the stacked (nT x p) trajectory matrix onto ``X0``.

    Returns ``(aligned, A)`` with ``aligned = X @ A`` row-wise.
    """
    X = np.asarray(X, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    if X.shape != X0.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {X0.shape}")
    p = X.shape[-1]
    A = _rotation(X.reshape(-1, p), X0.reshape(-1, p))
    return X @ A, A


# ---------------------------------------------------------------------------
# Single steps (functional versions; the sampler uses cached equivalents)
# ---------------------------------------------------------------------------


def draw_inv_gamma(rng, shape, scale):
    return scale / rng.gamma(shape)


def tau2_conditional(X, prior: PriorConfig):
    """Shape and scale of the inverse-gamma full conditional of tau2."""
    n, _, p = X.shape
    return prior.theta_tau + n * p / 2.0, prior.phi_tau + 0.5 * float((X[:, 0] ** 2).sum())


def sigma2_conditional(X, prior: PriorConfig):
    n, T, p = X.shape
    if T < 2:
        return prior.theta_sigma, prior.phi_sigma
    steps = np.diff(X, axis=1)
    return prior.theta_sigma + n * p * (T - 1) / 2.0, prior.phi_sigma + 0.5 * float((steps**2).sum())


def step_tau2(X, prior: PriorConfig, rng) -> float:
    return draw_inv_gamma(rng, *tau2_conditional(X, prior))


def step_sigma2(X, prior: PriorConfig, rng) -> float:
    return draw_inv_gamma(rng, *sigma2_conditional(X, prior))


def _local_arrays(Y, X, params, imputed):
    ycur = Y.complete(imputed) if Y.missing_mask.any() else Y.cells.copy()
    X = np.ascontiguousarray(X, dtype=float).copy()
    D = np.zeros(ycur.shape)
    L = np.zeros(ycur.shape)
    _kernels.fill_cache(ycur, X, params.beta_in, params.beta_out, 1.0 / params.radii, D, L)
    return ycur, X, D, L


def latent_log_ratio(X, params: ModelParams, Y: DynamicNetwork, imputed, t, i, proposal) -> float:
    """Log MH ratio for moving X_it to ``proposal`` using only actor i's terms."""
    ycur, X, D, L = _local_arrays(Y, X, params, imputed)
    step = np.asarray(proposal, dtype=float) - X[i, t]
    n = Y.n
    return _kernels.latent_log_ratio_exact(ycur, X, D, L, params.beta_in, params.beta_out,
                                           1.0 / params.radii, params.tau2, params.sigma2,
                                           Y.directed, i, t, step, np.empty(n), np.empty(n),
                                           np.empty(n))[0]


def step_latent(X, params: ModelParams, Y: DynamicNetwork, imputed, t, i, rng, proposal_sd):
    """Random-walk MH update of one position; returns ``(X_it, accepted)``."""
    rng = np.random.default_rng(rng)
    ycur, X, D, L = _local_arrays(Y, X, params, imputed)
    step = proposal_sd * rng.standard_normal(X.shape[2])
    log_u = np.log(rng.random())
    n = Y.n
    ok = _kernels.latent_update_exact(ycur, X, D, L, params.beta_in, params.beta_out,
                                      1.0 / params.radii, params.tau2, params.sigma2, Y.directed,
                                      i, t, step, log_u, np.empty(n), np.empty(n), np.empty(n))
    return X[i, t].copy(), bool(ok)


def _loglik(Y, X, params, imputed, controls):
    if controls is None:
        return log_likelihood_exact(Y, X, params, imputed)
    return log_likelihood_case_control(Y, X, params, controls, imputed)


def beta_log_prior(which: str, value: float, prior: PriorConfig) -> float:
    if which == "in":
        return float(log_normal(value, prior.nu_in, prior.xi_in))
    return float(log_normal(value, prior.nu_out, prior.xi_out))


def step_beta(which, X, params: ModelParams, Y: DynamicNetwork, imputed, prior: PriorConfig,
              rng, proposal_sd, controls=None):
    """Random-walk MH on ``beta_in`` (``which='in'``) or ``beta_out``.

    For undirected networks both coefficients move together. Uses the
    case-control likelihood when ``controls`` is given. Returns
    ``(params, accepted)``.
    """
    if which not in ("in", "out"):
        raise ValueError("which must be 'in' or 'out'")
    rng = np.random.default_rng(rng)
    cur = params.beta_in if which == "in" else params.beta_out
    new = cur + proposal_sd * rng.standard_normal()
    log_u = np.log(rng.random())
    if Y.directed:
        prop = params.copy(**{f"beta_{which}": new})
        log_prior = beta_log_prior(which, new, prior) - beta_log_prior(which, cur, prior)
    else:
        prop = params.copy(beta_in=new, beta_out=new)
        log_prior = beta_log_prior("in", new, prior) - beta_log_prior("in", cur, prior)
    log_ratio = _loglik(Y, X, prop, imputed, controls) - _loglik(Y, X, params, imputed, controls) + log_prior
    if log_u < log_ratio:
        return prop, True
    return params, False


def radii_log_ratio(r, r_star, loglik_cur, loglik_new, alpha, kappa) -> float:
    """MH log ratio for a Dirichlet(kappa * r) proposal, including its asymmetry."""
    return (loglik_new - loglik_cur
            + log_dirichlet(r_star, alpha) - log_dirichlet(r, alpha)
            + log_dirichlet(r, kappa * r_star) - log_dirichlet(r_star, kappa * r))


def propose_radii(r, kappa, rng):
    r_star = rng.dirichlet(kappa * r)
    if np.any(r_star < MIN_RADIUS) or not np.isfinite(r_star).all():
        return None
    return r_star / r_star.sum()


def step_radii(X, params: ModelParams, Y: DynamicNetwork, imputed, prior: PriorConfig, rng,
               kappa, controls=None):
    """Joint MH update of all radii; returns ``(params, accepted)``."""
    rng = np.random.default_rng(rng)
    prior = prior.resolve(params.n, params)
    r = params.radii
    r_star = propose_radii(r, kappa, rng)
    log_u = np.log(rng.random())
    if r_star is None:
        return params, False
    prop = params.copy(radii=r_star)
    ratio = radii_log_ratio(r, r_star, _loglik(Y, X, params, imputed, controls),
                            _loglik(Y, X, prop, imputed, controls), prior.alpha, kappa)
    if log_u < ratio:
        return prop, True
    return params, False


def missing_probabilities(Y: DynamicNetwork, X, params: ModelParams) -> np.ndarray:
    tt, ii, jj = Y.missing_index()
    X = np.asarray(X, dtype=float)
    d = np.sqrt(((X[ii, tt] - X[jj, tt]) ** 2).sum(-1))
    r = params.radii
    e = params.beta_in * (1.0 - d / r[jj]) + params.beta_out * (1.0 - d / r[ii])
    return special.expit(e)


def step_missing(Y: DynamicNetwork, X, params: ModelParams, rng) -> np.ndarray:
    """Fresh Bernoulli draw of every missing dyad (mirrored for undirected networks)."""
    rng = np.random.default_rng(rng)
    if Y.n_missing == 0:
        return np.zeros(0, dtype=np.int8)
    prob = missing_probabilities(Y, X, params)
    vals = (rng.random(prob.size) < prob).astype(np.int8)
    if not Y.directed:
        vals = _mirror(Y, vals)
    return vals


def _mirror(Y: DynamicNetwork, vals: np.ndarray) -> np.ndarray:
    tt, ii, jj = Y.missing_index()
    grid = np.zeros(Y.cells.shape, dtype=np.int8)
    grid[tt, ii, jj] = vals
    upper = ii < jj
    grid[tt[upper], jj[upper], ii[upper]] = vals[upper]
    return grid[tt, ii, jj]


# ---------------------------------------------------------------------------
# The sampler
# ---------------------------------------------------------------------------


class GibbsSampler:
    """Holds the chain state and performs sweeps.

    In exact mode (``n0 == 0``) per-dyad distances and log-likelihood terms
    are cached and patched in place; in case-control mode controls are
    redrawn at the start of every sweep and shared by all blocks of it.
    """

    def __init__(self, Y: DynamicNetwork, prior: PriorConfig, config: ChainConfig,
                 X, params: ModelParams, imputed, streams=None):
        self.Y = Y
        self.config = config
        self.prior = prior.resolve(Y.n, params)
        self.directed = Y.directed
        self.rng = streams if streams is not None else config.streams()
        self.X = np.ascontiguousarray(X, dtype=float).copy()
        self.tau2, self.sigma2 = params.tau2, params.sigma2
        self.beta_in, self.beta_out = params.beta_in, params.beta_out
        self.radii = params.radii.copy()
        self.miss = Y.missing_index()
        self.ycur = Y.complete(imputed) if Y.n_missing else Y.cells.copy()
        n, T, p = self.X.shape
        sd0 = config.proposal_sd_latent
        if sd0 is None:
            sd0 = 0.5 * np.sqrt(self.sigma2)
        self.sd_latent = np.full(n, float(sd0))
        self.sd_beta = {"in": config.proposal_sd_beta, "out": config.proposal_sd_beta}
        self.kappa = float(config.kappa if config.kappa is not None else 1000.0 * n)
        self.exact = config.n0 == 0
        self._ones_out = None
        self.sigma2_update = step_sigma2
        self.counts = {"latent": np.zeros(n), "beta_in": 0, "beta_out": 0, "radii": 0}
        if self.exact:
            self.D = np.zeros(self.ycur.shape)
            self.L = np.zeros(self.ycur.shape)
            self.Lbuf = np.zeros(self.ycur.shape)
            self._refill()

    # -- state ----------------------------------------------------------------
    @property
    def params(self) -> ModelParams:
        return ModelParams(self.tau2, self.sigma2, self.beta_in, self.beta_out, self.radii / self.radii.sum())

    @property
    def imputed(self) -> np.ndarray:
        return self.ycur[self.miss]

    def _refill(self):
        _kernels.fill_cache(self.ycur, self.X, self.beta_in, self.beta_out, 1.0 / self.radii, self.D, self.L)

    def set_data(self, ycur):
        """Replace the current edge values (used by joint-distribution tests)."""
        self.ycur = np.ascontiguousarray(ycur, dtype=np.int8)
        self._ones_out = None
        if self.exact:
            self._refill()

    def _scale(self, total):
        return total if self.directed else 0.5 * total

    def _loglik_cc(self, b_in, b_out, radii):
        ones_ptr, ones_idx, ctrl_ptr, ctrl_idx = self._cc_out
        d_ones, d_ctrl = self._cc_dist
        n, T = self.X.shape[0], self.X.shape[1]
        ones, ctrl = _kernels.case_control_sums_from_distances(
            n, T, b_in, b_out, 1.0 / radii, ones_ptr, ones_idx, d_ones, ctrl_ptr, ctrl_idx, d_ctrl)
        return self._scale(_kernels.combine(ones, ctrl, self._cc_out_w))

    # -- blocks ---------------------------------------------------------------
    def _latent(self):
        n, T, p = self.X.shape
        rng = self.rng["latent"]
        Z = rng.standard_normal((T, n, p))
        log_u = np.log(rng.random((T, n)))
        acc = np.zeros(n)
        inv_r = 1.0 / self.radii
        if self.exact:
            _kernels.latent_sweep_exact(self.ycur, self.X, self.D, self.L, self.beta_in, self.beta_out,
                                        inv_r, self.tau2, self.sigma2, self.directed,
                                        self.sd_latent, Z, log_u, acc)
        else:
            c = self._controls
            if self.directed:
                inn = (*self._ones_in, c.in_ptr, c.in_idx, c.in_weight)
            else:
                empty = np.zeros(1, dtype=np.int64)
                inn = (empty, empty, empty, empty, np.ones(1))
            _kernels.latent_sweep_cc(self.X, self.beta_in, self.beta_out, inv_r, self.tau2, self.sigma2,
                                     self.directed, self.sd_latent, Z, log_u,
                                     *self._ones_out, c.out_ptr, c.out_idx, c.out_weight, *inn, acc)
        return acc

    def _current_loglik(self):
        if self.exact:
            return self._scale(_kernels.cache_total(self.L))
        return self._loglik_cc(self.beta_in, self.beta_out, self.radii)

    def _proposal_loglik(self, b_in, b_out, radii):
        if self.exact:
            total = _kernels.terms_from_distances(self.ycur, self.D, b_in, b_out, 1.0 / radii, self.Lbuf)
            return self._scale(total)
        return self._loglik_cc(b_in, b_out, radii)

    def _accept_proposal(self):
        if self.exact:
            self.L, self.Lbuf = self.Lbuf, self.L

    def _beta(self, which, loglik):
        rng = self.rng["beta"]
        cur = self.beta_in if which == "in" else self.beta_out
        new = cur + self.sd_beta[which] * rng.standard_normal()
        log_u = np.log(rng.random())
        if self.directed:
            b_in, b_out = (new, self.beta_out) if which == "in" else (self.beta_in, new)
        else:
            b_in = b_out = new
        new_ll = self._proposal_loglik(b_in, b_out, self.radii)
        ratio = new_ll - loglik + beta_log_prior(which, new, self.prior) - beta_log_prior(which, cur, self.prior)
        if log_u < ratio:
            self.beta_in, self.beta_out = b_in, b_out
            self._accept_proposal()
            return True, new_ll
        return False, loglik

    def _radii(self, loglik):
        rng = self.rng["radii"]
        r_star = propose_radii(self.radii, self.kappa, rng)
        log_u = np.log(rng.random())
        if r_star is None:
            return False, loglik
        new_ll = self._proposal_loglik(self.beta_in, self.beta_out, r_star)
        ratio = radii_log_ratio(self.radii, r_star, loglik, new_ll, self.prior.alpha, self.kappa)
        if log_u < ratio:
            self.radii = r_star
            self._accept_proposal()
            return True, new_ll
        return False, loglik

    def _missing(self):
        if not self.miss[0].size:
            return
        tt, ii, jj = self.miss
        if self.exact:
            d = self.D[tt, ii, jj]
        else:
            d = np.sqrt(((self.X[ii, tt] - self.X[jj, tt]) ** 2).sum(-1))
        r = self.radii
        e = self.beta_in * (1.0 - d / r[jj]) + self.beta_out * (1.0 - d / r[ii])
        vals = (self.rng["missing"].random(e.size) < special.expit(e)).astype(np.int8)
        if not self.directed:
            vals = _mirror(self.Y, vals)
        self.ycur[tt, ii, jj] = vals
        if self.exact:
            _kernels.refresh_cells(self.ycur, self.D, self.L, self.beta_in, self.beta_out,
                                   1.0 / self.radii, tt, ii, jj)

    def _prepare_controls(self):
        self._controls = _controls_from_current(self.ycur, self.config.n0, self.rng["controls"], self.directed)
        c = self._controls
        # without missing cells the edge set never changes
        if self.miss[0].size or self._ones_out is None:
            self._ones_out = _kernels.edge_lists(self.ycur)
            if self.directed:
                self._ones_in = _kernels.edge_lists(np.ascontiguousarray(self.ycur.transpose(0, 2, 1)))
        self._cc_out = (*self._ones_out, c.out_ptr, c.out_idx)
        self._cc_out_w = c.out_weight

    def sweep(self):
        """One full sweep; returns per-block accept indicators."""
        if not self.exact:
            self._prepare_controls()
        acc_latent = self._latent()
        if not self.exact:
            self._cc_dist = _kernels.case_control_distances(self.X, *self._cc_out)
        self.tau2 = step_tau2(self.X, self.prior, self.rng["tau2"])
        self.sigma2 = self.sigma2_update(self.X, self.prior, self.rng["sigma2"])
        ll = self._current_loglik()
        a_in, ll = self._beta("in", ll)
        if self.directed:
            a_out, ll = self._beta("out", ll)
        else:
            a_out = a_in
        a_r, ll = self._radii(ll)
        self._missing()
        return {"latent": acc_latent, "beta_in": a_in, "beta_out": a_out, "radii": a_r}

    def adapt(self, batch: dict, sweeps: int):
        T = self.X.shape[1]
        rate = batch["latent"] / (T * sweeps)
        self.sd_latent *= np.exp(2.0 * (rate - TARGET_ACCEPT))
        for which in ("in", "out"):
            self.sd_beta[which] *= np.exp(2.0 * (batch[f"beta_{which}"] / sweeps - TARGET_ACCEPT))
        self.kappa *= np.exp(-4.0 * (batch["radii"] / sweeps - TARGET_ACCEPT))


def run_chain(Y: DynamicNetwork, prior: PriorConfig | None = None, config: ChainConfig | None = None,
              callback=None) -> PosteriorChain:
    """Fit the model by MCMC and return the aligned, thinned draws.

    ``callback(sweep_index, sampler)`` is called after every sweep if given.
    """
    prior = PriorConfig() if prior is None else prior
    config = ChainConfig() if config is None else config
    if not isinstance(Y, DynamicNetwork):
        raise TypeError("Y must be a DynamicNetwork")
    streams = config.streams()
    started = time.perf_counter()
    imputed = impute_missing_init(Y, streams["init"]) if Y.n_missing else None
    X0, params0 = initialize(Y, config, imputed)
    sampler = GibbsSampler(Y, prior, config, X0, params0, imputed, streams)
    n, T, p = X0.shape
    Ld = config.n_draws
    M = Y.n_missing
    out = {
        "X": np.empty((Ld, n, T, p)), "tau2": np.empty(Ld), "sigma2": np.empty(Ld),
        "beta_in": np.empty(Ld), "beta_out": np.empty(Ld), "radii": np.empty((Ld, n)),
        "imputed": np.empty((Ld, M), dtype=np.int8),
    }
    batch = _zero_counts(n)
    post = _zero_counts(n)
    n_post = 0
    adapt_end = config.adapt_end
    block_time = {"sweeps": 0.0, "alignment": 0.0}
    stored = 0
    init_time = time.perf_counter() - started
    for s in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        acc = sampler.sweep()
        block_time["sweeps"] += time.perf_counter() - t0
        _add_counts(batch, acc)
        if s <= adapt_end:
            if s % config.adapt_every == 0:
                sampler.adapt(batch, config.adapt_every)
                batch = _zero_counts(n)
        else:
            _add_counts(post, acc)
            n_post += 1
        if s > config.burn_in and (s - config.burn_in) % config.thin == 0 and stored < Ld:
            t0 = time.perf_counter()
            out["X"][stored] = procrustes_align(sampler.X, X0)[0]
            block_time["alignment"] += time.perf_counter() - t0
            out["tau2"][stored] = sampler.tau2
            out["sigma2"][stored] = sampler.sigma2
            out["beta_in"][stored] = sampler.beta_in
            out["beta_out"][stored] = sampler.beta_out
            out["radii"][stored] = sampler.radii
            out["imputed"][stored] = sampler.imputed
            stored += 1
        if callback is not None:
            callback(s, sampler)
    acceptance = {}
    if n_post:
        acceptance = {
            "latent": float(post["latent"].sum() / (n_post * n * T)),
            "beta_in": post["beta_in"] / n_post,
            "beta_out": post["beta_out"] / n_post,
            "radii": post["radii"] / n_post,
        }
    acceptance["final_kappa"] = sampler.kappa
    acceptance["final_sd_beta"] = dict(sampler.sd_beta)
    acceptance["final_sd_latent_median"] = float(np.median(sampler.sd_latent))
    cfg = asdict(config)
    timing = {"initialization": init_time, **block_time, "total": time.perf_counter() - started}
    return PosteriorChain(**out, reference=X0, acceptance=acceptance, seed=config.seed,
                          directed=Y.directed, config=cfg, timing=timing)


def _zero_counts(n):
    return {"latent": np.zeros(n), "beta_in": 0, "beta_out": 0, "radii": 0}


def _add_counts(acc, new):
    acc["latent"] += new["latent"]
    for k in ("beta_in", "beta_out", "radii"):
        acc[k] += int(new[k])
