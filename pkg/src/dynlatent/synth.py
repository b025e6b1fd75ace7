"""Synthetic dynamic networks drawn from the model itself."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .model import MISSING, DynamicNetwork, ModelParams

logger = logging.getLogger(__name__)


@dataclass
class SimConfig:
    """Ground truth for one simulated data set.

    ``tau``/``sigma`` left as ``None`` are calibrated to ``target_density``
    (with ``sigma = tau / 5``). ``attraction_pairs`` holds
    ``(influenced, influencer, mu)`` triples.
    """

    n: int = 100
    T: int = 10
    p: int = 2
    beta_in: float = 1.0
    beta_out: float = 2.0
    tau: float | None = None
    sigma: float | None = None
    radii_alpha: np.ndarray | float = 2.0
    attraction_pairs: list = field(default_factory=list)
    missing_rate: float = 0.0
    seed: int = 0
    directed: bool = True
    target_density: float = 0.1

    def __post_init__(self):
        if self.n < 2 or self.T < 1 or self.p < 1:
            raise ValueError("need n >= 2, T >= 1, p >= 1")
        for name in ("tau", "sigma"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(np.asarray(self.radii_alpha) <= 0):
            raise ValueError("radii_alpha must be positive")
        if not 0 <= self.missing_rate < 1:
            raise ValueError("missing_rate must be in [0, 1)")
        if not self.directed and self.beta_in != self.beta_out:
            raise ValueError("undirected networks need beta_in == beta_out")
        for i, j, mu in self.attraction_pairs:
            if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"invalid attraction pair ({i}, {j})")
            if mu < 0:
                raise ValueError("attraction mu must be non-negative")

    @property
    def alpha(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.radii_alpha, dtype=float), (self.n,)).copy()


@dataclass
class Simulation:
    network: DynamicNetwork
    X: np.ndarray
    params: ModelParams
    config: SimConfig
    complete: np.ndarray  # edge values before masking

    @property
    def influenced(self) -> set:
        return {int(i) for i, j, mu in self.config.attraction_pairs if mu > 0}


def plant_attraction(n: int, k: int, mu: float, rng) -> list:
    """Pick ``k`` influenced actors, each paired with an influencer among the rest."""
    rng = np.random.default_rng(rng)
    if 2 * k > n:
        raise ValueError("need at least 2k actors")
    perm = rng.permutation(n)
    influenced, others = perm[:k], perm[k:]
    influencers = rng.choice(others, size=k, replace=True)
    return [(int(i), int(j), float(mu)) for i, j in zip(influenced, influencers)]


def _attraction_order(pairs, n):
    influencer = {i: j for i, j, _ in pairs}
    done = set(range(n)) - set(influencer)
    order = []
    pending = list(influencer)
    while pending:
        ready = [i for i in pending if influencer[i] in done]
        if not ready:
            raise ValueError("cyclic attraction pairs")
        for i in ready:
            order.append(i)
            done.add(i)
        pending = [i for i in pending if i not in done]
    return order


def simulate_positions(n, T, p, tau, sigma, pairs, rng) -> np.ndarray:
    """Gaussian random walks; influenced actors drift by ``mu`` toward their influencer."""
    Z = rng.standard_normal((n, T, p))
    X = np.empty((n, T, p))
    X[:, 0] = tau * Z[:, 0]
    drift = {i: (j, mu) for i, j, mu in pairs}
    order = _attraction_order(pairs, n) if pairs else []
    for t in range(1, T):
        X[:, t] = X[:, t - 1] + sigma * Z[:, t]
        for i in order:
            j, mu = drift[i]
            if mu == 0:
                continue
            v = X[j, t] - X[i, t - 1]
            norm = np.linalg.norm(v)
            if norm > 0:
                X[i, t] += mu * v / norm
    return X


def draw_edges(X, params: ModelParams, rng, directed=True) -> np.ndarray:
    n, T, _ = X.shape
    Y = np.zeros((T, n, n), dtype=np.int8)
    r = params.radii
    for t in range(T):
        d = np.sqrt(((X[:, None, t] - X[None, :, t]) ** 2).sum(-1))
        e = params.beta_in * (1 - d / r[None, :]) + params.beta_out * (1 - d / r[:, None])
        draw = rng.random((n, n)) < special.expit(e)
        if not directed:
            draw = np.triu(draw, 1)
            draw = draw | draw.T
        np.fill_diagonal(draw, False)
        Y[t] = draw
    return Y


def inject_missingness(Y: DynamicNetwork, rate: float, rng) -> DynamicNetwork:
    """Mark each off-diagonal cell missing independently with probability ``rate``."""
    if not 0 <= rate < 1:
        raise ValueError("rate must be in [0, 1)")
    rng = np.random.default_rng(rng)
    if rate == 0:
        return Y.with_cells(Y.cells)
    mask = rng.random(Y.cells.shape) < rate
    if not Y.directed:
        mask = np.triu(mask, 1)
        mask = mask | mask.transpose(0, 2, 1)
    mask &= Y.offdiag
    cells = Y.cells.copy()
    cells[mask] = MISSING
    return Y.with_cells(cells)


def expected_density(tau, radii_draws, Z, beta_in, beta_out) -> float:
    """Mean time-1 edge probability over fixed radii and standard-normal draws."""
    out = 0.0
    for r, z in zip(radii_draws, Z):
        X = tau * z
        d = np.sqrt(((X[:, None] - X[None, :]) ** 2).sum(-1))
        e = beta_in * (1 - d / r[None, :]) + beta_out * (1 - d / r[:, None])
        P = special.expit(e)
        np.fill_diagonal(P, 0.0)
        out += P.sum() / (len(r) * (len(r) - 1))
    return out / len(radii_draws)


def calibrate_scales(n, radii_alpha, beta_in, beta_out, target_density, rng, p=2, n_rep=20):
    """Bisection on tau (with sigma = tau / 5) to hit an expected time-1 density.

    Uses common random numbers so the density is monotone in tau. If the
    target is out of reach the nearest achievable tau is returned.
    """
    if not 0 < target_density <= 0.5:
        raise ValueError("target_density must be in (0, 0.5]")
    rng = np.random.default_rng(rng)
    alpha = np.broadcast_to(np.asarray(radii_alpha, dtype=float), (n,))
    radii = rng.dirichlet(alpha, size=n_rep)
    Z = rng.standard_normal((n_rep, n, p))

    def dens(log_tau):
        return expected_density(np.exp(log_tau), radii, Z, beta_in, beta_out)

    lo, hi = np.log(1e-8), np.log(1e3)
    if dens(lo) < target_density:
        logger.warning("target density %.3g unattainable; returning smallest tau", target_density)
        tau = float(np.exp(lo))
        return tau, tau / 5
    if dens(hi) > target_density:
        logger.warning("target density %.3g unattainable; returning largest tau", target_density)
        tau = float(np.exp(hi))
        return tau, tau / 5
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if dens(mid) > target_density:
            lo = mid
        else:
            hi = mid
    tau = float(np.exp(0.5 * (lo + hi)))
    return tau, tau / 5


def generate(config: SimConfig) -> Simulation:
    """Draw radii, trajectories, edges and an MCAR mask, in that order."""
    rng = np.random.default_rng(config.seed)
    tau, sigma = config.tau, config.sigma
    if tau is None:
        tau, sig = calibrate_scales(config.n, config.alpha, config.beta_in, config.beta_out,
                                    config.target_density, rng.integers(2**32), p=config.p)
        sigma = sig if sigma is None else sigma
    elif sigma is None:
        sigma = tau / 5
    radii = rng.dirichlet(config.alpha)
    radii = np.clip(radii, 1e-300, None)
    radii = radii / radii.sum()
    X = simulate_positions(config.n, config.T, config.p, tau, sigma, config.attraction_pairs, rng)
    params = ModelParams(tau**2, sigma**2, config.beta_in, config.beta_out, radii)
    Y = draw_edges(X, params, rng, config.directed)
    net = DynamicNetwork(Y, directed=config.directed)
    if config.missing_rate > 0:
        net = inject_missingness(net, config.missing_rate, rng)
    return Simulation(net, X, params, config, Y)


def generate_planted(config: SimConfig, n_influenced: int, mu: float | None = None) -> Simulation:
    """Simulate with ``n_influenced`` random influence pairs replacing ``config.attraction_pairs``.

    Scales are calibrated first when unset so that ``mu`` can default to
    ``2 * sigma``.
    """
    tau, sigma = config.tau, config.sigma
    if tau is None:
        draw = np.random.default_rng(config.seed).integers(2**32)
        tau, sig = calibrate_scales(config.n, config.alpha, config.beta_in, config.beta_out,
                                    config.target_density, draw, p=config.p)
        sigma = sig if sigma is None else sigma
    elif sigma is None:
        sigma = tau / 5
    mu = 2 * sigma if mu is None else mu
    pairs = plant_attraction(config.n, n_influenced, mu, np.random.default_rng([config.seed, 1]))
    return generate(replace(config, tau=float(tau), sigma=float(sigma), attraction_pairs=pairs))
