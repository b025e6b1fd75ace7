"""Edge attraction: detecting and summarizing drift of one actor toward another.

The extended transition lets influenced actor ``i`` step by a mean shift of
length ``mu >= 0`` aimed at the influencer's current position::

    X_it ~ N(X_i(t-1) + mu * u_ijt, sigma2 * I),
    u_ijt = (X_jt - X_i(t-1)) / ||X_jt - X_i(t-1)||.

Under a prior with mass ``p0`` at ``mu = 0`` and an exponential density with
mean ``lam`` elsewhere, the posterior mass at zero given one trajectory is
``1 / (1 + h)`` where ``h`` has a closed form in the mean scalar projection of
the steps onto ``u``. Averaging ``h`` over posterior draws gives ``pi0``.
Only two-dimensional latent spaces are supported.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass
class AttractionPriorConfig:
    """Mixture prior on the drift magnitude: ``p0`` at zero, Exp(mean ``lam``) above.

    ``lam=None`` defers to the mean step length of the posterior-mean
    trajectories.
    """

    p0: float = 0.5
    lam: float | None = None

    def __post_init__(self):
        if not 0 < self.p0 < 1:
            raise ValueError("p0 must be in (0, 1)")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")


@dataclass
class AttractionReport:
    influenced: int
    influencer: int
    gated: bool
    pi0: float
    mu_hat: float
    concentrations: np.ndarray = field(repr=False)
    mean_angles: np.ndarray = field(repr=False)

    @property
    def mean_concentration(self) -> float:
        return float(np.mean(self.concentrations)) if len(self.concentrations) else 0.0

    def to_dict(self) -> dict:
        return {
            "influenced": self.influenced, "influencer": self.influencer, "gated": self.gated,
            "pi0": self.pi0, "mu_hat": self.mu_hat,
            "mean_concentration": self.mean_concentration,
            "concentrations": [float(c) for c in self.concentrations],
            "mean_angles": [float(a) for a in self.mean_angles],
        }


def _check_planar(X):
    if X.shape[-1] != 2:
        raise ValueError(f"edge attraction needs a 2-dimensional latent space, got p={X.shape[-1]}")


def _projections(X, i, j):
    """Scalar projections for t = 2..T; ``X`` is (..., n, T, p)."""
    prev = X[..., i, :-1, :]
    step = X[..., i, 1:, :] - prev
    v = X[..., j, 1:, :] - prev
    norm = np.sqrt((v**2).sum(-1))
    dot = (step * v).sum(-1)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, dot / safe, 0.0)


def scalar_projection(X, i: int, j: int, t: int) -> float:
    """Step of ``i`` into time ``t`` projected onto the direction of ``j``.

    ``t`` is a zero-based time index and must be at least 1. Returns 0 when
    ``X_jt`` coincides with ``X_i(t-1)``.
    """
    X = np.asarray(X, dtype=float)
    _check_planar(X)
    if not 1 <= t < X.shape[1]:
        raise ValueError("t must index a time after the first")
    return float(_projections(X[:, t - 1:t + 1], i, j)[0])


def _log_h(mean_proj, sigma2, T, prior: AttractionPriorConfig, lam):
    m = T - 1
    z = (mean_proj - sigma2 / (lam * m)) / np.sqrt(sigma2 / m)
    log_phi = -0.5 * z**2 - LOG_SQRT_2PI
    return (np.log((1 - prior.p0) / (lam * prior.p0)) + special.log_ndtr(z)
            - 0.5 * np.log(m / sigma2) - log_phi)


def h_statistic(X, sigma2: float, i: int, j: int, prior: AttractionPriorConfig,
                lam: float | None = None) -> float:
    """Posterior odds against ``mu = 0`` for one trajectory set ``X`` (n, T, 2)."""
    X = np.asarray(X, dtype=float)
    _check_planar(X)
    T = X.shape[1]
    if T < 2:
        raise ValueError("need T >= 2")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    lam = prior.lam if lam is None else lam
    if lam is None:
        raise ValueError("lam must be given when the prior leaves it unset")
    s = _projections(X, i, j).mean()
    with np.errstate(over="ignore"):  # h = inf means zero null mass
        return float(np.exp(_log_h(s, sigma2, T, prior, lam)))


def default_lambda(X_hat) -> float:
    """Mean per-step displacement of the trajectories ``X_hat`` (n, T, p)."""
    X_hat = np.asarray(X_hat, dtype=float)
    if X_hat.shape[1] < 2:
        raise ValueError("need T >= 2")
    steps = np.sqrt((np.diff(X_hat, axis=1) ** 2).sum(-1))
    return float(steps.mean())


def _resolve_lambda(chain, prior):
    if prior.lam is not None:
        return prior.lam
    return default_lambda(chain.posterior_mean_positions())


def _pi0_from_log_h(log_h):
    log_mean = special.logsumexp(log_h, axis=0) - np.log(log_h.shape[0])
    return special.expit(-log_mean)


def posterior_null_mass(chain, i: int, j: int, prior: AttractionPriorConfig | None = None) -> float:
    """Posterior probability that ``i`` is not drawn toward ``j``."""
    if chain is None or len(chain) == 0:
        raise ValueError("chain has no stored draws")
    prior = AttractionPriorConfig() if prior is None else prior
    _check_planar(chain.X)
    if chain.T < 2:
        raise ValueError("need T >= 2")
    lam = _resolve_lambda(chain, prior)
    s = _projections(chain.X, i, j).mean(-1)
    return float(_pi0_from_log_h(_log_h(s, chain.sigma2, chain.T, prior, lam)))


def _distances(X_hat, i):
    return np.sqrt(((X_hat - X_hat[i][None]) ** 2).sum(-1))  # (n, T)


def social_circle_gate(X_hat, radii_hat, i: int, j: int) -> bool:
    """True if ``j`` is strictly inside either actor's radius at some time."""
    X_hat = np.asarray(X_hat, dtype=float)
    d = np.sqrt(((X_hat[i] - X_hat[j]) ** 2).sum(-1))
    return bool(np.any(d < radii_hat[i]) or np.any(d < radii_hat[j]))


def estimate_mu(X_hat, i: int, j: int) -> float:
    """Mean scalar projection of ``i`` toward ``j``, floored at zero."""
    X_hat = np.asarray(X_hat, dtype=float)
    _check_planar(X_hat)
    if X_hat.shape[1] < 2:
        raise ValueError("need T >= 2")
    return max(float(_projections(X_hat, i, j).mean()), 0.0)


def von_mises_params(X_hat, sigma2_hat: float, mu_hat: float, i: int, j: int):
    """Per-step von Mises concentrations and target angles for t = 2..T."""
    X_hat = np.asarray(X_hat, dtype=float)
    _check_planar(X_hat)
    prev = X_hat[i, :-1]
    step_len = np.sqrt(((X_hat[i, 1:] - prev) ** 2).sum(-1))
    v = X_hat[j, 1:] - prev
    return mu_hat * step_len / sigma2_hat, np.arctan2(v[:, 1], v[:, 0])


def von_mises_grid(concentrations, mean_angles, n_grid: int = 360):
    """Densities of each step's von Mises angle on an even grid over (-pi, pi]."""
    angles = np.linspace(-np.pi, np.pi, n_grid, endpoint=False) + np.pi / n_grid
    kappa = np.asarray(concentrations, dtype=float)[:, None]
    loc = np.asarray(mean_angles, dtype=float)[:, None]
    return angles, stats.vonmises.pdf(angles[None], kappa, loc=loc)


def polar_step_density(d, phi, mu: float, sigma: float):
    """Joint density of step length ``d`` and angle ``phi`` relative to the drift.

    Rice(d | mu, sigma) times von Mises(phi | 0, d * mu / sigma**2), both in
    log space with exponentially scaled Bessel functions.
    """
    if not sigma > 0 or mu < 0:
        raise ValueError("need sigma > 0 and mu >= 0")
    d = np.asarray(d, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(d < 0):
        raise ValueError("step length must be non-negative")
    s2 = sigma**2
    kappa = d * mu / s2
    log_i0 = np.log(special.i0e(kappa)) + kappa
    with np.errstate(divide="ignore"):
        log_rice = np.log(d) - np.log(s2) - (d**2 + mu**2) / (2 * s2) + log_i0
    log_vm = kappa * np.cos(phi) - np.log(2 * np.pi) - log_i0
    return np.exp(log_rice + log_vm)


def scan_all_pairs(chain, prior: AttractionPriorConfig | None = None, threshold: float = 0.5,
                   include_all: bool = False):
    """Test every gated ordered pair and report those with ``pi0 < threshold``.

    ``include_all`` also returns gated pairs above the threshold.
    """
    if chain is None or len(chain) == 0:
        raise ValueError("chain has no stored draws")
    prior = AttractionPriorConfig() if prior is None else prior
    _check_planar(chain.X)
    if chain.T < 2:
        raise ValueError("need T >= 2")
    X_hat = chain.posterior_mean_positions()
    params = chain.posterior_mean_params()
    r, s2 = params.radii, params.sigma2
    lam = _resolve_lambda(chain, prior)
    n = chain.n
    reports = []
    for i in range(n):
        d = _distances(X_hat, i)
        gate = np.any(d < r[i], axis=1) | np.any(d < r[:, None], axis=1)
        gate[i] = False
        js = np.flatnonzero(gate)
        if not js.size:
            continue
        s = np.stack([_projections(chain.X, i, j).mean(-1) for j in js], axis=1)  # (L, k)
        pi0 = _pi0_from_log_h(_log_h(s, chain.sigma2[:, None], chain.T, prior, lam))
        for j, p in zip(js, pi0):
            if p < threshold or include_all:
                mu = estimate_mu(X_hat, i, j)
                conc, ang = von_mises_params(X_hat, s2, mu, i, j)
                reports.append(AttractionReport(i, int(j), True, float(p), mu, conc, ang))
    return reports
