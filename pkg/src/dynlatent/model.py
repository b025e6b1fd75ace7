"""Data types, densities and likelihoods of the dynamic latent space model.

An edge from actor ``i`` to actor ``j`` at time ``t`` has log-odds

    eta_ijt = beta_in * (1 - d_ijt / r_j) + beta_out * (1 - d_ijt / r_i)

where ``d_ijt`` is the Euclidean distance between the two latent positions
and ``r`` are the actors' social-reach radii (positive, summing to one).
Latent positions follow a Gaussian random walk started at N(0, tau2 I).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import _kernels

MISSING = -1
RADII_TOL = 1e-12


@dataclass
class DynamicNetwork:
    """Longitudinal binary network with an observation mask.

    Parameters
    ----------
    cells : ndarray of shape (T, n, n)
        Entries are 1 (edge), 0 (no edge) or ``MISSING`` (-1). The diagonal
        is structurally excluded and stored as 0.
    directed : bool
        For undirected networks ``cells`` must be symmetric.
    actor_labels, time_labels : sequence of str / int, optional
    """

    cells: np.ndarray
    directed: bool = True
    actor_labels: tuple | None = None
    time_labels: tuple | None = None

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int8, copy=True)
        if cells.ndim == 2:
            cells = cells[None]
        if cells.ndim != 3 or cells.shape[1] != cells.shape[2]:
            raise ValueError(f"cells must have shape (T, n, n), got {cells.shape}")
        T, n, _ = cells.shape
        if n < 2 or T < 1:
            raise ValueError("need at least 2 actors and 1 time step")
        if not np.isin(cells, (0, 1, MISSING)).all():
            raise ValueError("cells must be 0, 1 or MISSING")
        idx = np.arange(n)
        cells[:, idx, idx] = 0
        if not self.directed and not (cells == cells.transpose(0, 2, 1)).all():
            raise ValueError("undirected network must have symmetric cells")
        self.cells = cells
        if self.actor_labels is not None:
            self.actor_labels = tuple(str(a) for a in self.actor_labels)
            if len(self.actor_labels) != n or len(set(self.actor_labels)) != n:
                raise ValueError("actor_labels must be n distinct labels")
        if self.time_labels is not None:
            self.time_labels = tuple(self.time_labels)
            if len(self.time_labels) != T:
                raise ValueError("time_labels must have length T")

    @property
    def n(self) -> int:
        return self.cells.shape[1]

    @property
    def T(self) -> int:
        return self.cells.shape[0]

    @property
    def offdiag(self) -> np.ndarray:
        return ~np.eye(self.n, dtype=bool)[None].repeat(self.T, axis=0)

    @property
    def missing_mask(self) -> np.ndarray:
        return self.cells == MISSING

    @property
    def observed_mask(self) -> np.ndarray:
        return (self.cells != MISSING) & self.offdiag

    def missing_index(self):
        """``(t, i, j)`` index arrays of the missing cells, in C order."""
        return np.nonzero(self.missing_mask)

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    def complete(self, imputed=None) -> np.ndarray:
        """Current 0/1 tensor with ``imputed`` written into the missing cells.

        ``imputed`` is either a vector ordered like :meth:`missing_index` or
        a full ``(T, n, n)`` array from which the missing cells are read.
        """
        mask = self.missing_mask
        out = self.cells.copy()
        if not mask.any():
            return out
        if imputed is None:
            raise ValueError("missing cells present but no imputed values given")
        imputed = np.asarray(imputed)
        vals = imputed[mask] if imputed.shape == out.shape else imputed.ravel()
        if vals.size != mask.sum():
            raise ValueError(f"expected {mask.sum()} imputed values, got {vals.size}")
        if not np.isin(vals, (0, 1)).all():
            raise ValueError("imputed values must be 0 or 1")
        out[mask] = vals
        return out

    def to_array(self) -> np.ndarray:
        """Float copy with NaN in missing cells."""
        out = self.cells.astype(float)
        out[self.missing_mask] = np.nan
        return out

    @classmethod
    def from_array(cls, Y, directed=True, **kwargs) -> "DynamicNetwork":
        """Build from a ``(T, n, n)`` array where NaN (or -1) marks a missing dyad."""
        arr = np.asarray(Y, dtype=float)
        cells = np.where(np.isnan(arr), MISSING, arr).astype(np.int8)
        return cls(cells, directed=directed, **kwargs)

    def with_cells(self, cells) -> "DynamicNetwork":
        return DynamicNetwork(cells, self.directed, self.actor_labels, self.time_labels)


@dataclass
class ModelParams:
    """Global parameters ``(tau2, sigma2, beta_in, beta_out, radii)``."""

    tau2: float
    sigma2: float
    beta_in: float
    beta_out: float
    radii: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        if not (self.tau2 > 0 and self.sigma2 > 0):
            raise ValueError("tau2 and sigma2 must be positive")
        if self.radii.ndim != 1 or np.any(self.radii <= 0):
            raise ValueError("radii must be a vector of positive reals")
        if abs(self.radii.sum() - 1.0) > RADII_TOL * max(1, self.radii.size):
            raise ValueError(f"radii must sum to 1 (sum={self.radii.sum()!r})")

    @property
    def n(self) -> int:
        return self.radii.size

    def copy(self, **changes) -> "ModelParams":
        kw = dict(tau2=self.tau2, sigma2=self.sigma2, beta_in=self.beta_in,
                  beta_out=self.beta_out, radii=self.radii.copy())
        kw.update(changes)
        return ModelParams(**kw)


@dataclass
class PriorConfig:
    """Hyperparameters of the conjugate / Dirichlet priors.

    ``beta_in ~ N(nu_in, xi_in)``, ``beta_out ~ N(nu_out, xi_out)`` (second
    argument is a variance), ``sigma2 ~ IG(theta_sigma, phi_sigma)``,
    ``tau2 ~ IG(theta_tau, phi_tau)``, ``radii ~ Dirichlet(alpha)``.

    A scale left as ``None`` is filled in by :meth:`resolve` so that the
    prior mean matches the initial estimate (shape kept as given).
    ``alpha=None`` means a flat Dirichlet.
    """

    nu_in: float = 0.0
    xi_in: float = 100.0
    nu_out: float = 0.0
    xi_out: float = 100.0
    theta_sigma: float = 2.05
    phi_sigma: float | None = None
    theta_tau: float = 2.05
    phi_tau: float | None = None
    alpha: np.ndarray | None = None

    def __post_init__(self):
        for name in ("xi_in", "xi_out", "theta_sigma", "theta_tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("phi_sigma", "phi_tau"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha is not None:
            self.alpha = np.asarray(self.alpha, dtype=float)
            if np.any(self.alpha <= 0):
                raise ValueError("alpha must be strictly positive")

    def resolve(self, n: int, init: ModelParams | None = None) -> "PriorConfig":
        """Fully specified copy for ``n`` actors."""
        phi_sigma, phi_tau = self.phi_sigma, self.phi_tau
        if phi_sigma is None or phi_tau is None:
            if init is None:
                raise ValueError("unresolved IG scales need initial parameters")
            if phi_sigma is None:
                phi_sigma = (self.theta_sigma - 1.0) * init.sigma2 if self.theta_sigma > 1 else init.sigma2
            if phi_tau is None:
                phi_tau = (self.theta_tau - 1.0) * init.tau2 if self.theta_tau > 1 else init.tau2
        alpha = np.ones(n) if self.alpha is None else np.broadcast_to(self.alpha, (n,)).astype(float)
        return PriorConfig(self.nu_in, self.xi_in, self.nu_out, self.xi_out,
                           self.theta_sigma, float(phi_sigma), self.theta_tau, float(phi_tau), alpha)


@dataclass
class ControlSet:
    """Case-control subsample of zero dyads for one imputation state.

    ``out_*`` strata are (sender i, time t) and drive the global likelihood;
    ``in_*`` strata are (receiver i, time t) and are only used by the latent
    position updates of directed networks. Within a stratum indices are
    ascending and ``weight = stratum_size / n_sampled``.
    """

    n0: int
    n: int
    T: int
    out_ptr: np.ndarray
    out_idx: np.ndarray
    out_weight: np.ndarray
    out_size: np.ndarray
    in_ptr: np.ndarray = field(repr=False, default=None)
    in_idx: np.ndarray = field(repr=False, default=None)
    in_weight: np.ndarray = field(repr=False, default=None)
    in_size: np.ndarray = field(repr=False, default=None)

    def controls(self, i: int, t: int, receiver: bool = False) -> np.ndarray:
        s = t * self.n + i
        ptr, idx = (self.in_ptr, self.in_idx) if receiver else (self.out_ptr, self.out_idx)
        return idx[ptr[s]:ptr[s + 1]]

    def stratum_size(self, i: int, t: int, receiver: bool = False) -> int:
        return int((self.in_size if receiver else self.out_size)[t * self.n + i])

    def weight(self, i: int, t: int, receiver: bool = False) -> float:
        return float((self.in_weight if receiver else self.out_weight)[t * self.n + i])


# ---------------------------------------------------------------------------
# Observation model
# ---------------------------------------------------------------------------


def _check_dyad(i, j, t, X):
    n, T = X.shape[0], X.shape[1]
    if not (0 <= i < n and 0 <= j < n and 0 <= t < T):
        raise IndexError(f"dyad ({i}, {j}, {t}) out of range for n={n}, T={T}")
    if i == j:
        raise ValueError("self-dyads are excluded from the model")


def eta(i, j, t, X, params: ModelParams) -> float:
    """Log-odds of an edge i -> j at time t."""
    X = np.asarray(X, dtype=float)
    _check_dyad(i, j, t, X)
    d = float(np.linalg.norm(X[i, t] - X[j, t]))
    r = params.radii
    return params.beta_in * (1.0 - d / r[j]) + params.beta_out * (1.0 - d / r[i])


def edge_prob(i, j, t, X, params: ModelParams) -> float:
    return float(special.expit(eta(i, j, t, X, params)))


def eta_matrix(Xt, params: ModelParams) -> np.ndarray:
    """All log-odds at one time slice; ``Xt`` has shape (n, p). Diagonal is 0."""
    Xt = np.asarray(Xt, dtype=float)
    d = np.sqrt(((Xt[:, None, :] - Xt[None, :, :]) ** 2).sum(-1))
    inv_r = 1.0 / params.radii
    e = params.beta_in * (1.0 - d * inv_r[None, :]) + params.beta_out * (1.0 - d * inv_r[:, None])
    np.fill_diagonal(e, 0.0)
    return e


def edge_prob_matrix(Xt, params: ModelParams) -> np.ndarray:
    P = special.expit(eta_matrix(Xt, params))
    np.fill_diagonal(P, 0.0)
    return P


def _current(Y: DynamicNetwork, imputed) -> np.ndarray:
    return Y.complete(imputed)


def _check_shapes(Y: DynamicNetwork, X, params):
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 3 or X.shape[:2] != (Y.n, Y.T):
        raise ValueError(f"X must have shape (n={Y.n}, T={Y.T}, p), got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("latent positions must be finite")
    if params.n != Y.n:
        raise ValueError("radii length does not match the network")
    return X


def log_likelihood_exact(Y: DynamicNetwork, X, params: ModelParams, imputed=None) -> float:
    """Full Bernoulli log-likelihood, imputed values standing in for missing cells.

    Undirected networks count each unordered pair once.
    """
    X = _check_shapes(Y, X, params)
    ycur = _current(Y, imputed)
    ones, zeros = _kernels.stratum_sums(ycur, X, params.beta_in, params.beta_out, 1.0 / params.radii)
    total = _kernels.combine(ones, zeros, np.ones_like(ones))
    return total if Y.directed else 0.5 * total


def log_likelihood_case_control(Y: DynamicNetwork, X, params: ModelParams,
                                controls: ControlSet, imputed=None) -> float:
    """Case-control estimate: exact edge terms plus weighted sampled zero terms.

    Unbiased for :func:`log_likelihood_exact` over the control sampling, and
    equal to it bit-for-bit when every stratum is sampled exhaustively.
    """
    X = _check_shapes(Y, X, params)
    ycur = _current(Y, imputed)
    if controls.n != Y.n or controls.T != Y.T:
        raise ValueError("control set does not match the network")
    bad = (controls.out_size > 0) & (np.diff(controls.out_ptr) == 0)
    if bad.any():
        raise ValueError("empty control sample for a non-empty stratum")
    ones_ptr, ones_idx = _kernels.edge_lists(ycur)
    ones, ctrl = _kernels.case_control_sums(X, params.beta_in, params.beta_out, 1.0 / params.radii,
                                            ones_ptr, ones_idx, controls.out_ptr, controls.out_idx)
    total = _kernels.combine(ones, ctrl, controls.out_weight)
    return total if Y.directed else 0.5 * total


def sample_controls(Y: DynamicNetwork, imputed, n0: int, rng) -> ControlSet:
    """Draw ``min(n0, stratum size)`` zero dyads per (actor, time) stratum.

    The zero set uses the current values: observed zeros and missing cells
    currently imputed as zero.
    """
    if n0 < 1:
        raise ValueError("n0 must be at least 1")
    rng = np.random.default_rng(rng)
    ycur = _current(Y, imputed)
    return _controls_from_current(ycur, n0, rng, Y.directed)


def _controls_from_current(ycur, n0, rng, directed=True) -> ControlSet:
    T, n = ycur.shape[0], ycur.shape[1]
    size = T * n * min(int(n0), n - 1)
    out = _kernels.draw_controls(ycur, int(n0), rng.random(size))
    if directed:
        ycur_t = np.ascontiguousarray(ycur.transpose(0, 2, 1))
        inn = _kernels.draw_controls(ycur_t, int(n0), rng.random(size))
    else:
        inn = (None,) * 4
    return ControlSet(int(n0), n, T, *out, *inn)


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


def log_prior_latent(X, params: ModelParams) -> float:
    """Gaussian initial distribution plus Gaussian random-walk transitions."""
    X = np.asarray(X, dtype=float)
    n, T, p = X.shape
    out = -0.5 * n * p * np.log(2 * np.pi * params.tau2) - (X[:, 0] ** 2).sum() / (2 * params.tau2)
    if T > 1:
        steps = np.diff(X, axis=1)
        out += -0.5 * n * p * (T - 1) * np.log(2 * np.pi * params.sigma2) - (steps**2).sum() / (2 * params.sigma2)
    return float(out)


def log_normal(x, mean, var):
    return -0.5 * np.log(2 * np.pi * var) - (x - mean) ** 2 / (2 * var)


def log_inv_gamma(x, shape, scale):
    return shape * np.log(scale) - special.gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def log_dirichlet(x, alpha):
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return float(special.gammaln(alpha.sum()) - special.gammaln(alpha).sum() + ((alpha - 1) * np.log(x)).sum())


def log_prior_params(params: ModelParams, prior: PriorConfig) -> float:
    r = params.radii
    if abs(r.sum() - 1.0) > RADII_TOL * max(1, r.size):
        raise ValueError("radii are off the simplex")
    prior = prior.resolve(params.n)
    return float(log_normal(params.beta_in, prior.nu_in, prior.xi_in)
                 + log_normal(params.beta_out, prior.nu_out, prior.xi_out)
                 + log_inv_gamma(params.sigma2, prior.theta_sigma, prior.phi_sigma)
                 + log_inv_gamma(params.tau2, prior.theta_tau, prior.phi_tau)
                 + log_dirichlet(r, prior.alpha))
