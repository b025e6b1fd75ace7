"""Compiled inner loops.

Layout conventions shared by every kernel:

* ``Y`` is ``(T, n, n)`` int8 with the *current* 0/1 value of every dyad
  (imputed values already filled in); the diagonal is ignored.
* ``X`` is ``(n, T, p)`` float64.
* ``inv_r`` holds ``1 / r_i``.
* A stratum is one (actor, time) slice, indexed ``s = t * n + i``.
  Ragged per-stratum lists are stored CSR-style as ``(ptr, idx)``.

None of the kernels use fastmath: the exact and case-control likelihoods
must agree bit-for-bit when every zero dyad is a control.
"""
import math

import numpy as np
from numba import njit


@njit(inline="always", cache=True)
def softplus(x):
    # log(1 + e^x) without overflow; absolute error below 3e-16
    return max(x, 0.0) + math.log(1.0 + math.exp(-abs(x)))


@njit(inline="always", cache=True)
def _dist(X, i, j, t):
    s = 0.0
    for k in range(X.shape[2]):
        u = X[i, t, k] - X[j, t, k]
        s += u * u
    return math.sqrt(s)


@njit(inline="always", cache=True)
def _dist_to(x, X, j, t):
    s = 0.0
    for k in range(X.shape[2]):
        u = x[k] - X[j, t, k]
        s += u * u
    return math.sqrt(s)


@njit(inline="always", cache=True)
def _eta(d, b_in, b_out, inv_r_send, inv_r_recv):
    return b_in * (1.0 - d * inv_r_recv) + b_out * (1.0 - d * inv_r_send)


# ---------------------------------------------------------------------------
# Public likelihood evaluation (stratified so exact and case-control agree)
# ---------------------------------------------------------------------------


@njit(cache=True)
def stratum_sums(Y, X, b_in, b_out, inv_r):
    """Per-stratum sums of edge terms and of zero-dyad terms."""
    T, n = Y.shape[0], Y.shape[1]
    ones = np.zeros(T * n)
    zeros = np.zeros(T * n)
    for t in range(T):
        for i in range(n):
            s = t * n + i
            a = 0.0
            b = 0.0
            for j in range(n):
                if j == i:
                    continue
                e = _eta(_dist(X, i, j, t), b_in, b_out, inv_r[i], inv_r[j])
                if Y[t, i, j] == 1:
                    a += e - softplus(e)
                else:
                    b -= softplus(e)
            ones[s] = a
            zeros[s] = b
    return ones, zeros


@njit(cache=True)
def case_control_sums(X, b_in, b_out, inv_r, ones_ptr, ones_idx, ctrl_ptr, ctrl_idx):
    """Per-stratum edge sums and (unweighted) control sums."""
    n, T = X.shape[0], X.shape[1]
    ones = np.zeros(T * n)
    ctrl = np.zeros(T * n)
    for t in range(T):
        for i in range(n):
            s = t * n + i
            a = 0.0
            for q in range(ones_ptr[s], ones_ptr[s + 1]):
                j = ones_idx[q]
                e = _eta(_dist(X, i, j, t), b_in, b_out, inv_r[i], inv_r[j])
                a += e - softplus(e)
            b = 0.0
            for q in range(ctrl_ptr[s], ctrl_ptr[s + 1]):
                j = ctrl_idx[q]
                b -= softplus(_eta(_dist(X, i, j, t), b_in, b_out, inv_r[i], inv_r[j]))
            ones[s] = a
            ctrl[s] = b
    return ones, ctrl


@njit(cache=True)
def case_control_distances(X, ones_ptr, ones_idx, ctrl_ptr, ctrl_idx):
    """Distances for every listed edge and control, aligned with the index arrays."""
    n, T = X.shape[0], X.shape[1]
    d_ones = np.empty(ones_idx.shape[0])
    d_ctrl = np.empty(ctrl_idx.shape[0])
    for t in range(T):
        for i in range(n):
            s = t * n + i
            for q in range(ones_ptr[s], ones_ptr[s + 1]):
                d_ones[q] = _dist(X, i, ones_idx[q], t)
            for q in range(ctrl_ptr[s], ctrl_ptr[s + 1]):
                d_ctrl[q] = _dist(X, i, ctrl_idx[q], t)
    return d_ones, d_ctrl


@njit(cache=True)
def case_control_sums_from_distances(n, T, b_in, b_out, inv_r, ones_ptr, ones_idx, d_ones,
                                     ctrl_ptr, ctrl_idx, d_ctrl):
    """:func:`case_control_sums` with precomputed distances."""
    ones = np.zeros(T * n)
    ctrl = np.zeros(T * n)
    for t in range(T):
        for i in range(n):
            s = t * n + i
            a = 0.0
            for q in range(ones_ptr[s], ones_ptr[s + 1]):
                e = _eta(d_ones[q], b_in, b_out, inv_r[i], inv_r[ones_idx[q]])
                a += e - softplus(e)
            b = 0.0
            for q in range(ctrl_ptr[s], ctrl_ptr[s + 1]):
                b -= softplus(_eta(d_ctrl[q], b_in, b_out, inv_r[i], inv_r[ctrl_idx[q]]))
            ones[s] = a
            ctrl[s] = b
    return ones, ctrl


@njit(cache=True)
def combine(ones, other, weight):
    total = 0.0
    for s in range(ones.shape[0]):
        total += ones[s] + weight[s] * other[s]
    return total


# ---------------------------------------------------------------------------
# Edge lists and control sampling
# ---------------------------------------------------------------------------


@njit(cache=True)
def edge_lists(V):
    """CSR lists of current-one partners per stratum.

    ``V[t, i, j]`` is the dyad value seen from stratum (t, i): pass ``Y`` for
    sender strata and its contiguous transpose for receiver strata.
    """
    T, n = V.shape[0], V.shape[1]
    ptr = np.zeros(T * n + 1, dtype=np.int64)
    count = 0
    for t in range(T):
        for i in range(n):
            for j in range(n):
                if j != i and V[t, i, j] == 1:
                    count += 1
            ptr[t * n + i + 1] = count
    idx = np.empty(count, dtype=np.int64)
    q = 0
    for t in range(T):
        for i in range(n):
            for j in range(n):
                if j != i and V[t, i, j] == 1:
                    idx[q] = j
                    q += 1
    return ptr, idx


@njit(cache=True)
def draw_controls(V, n0, u):
    """Uniform sample without replacement of up to ``n0`` zero dyads per stratum.

    ``V`` is oriented as in :func:`edge_lists` and ``u`` holds at least
    ``T * n * min(n0, n - 1)`` uniforms on [0, 1). Returns ``(ptr, idx,
    weight, size)``; ``idx`` is ascending within a stratum and ``weight =
    size / sampled`` (1 for empty strata).
    """
    T, n = V.shape[0], V.shape[1]
    cap = min(n0, n - 1)
    ptr = np.zeros(T * n + 1, dtype=np.int64)
    idx = np.empty(T * n * cap + 1, dtype=np.int64)  # slack for branchless writes
    weight = np.ones(T * n)
    size = np.zeros(T * n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    pick = np.zeros(n, dtype=np.bool_)
    q = 0
    for t in range(T):
        for i in range(n):
            s = t * n + i
            m = 0
            for j in range(n):
                buf[m] = j
                m += (V[t, i, j] == 0) & (j != i)
            k = min(n0, m)
            if k < m:
                # Floyd's algorithm: a uniform k-subset of the positions 0..m-1
                pick[:m] = False
                c = s * cap
                for a in range(m - k, m):
                    b = min(int(u[c] * (a + 1)), a)
                    c += 1
                    if pick[b]:
                        pick[a] = True
                    else:
                        pick[b] = True
                for a in range(m):
                    idx[q] = buf[a]
                    q += pick[a]
            else:
                for a in range(m):
                    idx[q] = buf[a]
                    q += 1
            ptr[s + 1] = q
            size[s] = m
            if k > 0:
                weight[s] = m / k
    return ptr, idx[:q].copy(), weight, size


# ---------------------------------------------------------------------------
# Sampler caches (exact mode)
# ---------------------------------------------------------------------------


@njit(cache=True)
def fill_cache(Y, X, b_in, b_out, inv_r, D, L):
    """Pairwise distances and per-dyad log-likelihood terms; returns the total."""
    T, n = Y.shape[0], Y.shape[1]
    total = 0.0
    for t in range(T):
        for i in range(n):
            D[t, i, i] = 0.0
            L[t, i, i] = 0.0
            for j in range(n):
                if j == i:
                    continue
                d = _dist(X, i, j, t)
                D[t, i, j] = d
                e = _eta(d, b_in, b_out, inv_r[i], inv_r[j])
                v = Y[t, i, j] * e - softplus(e)
                L[t, i, j] = v
                total += v
    return total


@njit(cache=True)
def terms_from_distances(Y, D, b_in, b_out, inv_r, L):
    """Recompute every dyad term from cached distances into ``L``; returns the total."""
    T, n = Y.shape[0], Y.shape[1]
    total = 0.0
    for t in range(T):
        for i in range(n):
            for j in range(n):
                if j == i:
                    continue
                e = _eta(D[t, i, j], b_in, b_out, inv_r[i], inv_r[j])
                v = Y[t, i, j] * e - softplus(e)
                L[t, i, j] = v
                total += v
    return total


@njit(cache=True)
def cache_total(L):
    T, n = L.shape[0], L.shape[1]
    total = 0.0
    for t in range(T):
        for i in range(n):
            for j in range(n):
                total += L[t, i, j]
    return total


@njit(cache=True)
def refresh_cells(Y, D, L, b_in, b_out, inv_r, tt, ii, jj):
    for q in range(tt.shape[0]):
        t, i, j = tt[q], ii[q], jj[q]
        e = _eta(D[t, i, j], b_in, b_out, inv_r[i], inv_r[j])
        L[t, i, j] = Y[t, i, j] * e - softplus(e)


# ---------------------------------------------------------------------------
# Latent position updates
# ---------------------------------------------------------------------------


@njit(inline="always", cache=True)
def _transition_terms(X, i, t, x, tau2, sigma2):
    """Log prior terms involving X_it = x (up to constants)."""
    T, p = X.shape[1], X.shape[2]
    a = 0.0
    if t == 0:
        for k in range(p):
            a -= x[k] * x[k] / (2.0 * tau2)
    else:
        for k in range(p):
            u = x[k] - X[i, t - 1, k]
            a -= u * u / (2.0 * sigma2)
    if t < T - 1:
        for k in range(p):
            u = X[i, t + 1, k] - x[k]
            a -= u * u / (2.0 * sigma2)
    return a


@njit(cache=True)
def latent_log_ratio_exact(Y, X, D, L, b_in, b_out, inv_r, tau2, sigma2, directed,
                           i, t, step, dnew, lrow, lcol):
    """Log MH ratio for X_it -> X_it + step from actor i's cached terms.

    Fills ``dnew``, ``lrow``, ``lcol`` with the proposal's distances and
    dyad terms. Returns ``(log_ratio, proposal)``.
    """
    n, p = X.shape[0], X.shape[2]
    prop = X[i, t].copy()
    for k in range(p):
        prop[k] += step[k]
    cur = 0.0
    new = 0.0
    for j in range(n):
        if j == i:
            continue
        d = _dist_to(prop, X, j, t)
        dnew[j] = d
        e = _eta(d, b_in, b_out, inv_r[i], inv_r[j])
        v = Y[t, i, j] * e - softplus(e)
        lrow[j] = v
        new += v
        cur += L[t, i, j]
        if directed:
            e = _eta(d, b_in, b_out, inv_r[j], inv_r[i])
            v = Y[t, j, i] * e - softplus(e)
            lcol[j] = v
            new += v
            cur += L[t, j, i]
    log_ratio = (new - cur
                 + _transition_terms(X, i, t, prop, tau2, sigma2)
                 - _transition_terms(X, i, t, X[i, t], tau2, sigma2))
    return log_ratio, prop


@njit(cache=True)
def latent_update_exact(Y, X, D, L, b_in, b_out, inv_r, tau2, sigma2, directed,
                        i, t, step, log_u, dnew, lrow, lcol):
    """One random-walk MH update of X_it, patching the caches on accept."""
    n, p = X.shape[0], X.shape[2]
    log_ratio, prop = latent_log_ratio_exact(Y, X, D, L, b_in, b_out, inv_r, tau2, sigma2,
                                             directed, i, t, step, dnew, lrow, lcol)
    if log_u < log_ratio:
        for k in range(p):
            X[i, t, k] = prop[k]
        for j in range(n):
            if j == i:
                continue
            D[t, i, j] = dnew[j]
            D[t, j, i] = dnew[j]
            L[t, i, j] = lrow[j]
            if directed:
                L[t, j, i] = lcol[j]
            else:
                L[t, j, i] = lrow[j]
        return True
    return False


@njit(cache=True)
def latent_sweep_exact(Y, X, D, L, b_in, b_out, inv_r, tau2, sigma2, directed,
                       sd, Z, log_u, accepted):
    n, T, p = X.shape
    dnew = np.empty(n)
    lrow = np.empty(n)
    lcol = np.empty(n)
    step = np.empty(p)
    for t in range(T):
        for i in range(n):
            for k in range(p):
                step[k] = sd[i] * Z[t, i, k]
            if latent_update_exact(Y, X, D, L, b_in, b_out, inv_r, tau2, sigma2,
                                   directed, i, t, step, log_u[t, i], dnew, lrow, lcol):
                accepted[i] += 1


@njit(inline="always", cache=True)
def _cc_terms_delta(X, x, y, i, t, b_in, b_out, inv_r, send, ptr, idx, w, is_edge):
    """Change in one weighted stratum sum when X_it moves from ``x`` to ``y``.

    ``send`` puts ``i`` in the sender role; otherwise it is the receiver.
    """
    s = t * X.shape[0] + i
    a = 0.0
    for q in range(ptr[s], ptr[s + 1]):
        j = idx[q]
        if send:
            r_s, r_r = inv_r[i], inv_r[j]
        else:
            r_s, r_r = inv_r[j], inv_r[i]
        e0 = _eta(_dist_to(x, X, j, t), b_in, b_out, r_s, r_r)
        e1 = _eta(_dist_to(y, X, j, t), b_in, b_out, r_s, r_r)
        if is_edge:
            a += (e1 - softplus(e1)) - (e0 - softplus(e0))
        else:
            a -= softplus(e1) - softplus(e0)
    return a if is_edge else w[s] * a


@njit(cache=True)
def latent_sweep_cc(X, b_in, b_out, inv_r, tau2, sigma2, directed, sd, Z, log_u,
                    oo_ptr, oo_idx, oc_ptr, oc_idx, oc_w,
                    io_ptr, io_idx, ic_ptr, ic_idx, ic_w, accepted):
    n, T, p = X.shape
    cur = np.empty(p)
    prop = np.empty(p)
    for t in range(T):
        for i in range(n):
            for k in range(p):
                cur[k] = X[i, t, k]
                prop[k] = cur[k] + sd[i] * Z[t, i, k]
            delta = (_cc_terms_delta(X, cur, prop, i, t, b_in, b_out, inv_r, True,
                                     oo_ptr, oo_idx, oc_w, True)
                     + _cc_terms_delta(X, cur, prop, i, t, b_in, b_out, inv_r, True,
                                       oc_ptr, oc_idx, oc_w, False))
            if directed:
                delta += (_cc_terms_delta(X, cur, prop, i, t, b_in, b_out, inv_r, False,
                                          io_ptr, io_idx, ic_w, True)
                          + _cc_terms_delta(X, cur, prop, i, t, b_in, b_out, inv_r, False,
                                            ic_ptr, ic_idx, ic_w, False))
            log_ratio = (delta
                         + _transition_terms(X, i, t, prop, tau2, sigma2)
                         - _transition_terms(X, i, t, cur, tau2, sigma2))
            if log_u[t, i] < log_ratio:
                for k in range(p):
                    X[i, t, k] = prop[k]
                accepted[i] += 1
