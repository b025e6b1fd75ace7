import logging

import numpy as np
import pytest
from scipy import integrate, stats

from dynlatent.model import (
    DynamicNetwork,
    ModelParams,
    PriorConfig,
    edge_prob,
    log_dirichlet,
    log_likelihood_exact,
    log_prior_latent,
)
from dynlatent.sampler import (
    ChainConfig,
    GibbsSampler,
    PosteriorChain,
    attachment_probabilities,
    impute_missing_init,
    initialize,
    latent_log_ratio,
    procrustes_align,
    radii_log_ratio,
    run_chain,
    sigma2_conditional,
    step_beta,
    step_latent,
    step_missing,
    step_radii,
    step_sigma2,
    step_tau2,
    tau2_conditional,
)

from conftest import random_network, random_params

PRIOR = PriorConfig(phi_sigma=0.3, phi_tau=1.0)


class TestChainConfig:
    @pytest.mark.parametrize("kw", [dict(iterations=10, burn_in=10), dict(thin=0), dict(kappa=0.0),
                                    dict(latent_dim=0), dict(n0=-1), dict(burn_in=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ChainConfig(**kw)

    def test_draw_count(self):
        assert ChainConfig(iterations=1000, burn_in=200, thin=10).n_draws == 80

    def test_streams_reproducible(self):
        a = ChainConfig(seed=3).streams()
        b = ChainConfig(seed=3).streams()
        assert a["latent"].random() == b["latent"].random()
        assert a["latent"].random() != a["beta"].random()


class TestInitialize:
    def test_empty_graph_finite(self):
        Y = DynamicNetwork(np.zeros((3, 5, 5), dtype=np.int8))
        X, params = initialize(Y, ChainConfig())
        assert X.shape == (5, 3, 2) and np.isfinite(X).all()
        assert params.radii.sum() == pytest.approx(1.0, abs=1e-12)

    def test_radii_sum_to_one(self, rng):
        X, params = initialize(random_network(10, 4, rng), ChainConfig())
        assert params.radii.sum() == pytest.approx(1.0, abs=1e-12)
        assert params.beta_in == params.beta_out == 1.0
        assert params.tau2 > 0 and params.sigma2 > 0

    def test_two_cliques_separate(self):
        cells = np.zeros((2, 8, 8), dtype=np.int8)
        cells[:, :4, :4] = 1
        cells[:, 4:, 4:] = 1
        X, _ = initialize(DynamicNetwork(cells), ChainConfig())
        for t in range(2):
            d = np.linalg.norm(X[:, None, t] - X[None, :, t], axis=-1)
            within = max(d[:4, :4].max(), d[4:, 4:].max())
            between = d[:4, 4:].min()
            assert between > within


    def test_shared_start_across_slices(self, rng):
        X, _ = initialize(random_network(12, 5, rng, density=0.2), ChainConfig())
        assert np.array_equal(X, np.repeat(X[:, :1], 5, axis=1))

    def test_dense_union_uses_slice_average(self, rng):
        cells = np.zeros((6, 9, 9), dtype=np.int8)
        block = np.zeros((9, 9), dtype=bool)
        block[:3, :3] = block[3:, 3:] = True
        for t in range(6):
            cells[t] = rng.random((9, 9)) < np.where(block, 0.6, 0.05)
            np.fill_diagonal(cells[t], 0)
        ties = (cells == 1) | (cells == 1).transpose(0, 2, 1)
        assert ties.any(axis=0).sum() > 0.5 * 9 * 8
        X, _ = initialize(DynamicNetwork(cells), ChainConfig())
        d = np.linalg.norm(X[:, None, 0] - X[None, :, 0], axis=-1)
        assert d[:3, 3:].mean() > d[3:, 3:].mean()


class TestImputeMissingInit:
    def test_zero_outdegree_imputes_zero(self):
        cells = np.zeros((2, 4, 4), dtype=np.int8)
        cells[:, 1, 2] = 1
        cells[1, 0, 3] = -1
        Y = DynamicNetwork(cells)
        assert impute_missing_init(Y, 0).tolist() == [0]

    def test_attachment_ratio(self):
        p = attachment_probabilities(np.array([2.0, 1.0, 0.0]), np.ones((3, 3)), 2)
        assert p[0] / p[1] == pytest.approx(2.0)
        assert p[2] == 0

    def test_isolated_falls_back_to_uniform(self):
        p = attachment_probabilities(np.zeros(4), np.ones((4, 4)), 1)
        np.testing.assert_allclose(p, [1 / 3, 0, 1 / 3, 1 / 3])

    def test_seeded(self, rng):
        Y = random_network(12, 3, rng, missing=0.3)
        np.testing.assert_array_equal(impute_missing_init(Y, 5), impute_missing_init(Y, 5))

    def test_undirected_symmetric(self, rng):
        Y = random_network(10, 2, rng, missing=0.3, directed=False)
        full = Y.complete(impute_missing_init(Y, 1))
        np.testing.assert_array_equal(full, full.transpose(0, 2, 1))


def toy_state(rng, n=4, T=3, missing=0.0, directed=True):
    Y = random_network(n, T, rng, density=0.4, missing=missing, directed=directed)
    imputed = rng.integers(0, 2, Y.n_missing) if Y.n_missing else None
    if imputed is not None and not directed:
        full = Y.complete(np.zeros(Y.n_missing, dtype=np.int8))
        tt, ii, jj = Y.missing_index()
        vals = rng.integers(0, 2, (T, n, n))
        vals = np.triu(vals, 1) + np.triu(vals, 1).transpose(0, 2, 1)
        full[tt, ii, jj] = vals[tt, ii, jj]
        imputed = full[tt, ii, jj]
    X = rng.normal(scale=0.3, size=(n, T, 2))
    b = 1.5
    params = random_params(n, rng, beta_in=b if not directed else 1.0, beta_out=b if not directed else 2.0)
    return Y, imputed, X, params


def log_post(Y, X, params, imputed):
    return log_likelihood_exact(Y, X, params, imputed) + log_prior_latent(X, params)


class TestStepLatent:
    def test_zero_sd_is_noop(self, rng):
        Y, imp, X, params = toy_state(rng)
        x, ok = step_latent(X, params, Y, imp, 1, 2, rng, 0.0)
        assert ok and np.array_equal(x, X[2, 1])

    @pytest.mark.parametrize("directed", [True, False])
    @pytest.mark.parametrize("t", [0, 1, 2])
    def test_local_ratio_matches_full_difference(self, rng, t, directed):
        Y, imp, X, params = toy_state(rng, missing=0.2, directed=directed)
        prop = X[1, t] + rng.normal(scale=0.2, size=2)
        X2 = X.copy()
        X2[1, t] = prop
        full = log_post(Y, X2, params, imp) - log_post(Y, X, params, imp)
        assert latent_log_ratio(X, params, Y, imp, t, 1, prop) == pytest.approx(full, rel=1e-9, abs=1e-10)

    def test_forward_reverse_cancel(self, rng):
        Y, imp, X, params = toy_state(rng)
        prop = X[0, 1] + np.array([0.1, -0.3])
        fwd = latent_log_ratio(X, params, Y, imp, 1, 0, prop)
        X2 = X.copy()
        X2[0, 1] = prop
        rev = latent_log_ratio(X2, params, Y, imp, 1, 0, X[0, 1])
        assert fwd + rev == pytest.approx(0.0, abs=1e-10)

    def test_single_time_step(self, rng):
        Y, imp, X, params = toy_state(rng, T=1)
        prop = X[2, 0] + 0.1
        X2 = X.copy()
        X2[2, 0] = prop
        full = log_post(Y, X2, params, imp) - log_post(Y, X, params, imp)
        assert latent_log_ratio(X, params, Y, imp, 0, 2, prop) == pytest.approx(full, rel=1e-9)


class TestVarianceSteps:
    def test_tau2_zero_statistic(self):
        shape, scale = tau2_conditional(np.zeros((3, 2, 2)), PRIOR)
        assert (shape, scale) == (PRIOR.theta_tau + 3, PRIOR.phi_tau)

    def test_sigma2_zero_steps(self, rng):
        X = np.repeat(rng.normal(size=(3, 1, 2)), 4, axis=1)
        shape, scale = sigma2_conditional(X, PRIOR)
        assert shape == PRIOR.theta_sigma + 3 * 2 * 3 / 2
        assert scale == PRIOR.phi_sigma

    def test_sigma2_single_time_uses_prior(self):
        assert sigma2_conditional(np.zeros((3, 1, 2)), PRIOR) == (PRIOR.theta_sigma, PRIOR.phi_sigma)

    @pytest.mark.parametrize("which", ["tau2", "sigma2"])
    def test_grid_posterior_matches_conjugate_form(self, rng, which):
        X = rng.normal(scale=0.5, size=(2, 3, 2))
        grid = np.geomspace(1e-3, 1e3, 400001)
        if which == "tau2":
            log_like = stats.norm.logpdf(X[:, 0][..., None], scale=np.sqrt(grid)).sum(axis=(0, 1))
            log_pr = stats.invgamma.logpdf(grid, PRIOR.theta_tau, scale=PRIOR.phi_tau)
            shape, scale = tau2_conditional(X, PRIOR)
        else:
            steps = np.diff(X, axis=1)
            log_like = stats.norm.logpdf(steps[..., None], scale=np.sqrt(grid)).sum(axis=(0, 1, 2))
            log_pr = stats.invgamma.logpdf(grid, PRIOR.theta_sigma, scale=PRIOR.phi_sigma)
            shape, scale = sigma2_conditional(X, PRIOR)
        post = np.exp(log_like + log_pr - (log_like + log_pr).max())
        post /= integrate.trapezoid(post, grid)
        mean = integrate.trapezoid(grid * post, grid)
        var = integrate.trapezoid((grid - mean) ** 2 * post, grid)
        ig = stats.invgamma(shape, scale=scale)
        gap = log_like + log_pr - ig.logpdf(grid)
        assert np.ptp(gap) < 1e-8
        assert mean == pytest.approx(ig.mean(), rel=1e-4)
        assert var == pytest.approx(ig.var(), rel=1e-3)

    def test_seeded_draws(self, rng):
        X = rng.normal(size=(3, 3, 2))
        assert step_tau2(X, PRIOR, np.random.default_rng(1)) == step_tau2(X, PRIOR, np.random.default_rng(1))
        assert step_sigma2(X, PRIOR, np.random.default_rng(1)) == step_sigma2(X, PRIOR, np.random.default_rng(1))


class TestStepBeta:
    def test_zero_sd_is_noop(self, rng):
        Y, imp, X, params = toy_state(rng)
        new, ok = step_beta("in", X, params, Y, imp, PRIOR, rng, 0.0)
        assert ok and new.beta_in == params.beta_in

    def test_single_dyad_ratio_is_likelihood_ratio(self):
        Y = DynamicNetwork(np.array([[[0, 1], [0, 0]]], dtype=np.int8))
        X = np.array([[[0.0, 0.0]], [[0.3, 0.0]]])
        params = ModelParams(1, 1, 1.0, 2.0, np.array([0.4, 0.6]))
        flat = PriorConfig(xi_in=1e300, xi_out=1e300, phi_sigma=1, phi_tau=1)
        outcomes = set()
        for seed in range(200):
            g = np.random.default_rng(seed)
            new_beta = params.beta_in + g.standard_normal()
            log_u = np.log(g.random())
            delta = (log_likelihood_exact(Y, X, params.copy(beta_in=new_beta))
                     - log_likelihood_exact(Y, X, params))
            out, ok = step_beta("in", X, params, Y, None, flat, seed, 1.0)
            assert ok == (log_u < delta)
            assert out.beta_in == (new_beta if ok else params.beta_in)
            outcomes.add(ok)
        assert outcomes == {True, False}

    def test_long_run_matches_grid_posterior(self):
        rng = np.random.default_rng(11)
        Y = random_network(5, 2, rng, density=0.4)
        X = rng.normal(scale=0.3, size=(5, 2, 2))
        params = random_params(5, rng)
        prior = PriorConfig(nu_in=0.0, xi_in=4.0, phi_sigma=1, phi_tau=1)
        grid = np.linspace(-6, 8, 1401)
        lp = np.array([log_likelihood_exact(Y, X, params.copy(beta_in=b)) for b in grid])
        lp += stats.norm.logpdf(grid, 0, 2)
        w = np.exp(lp - lp.max())
        w /= w.sum()
        g_mean = (grid * w).sum()
        g_sd = np.sqrt(((grid - g_mean) ** 2 * w).sum())
        cur = params
        draws = np.empty(20000)
        for k in range(draws.size):
            cur, _ = step_beta("in", X, cur, Y, None, prior, rng, 1.0)
            draws[k] = cur.beta_in
        draws = draws[1000:]
        batch = draws[: len(draws) // 50 * 50].reshape(50, -1).mean(axis=1)
        se = batch.std(ddof=1) / np.sqrt(50)
        assert abs(draws.mean() - g_mean) < 4 * se
        assert draws.std() == pytest.approx(g_sd, rel=0.1)

    def test_undirected_moves_both(self, rng):
        Y, imp, X, params = toy_state(rng, directed=False)
        for seed in range(20):
            new, ok = step_beta("in", X, params, Y, imp, PRIOR, seed, 0.3)
            assert new.beta_in == new.beta_out

    def test_rejects_bad_block(self, rng):
        Y, imp, X, params = toy_state(rng)
        with pytest.raises(ValueError):
            step_beta("both", X, params, Y, imp, PRIOR, rng, 1.0)


class TestStepRadii:
    def test_simplex_closure(self, rng):
        Y, imp, X, params = toy_state(rng)
        for _ in range(50):
            params, _ = step_radii(X, params, Y, imp, PRIOR, rng, kappa=200.0)
            assert params.radii.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(params.radii > 0)

    def test_large_kappa_accepts(self, rng):
        Y, imp, X, params = toy_state(rng)
        acc = [step_radii(X, params, Y, imp, PRIOR, rng, kappa=1e10)[1] for _ in range(50)]
        assert np.mean(acc) > 0.9

    def test_ratio_matches_density_oracle(self, rng):
        r = np.array([0.2, 0.3, 0.5])
        rs = np.array([0.25, 0.25, 0.5])
        alpha = np.array([1.0, 2.0, 3.0])
        kappa = 40.0
        expected = (1.3 - 0.7 + stats.dirichlet.logpdf(rs, alpha) - stats.dirichlet.logpdf(r, alpha)
                    + stats.dirichlet.logpdf(r, kappa * rs) - stats.dirichlet.logpdf(rs, kappa * r))
        assert radii_log_ratio(r, rs, 0.7, 1.3, alpha, kappa) == pytest.approx(expected, rel=1e-12)

    def test_log_dirichlet_oracle(self, rng):
        x = rng.dirichlet(np.ones(4))
        a = rng.uniform(0.5, 3, 4)
        assert log_dirichlet(x, a) == pytest.approx(stats.dirichlet.logpdf(x, a))


class TestStepMissing:
    def test_no_missing_is_noop(self, rng):
        Y, imp, X, params = toy_state(rng)
        assert step_missing(Y, X, params, rng).size == 0

    def test_zero_eta_is_fair_coin(self):
        cells = np.zeros((1, 3, 3), dtype=np.int8)
        cells[0, 0, 1] = -1
        Y = DynamicNetwork(cells)
        X = np.zeros((3, 1, 2))
        X[1, 0, 0] = 0.01
        params = ModelParams(1, 1, 2.0, 0.5, np.array([0.01, 0.01, 0.98]))
        draws = np.array([step_missing(Y, X, params, s)[0] for s in range(4000)])
        assert abs(draws.mean() - 0.5) < 3 * np.sqrt(0.25 / 4000)

    def test_frequency_oracle(self):
        rng = np.random.default_rng(3)
        Y, imp, X, params = toy_state(rng, n=5, T=2, missing=0.3)
        tt, ii, jj = Y.missing_index()
        p = np.array([edge_prob(i, j, t, X, params) for t, i, j in zip(tt, ii, jj)])
        N = 100_000
        freq = np.zeros(p.size)
        for _ in range(N):
            freq += step_missing(Y, X, params, rng)
        freq /= N
        assert np.all(np.abs(freq - p) < 3 * np.sqrt(p * (1 - p) / N))

    def test_undirected_mirrored(self, rng):
        Y, imp, X, params = toy_state(rng, n=6, missing=0.4, directed=False)
        vals = step_missing(Y, X, params, rng)
        full = Y.complete(vals)
        np.testing.assert_array_equal(full, full.transpose(0, 2, 1))


class TestProcrustes:
    def test_recovers_rotation(self, rng):
        X0 = rng.normal(size=(6, 3, 2))
        c, s = np.cos(0.7), np.sin(0.7)
        R = np.array([[c, -s], [s, -c * 0 + c]])
        R = np.array([[c, -s], [s, c]]) @ np.diag([1, -1])
        aligned, A = procrustes_align(X0 @ R, X0)
        np.testing.assert_allclose(aligned, X0, atol=1e-10)
        np.testing.assert_allclose(A @ A.T, np.eye(2), atol=1e-12)

    def test_isometry(self, rng):
        X = rng.normal(size=(5, 4, 2))
        aligned, _ = procrustes_align(X, rng.normal(size=(5, 4, 2)))
        flat, flat_a = X.reshape(-1, 2), aligned.reshape(-1, 2)
        d = np.linalg.norm(flat[:, None] - flat[None], axis=-1)
        da = np.linalg.norm(flat_a[:, None] - flat_a[None], axis=-1)
        np.testing.assert_allclose(d, da, atol=1e-12)

    def test_no_translation(self, rng):
        X0 = rng.normal(size=(4, 2, 2))
        aligned, _ = procrustes_align(X0 + 5.0, X0)
        assert np.abs(aligned.mean(axis=(0, 1))).max() > 1.0

    def test_rank_deficient_falls_back(self, caplog):
        X = np.zeros((3, 2, 2))
        with caplog.at_level(logging.WARNING):
            aligned, A = procrustes_align(X, np.ones((3, 2, 2)))
        np.testing.assert_array_equal(A, np.eye(2))
        assert "rank-deficient" in caplog.text

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            procrustes_align(np.zeros((2, 2, 2)), np.zeros((3, 2, 2)))


@pytest.fixture(scope="module")
def chain_and_data():
    rng = np.random.default_rng(8)
    Y = random_network(8, 3, rng, density=0.3, missing=0.1)
    cfg = ChainConfig(iterations=600, burn_in=200, thin=4, seed=2)
    return Y, cfg, run_chain(Y, config=cfg)


class TestRunChain:
    def test_draw_count_and_shapes(self, chain_and_data):
        Y, cfg, chain = chain_and_data
        assert len(chain) == cfg.n_draws == 100
        assert chain.X.shape == (100, 8, 3, 2)
        assert chain.imputed.shape == (100, Y.n_missing)

    def test_radii_on_simplex(self, chain_and_data):
        _, _, chain = chain_and_data
        np.testing.assert_allclose(chain.radii.sum(axis=1), 1.0, atol=1e-12)

    def test_draws_aligned_to_reference(self, chain_and_data):
        _, _, chain = chain_and_data
        p = chain.p
        for l in range(0, len(chain), 25):
            _, A = procrustes_align(chain.X[l], chain.reference)
            np.testing.assert_allclose(A, np.eye(p), atol=1e-8)

    def test_reproducible(self, chain_and_data):
        Y, cfg, chain = chain_and_data
        again = run_chain(Y, config=cfg)
        assert chain.X.tobytes() == again.X.tobytes()
        assert chain.radii.tobytes() == again.radii.tobytes()
        assert chain.imputed.tobytes() == again.imputed.tobytes()

    def test_save_load_roundtrip(self, chain_and_data, tmp_path):
        _, _, chain = chain_and_data
        chain.save(tmp_path / "c.npz")
        back = PosteriorChain.load(tmp_path / "c.npz")
        np.testing.assert_array_equal(back.X, chain.X)
        assert back.seed == chain.seed and back.directed == chain.directed

    def test_tuning_frozen_after_burn_in(self):
        rng = np.random.default_rng(1)
        Y = random_network(6, 2, rng)
        seen = {}

        def record(s, sampler):
            seen[s] = (sampler.sd_latent.copy(), dict(sampler.sd_beta), sampler.kappa)

        run_chain(Y, config=ChainConfig(iterations=300, burn_in=100, thin=10, adapt_every=25), callback=record)
        ref = seen[100]
        for s in range(101, 301):
            np.testing.assert_array_equal(seen[s][0], ref[0])
            assert seen[s][1] == ref[1] and seen[s][2] == ref[2]

    def test_case_control_mode_runs(self, chain_and_data):
        Y, _, _ = chain_and_data
        chain = run_chain(Y, config=ChainConfig(iterations=200, burn_in=100, thin=5, n0=3, seed=1))
        assert np.isfinite(chain.X).all() and len(chain) == 20

    @pytest.mark.parametrize("directed", [True, False])
    def test_exhaustive_case_control_tracks_exact_chain(self, rng, directed):
        Y = random_network(7, 3, rng, directed=directed, missing=0.1)
        runs = [run_chain(Y, config=ChainConfig(iterations=300, burn_in=100, thin=10, n0=n0, seed=5))
                for n0 in (0, Y.n)]
        np.testing.assert_allclose(runs[1].X, runs[0].X, rtol=0, atol=1e-9)
        np.testing.assert_allclose(runs[1].radii, runs[0].radii, rtol=0, atol=1e-9)
        np.testing.assert_array_equal(runs[1].imputed, runs[0].imputed)

    def test_undirected_chain(self, rng):
        Y = random_network(6, 3, rng, directed=False, missing=0.1)
        chain = run_chain(Y, config=ChainConfig(iterations=200, burn_in=100, thin=5))
        np.testing.assert_array_equal(chain.beta_in, chain.beta_out)
        full = Y.complete(chain.imputed[-1])
        np.testing.assert_array_equal(full, full.transpose(0, 2, 1))

    def test_all_missing_recovers_prior(self):
        n, T = 4, 2
        Y = DynamicNetwork(np.full((T, n, n), -1, dtype=np.int8))
        prior = PriorConfig(nu_in=0.5, xi_in=0.25, nu_out=-0.5, xi_out=0.25, theta_sigma=6, phi_sigma=1,
                            theta_tau=6, phi_tau=1, alpha=np.full(n, 4.0))
        chain = run_chain(Y, prior, ChainConfig(iterations=30000, burn_in=2000, thin=2, kappa=30, seed=4,
                                                proposal_sd_beta=0.5, proposal_sd_latent=0.3, adapt_until=0))
        for draws, mean in ((chain.beta_in, 0.5), (chain.beta_out, -0.5), (chain.tau2, 0.2),
                            (chain.radii[:, 0], 0.25)):
            b = draws[: len(draws) // 40 * 40].reshape(40, -1).mean(axis=1)
            se = b.std(ddof=1) / np.sqrt(40)
            assert abs(draws.mean() - mean) < 4 * se


class TestGibbsSamplerBlocks:
    def test_sweep_keeps_cache_consistent(self, rng):
        Y, imp, X, params = toy_state(rng, n=6, T=3, missing=0.2)
        s = GibbsSampler(Y, PRIOR, ChainConfig(seed=1), X, params, imp)
        for _ in range(30):
            s.sweep()
        cached = s._current_loglik()
        assert cached == pytest.approx(log_likelihood_exact(Y, s.X, s.params, s.imputed), rel=1e-10)
