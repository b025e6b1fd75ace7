import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dynlatent.model import DynamicNetwork, edge_prob_matrix
from dynlatent.predict import (
    draw_weights,
    hard_threshold,
    naive_average_predictor,
    predict,
    predict_edge_probs,
    predict_latent,
)
from dynlatent.sampler import PosteriorChain


def random_chain(rng, L=6, n=5, T=3, p=2):
    X = rng.normal(scale=0.3, size=(L, n, T, p))
    radii = rng.dirichlet(np.full(n, 4.0), size=L)
    return PosteriorChain(X=X, tau2=rng.uniform(0.1, 1, L), sigma2=rng.uniform(0.01, 0.1, L),
                          beta_in=rng.normal(1, 0.1, L), beta_out=rng.normal(2, 0.1, L), radii=radii,
                          imputed=np.zeros((L, 0), dtype=np.int8), reference=X[0], acceptance={}, seed=0)


def oracle_probs(chain, latent_hat):
    """Direct evaluation of the weighted predictor, one dyad at a time."""
    L, n = chain.X.shape[:2]
    P = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            w = np.array([stats.multivariate_normal.pdf(latent_hat[i], chain.X[l, i, -1], chain.sigma2[l])
                          * stats.multivariate_normal.pdf(latent_hat[j], chain.X[l, j, -1], chain.sigma2[l])
                          for l in range(L)])
            w /= w.sum()
            probs = [edge_prob_matrix(latent_hat, chain.params(l))[i, j] for l in range(L)]
            P[i, j] = np.dot(w, probs)
    return P


class TestPredictLatent:
    def test_single_draw(self, rng):
        chain = random_chain(rng, L=1)
        np.testing.assert_array_equal(predict_latent(chain), chain.X[0, :, -1])

    def test_identical_draws(self, rng):
        chain = random_chain(rng, L=4)
        chain.X[:] = chain.X[0]
        np.testing.assert_allclose(predict_latent(chain), chain.X[0, :, -1])

    def test_mean_oracle(self, rng):
        chain = random_chain(rng, L=7)
        acc = np.zeros_like(chain.X[0, :, -1])
        for l in range(7):
            acc += chain.X[l, :, -1]
        np.testing.assert_allclose(predict_latent(chain), acc / 7, rtol=1e-14)

    def test_empty_chain(self, rng):
        chain = random_chain(rng, L=1)
        chain.X = chain.X[:0]
        with pytest.raises(ValueError):
            predict_latent(chain)


class TestPredictEdgeProbs:
    def test_weights_normalized(self, rng):
        chain = random_chain(rng)
        lh = predict_latent(chain)
        for i in range(chain.n):
            w = draw_weights(chain, lh, i)
            assert np.max(np.abs(w.sum(axis=0) - 1.0)) < 1e-12

    def test_single_draw_is_plug_in(self, rng):
        chain = random_chain(rng, L=1)
        lh = predict_latent(chain)
        np.testing.assert_allclose(predict_edge_probs(chain, lh), edge_prob_matrix(lh, chain.params(0)),
                                   rtol=1e-12)

    def test_formula_oracle(self, rng):
        chain = random_chain(rng, L=5, n=4)
        lh = predict_latent(chain) + 0.01
        np.testing.assert_allclose(predict_edge_probs(chain, lh), oracle_probs(chain, lh), rtol=1e-10)

    def test_convex_combination_bounds(self, rng):
        chain = random_chain(rng, L=8)
        lh = predict_latent(chain)
        P = predict_edge_probs(chain, lh)
        per_draw = np.stack([edge_prob_matrix(lh, chain.params(l)) for l in range(8)])
        off = ~np.eye(chain.n, dtype=bool)
        assert np.all(P[off] >= per_draw.min(axis=0)[off] - 1e-15)
        assert np.all(P[off] <= per_draw.max(axis=0)[off] + 1e-15)
        assert np.all((P[off] > 0) & (P[off] < 1))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), angle=st.floats(0, 2 * np.pi))
    def test_rotation_invariant(self, seed, angle):
        chain = random_chain(np.random.default_rng(seed))
        c, s = np.cos(angle), np.sin(angle)
        R = np.array([[c, -s], [s, c]])
        rotated = random_chain(np.random.default_rng(seed))
        rotated.X = chain.X @ R.T
        np.testing.assert_allclose(predict_edge_probs(rotated), predict_edge_probs(chain), rtol=1e-9, atol=1e-14)

    def test_degenerate_weights_fall_back(self, rng, caplog):
        chain = random_chain(rng, L=3)
        chain.sigma2[:] = np.nan
        lh = predict_latent(chain)
        with caplog.at_level(logging.WARNING):
            P = predict_edge_probs(chain, lh)
        assert "degenerate" in caplog.text
        assert np.isfinite(P).all()

    def test_predict_bundle(self, rng):
        res = predict(random_chain(rng))
        assert res.latent_hat.shape == (5, 2) and res.edge_probs.shape == (5, 5)
        assert np.all(res.ess[~np.eye(5, dtype=bool)] >= 1 - 1e-9)


class TestNaiveAverage:
    def test_always_one(self):
        cells = np.zeros((4, 2, 2), dtype=np.int8)
        cells[:, 0, 1] = 1
        assert naive_average_predictor(DynamicNetwork(cells))[0, 1] == 1.0

    def test_alternating(self):
        cells = np.zeros((4, 2, 2), dtype=np.int8)
        cells[:, 0, 1] = [1, 0, 1, 0]
        assert naive_average_predictor(DynamicNetwork(cells))[0, 1] == 0.5

    def test_masked_mean(self):
        cells = np.zeros((4, 2, 2), dtype=np.int8)
        cells[:, 0, 1] = [1, -1, 0, -1]
        assert naive_average_predictor(DynamicNetwork(cells))[0, 1] == 0.5

    def test_never_observed(self):
        cells = np.zeros((2, 3, 3), dtype=np.int8)
        cells[:, 2, 0] = -1
        cells[:, 1, 0] = 1
        P = naive_average_predictor(DynamicNetwork(cells))
        assert P[2, 0] == 0.5 and P[1, 0] == 1.0 and P[0, 0] == 0.0

    def test_permutation_equivariant(self, rng):
        cells = rng.integers(-1, 2, size=(5, 6, 6)).astype(np.int8)
        perm = rng.permutation(6)
        P = naive_average_predictor(DynamicNetwork(cells))
        Pp = naive_average_predictor(DynamicNetwork(cells[:, perm][:, :, perm]))
        np.testing.assert_array_equal(Pp, P[perm][:, perm])


class TestHardThreshold:
    def test_strict_inequality(self):
        assert hard_threshold(np.array([[0.5]]))[0, 0] == 0

    def test_all_zero(self):
        assert not hard_threshold(np.zeros((3, 3))).any()

    def test_elementwise(self, rng):
        P = rng.random((5, 5))
        np.testing.assert_array_equal(hard_threshold(P, 0.3), (P > 0.3).astype(np.int8))

    @pytest.mark.parametrize("cutoff", [0.0, 1.0, -0.1])
    def test_cutoff_range(self, cutoff):
        with pytest.raises(ValueError):
            hard_threshold(np.zeros(2), cutoff)
