"""Model-layer tests: connection matrices, encoder, Weibull machinery, ELBOs.

Monte-Carlo oracles re-derive every analytic quantity from raw density
evaluations (scipy.stats) so the closed forms are checked against an
independent route, not against themselves.
"""

import numpy as np
import pytest
from scipy import stats
from scipy.special import gamma as gamma_fn

from hypertopic import model as M
from hypertopic.autodiff import Tensor, constant
from hypertopic.errors import ContractViolationError
from hypertopic.geometry import Geometry
from hypertopic.gradengine import finite_diff_check
from hypertopic.model import (
    EmbeddingSet,
    ModelConfig,
    build_topic_hierarchy,
    compute_phi,
    compute_phi_tensors,
    elbo_flat_etm,
    elbo_hierarchical,
    encode,
    encode_flat,
    infer_document_features,
    init_params,
    kl_weibull_gamma,
    sample_weibull,
    topic_word_distribution,
    weibull_mean,
)

TINY_HIER = ModelConfig(
    mode="hierarchical", topics=(2, 1), dim=2, hidden=4,
    geometry=Geometry.POINCARE, curvature=-1.0,
)
TINY_FLAT = ModelConfig(
    mode="flat", topics=(3,), dim=2, hidden=4,
    geometry=Geometry.POINCARE, curvature=-1.0,
)


def tiny_batch(n_docs=3, vocab=5, seed=0):
    return np.random.default_rng(seed).poisson(1.0, (n_docs, vocab)).astype(np.float64)


class TestModelConfig:
    def test_rejects_bad_mode(self):
        with pytest.raises(ContractViolationError):
            ModelConfig(mode="deep", topics=(3,))

    def test_flat_needs_single_layer(self):
        with pytest.raises(ContractViolationError):
            ModelConfig(mode="flat", topics=(3, 2))

    def test_rejects_nonpositive_topics(self):
        with pytest.raises(ContractViolationError):
            ModelConfig(mode="hierarchical", topics=(3, 0))

    def test_rejects_nonnegative_curvature(self):
        with pytest.raises(ContractViolationError):
            ModelConfig(mode="flat", topics=(3,), curvature=0.0)

    def test_euclidean_ignores_curvature_sign(self):
        cfg = ModelConfig(mode="flat", topics=(3,), geometry=Geometry.EUCLIDEAN, curvature=0.0)
        assert cfg.geometry is Geometry.EUCLIDEAN

    def test_prior_rate_conversion(self):
        scale = ModelConfig(mode="flat", topics=(3,), prior_scale=2.0, gamma_param="scale")
        rate = ModelConfig(mode="flat", topics=(3,), prior_scale=2.0, gamma_param="rate")
        assert scale.prior_rate_at(1) == pytest.approx(0.5)
        assert rate.prior_rate_at(1) == pytest.approx(2.0)

    def test_gamma_vector_shapes(self):
        cfg = ModelConfig(mode="hierarchical", topics=(4, 2), gamma=(0.5, 1.5))
        assert np.allclose(cfg.gamma_vector(), [0.5, 1.5])
        bad = ModelConfig(mode="hierarchical", topics=(4, 2), gamma=(0.5, 1.5, 2.0))
        with pytest.raises(ContractViolationError):
            bad.gamma_vector()

    def test_dict_round_trip(self):
        cfg = ModelConfig(
            mode="hierarchical", topics=(8, 3), dim=7, hidden=12,
            geometry=Geometry.LORENTZ, curvature=-0.5, gamma=(1.0, 2.0, 3.0),
            prior_scale=(1.5, 2.5), tau=0.7, lam=2.0, neg_samples=16,
        )
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestInitParams:
    def test_deterministic_in_seed(self):
        a, _ = init_params(TINY_HIER, vocab_size=5, seed=42)
        b, _ = init_params(TINY_HIER, vocab_size=5, seed=42)
        c, _ = init_params(TINY_HIER, vocab_size=5, seed=43)
        for name in a.names():
            assert np.array_equal(a[name], b[name])
        assert not np.array_equal(a["emb/word"], c["emb/word"])

    def test_expected_parameter_names(self):
        params, buffers = init_params(TINY_HIER, vocab_size=5, seed=0)
        names = set(params.names())
        assert {"emb/word", "emb/topic1", "emb/topic2"} <= names
        assert {"enc/up1/w1", "enc/up2/w2", "enc/k1/w", "enc/t2/b"} <= names
        assert {"enc/up1/bn_mean", "enc/up2/bn_var"} <= set(buffers)

    def test_flat_head_names(self):
        params, _ = init_params(TINY_FLAT, vocab_size=5, seed=0)
        names = set(params.names())
        assert {"enc/mu/w", "enc/logvar/b", "emb/topic1"} <= names
        assert "enc/k1/w" not in names

    def test_embeddings_start_near_origin(self):
        params, _ = init_params(TINY_HIER, vocab_size=200, seed=1)
        assert np.linalg.norm(params["emb/word"], axis=1).max() < 0.1


class TestComputePhi:
    def test_hand_softmax_column(self):
        # Euclidean dot-product scores [[0, ln 3], [0, 0]]: column 2 softmax
        # over the lower axis gives (3/4, 1/4).
        emb = EmbeddingSet(
            geometry=Geometry.EUCLIDEAN, curvature=0.0,
            word_tangents=np.eye(2),
            topic_tangents=[np.array([[0.0, 0.0], [np.log(3.0), 0.0]])],
        )
        phi = compute_phi(1, emb)
        assert phi.shape == (2, 2)
        assert np.allclose(phi[:, 1], [0.75, 0.25])
        assert np.allclose(phi[:, 0], [0.5, 0.5])

    def test_coincident_points_give_uniform_columns(self):
        emb = EmbeddingSet(
            geometry=Geometry.POINCARE, curvature=-1.0,
            word_tangents=np.zeros((4, 3)),
            topic_tangents=[np.zeros((2, 3))],
        )
        assert np.allclose(compute_phi(1, emb), 0.25)

    def test_columns_sum_to_one(self):
        rng = np.random.default_rng(7)
        for geometry in (Geometry.POINCARE, Geometry.LORENTZ, Geometry.EUCLIDEAN):
            emb = EmbeddingSet(
                geometry=geometry, curvature=-1.0,
                word_tangents=rng.normal(0, 0.3, (6, 3)),
                topic_tangents=[rng.normal(0, 0.3, (4, 3)), rng.normal(0, 0.3, (2, 3))],
            )
            for level in (1, 2):
                phi = compute_phi(level, emb)
                assert np.allclose(phi.sum(axis=0), 1.0, atol=1e-6)

    def test_level_out_of_range(self):
        emb = EmbeddingSet(Geometry.EUCLIDEAN, 0.0, np.zeros((2, 2)), [np.zeros((2, 2))])
        with pytest.raises(ContractViolationError):
            compute_phi(2, emb)

    def test_tensor_route_matches_numeric(self):
        params, _ = init_params(TINY_HIER, vocab_size=5, seed=3)
        phis = compute_phi_tensors(params.as_tensors(), TINY_HIER)
        emb = EmbeddingSet.from_params(params, TINY_HIER)
        for l, phi_t in enumerate(phis, start=1):
            assert np.allclose(phi_t.data, compute_phi(l, emb), atol=1e-12)


class TestEncode:
    def test_zero_weights_give_log2(self):
        params, buffers = init_params(TINY_HIER, vocab_size=5, seed=0)
        for name in params.names():
            if name.startswith("enc/"):
                params[name] = np.zeros_like(params[name])
        tensors = params.as_tensors()
        phis = compute_phi_tensors(tensors, TINY_HIER)
        x = tiny_batch()
        uniforms = [np.full((3, 1), 0.5), np.full((3, 2), 0.5)]
        latent = encode(x, tensors, dict(buffers), TINY_HIER, phis, uniforms)
        for k, t in zip(latent.ks, latent.ts):
            assert np.allclose(k.data, np.log(2.0), atol=1e-12)
            assert np.allclose(t.data, np.log(2.0), atol=1e-12)

    def test_shapes_and_positivity(self):
        params, buffers = init_params(TINY_HIER, vocab_size=5, seed=3)
        tensors = params.as_tensors()
        phis = compute_phi_tensors(tensors, TINY_HIER)
        x = tiny_batch(n_docs=4)
        rng = np.random.default_rng(0)
        uniforms = [rng.random((4, 1)), rng.random((4, 2))]
        latent = encode(x, tensors, dict(buffers), TINY_HIER, phis, uniforms)
        for l, k_l in enumerate(TINY_HIER.topics, start=1):
            assert latent.ks[l - 1].shape == (4, k_l)
            assert latent.ts[l - 1].shape == (4, k_l)
            assert latent.thetas[l - 1].shape == (4, k_l)
            assert np.all(latent.ks[l - 1].data > 0)
            assert np.all(latent.ts[l - 1].data > 0)
            assert np.all(latent.thetas[l - 1].data >= 0)

    def test_batch_norm_buffers_update_only_in_training(self):
        params, buffers = init_params(TINY_FLAT, vocab_size=5, seed=2)
        tensors = params.as_tensors()
        x = tiny_batch()
        before = {k: v.copy() for k, v in buffers.items()}
        encode_flat(x, tensors, buffers, TINY_FLAT, eps=None, training=False)
        for key in before:
            assert np.array_equal(buffers[key], before[key])
        encode_flat(x, tensors, buffers, TINY_FLAT, eps=None, training=True)
        assert any(not np.array_equal(buffers[k], before[k]) for k in before)

    def test_inference_is_deterministic(self):
        params, buffers = init_params(TINY_HIER, vocab_size=5, seed=3)
        x = tiny_batch()
        a = infer_document_features(x, params, buffers, TINY_HIER)
        b = infer_document_features(x, params, buffers, TINY_HIER)
        assert np.array_equal(a, b)
        assert a.shape == (3, 2)
        assert np.isfinite(a).all()

    def test_flat_features_are_distributions(self):
        params, buffers = init_params(TINY_FLAT, vocab_size=5, seed=2)
        feats = infer_document_features(tiny_batch(), params, buffers, TINY_FLAT)
        assert feats.shape == (3, 3)
        assert np.allclose(feats.sum(axis=1), 1.0)
        assert np.all(feats > 0)


class TestSampleWeibull:
    def test_inverse_cdf_point(self):
        theta = sample_weibull(
            Tensor(np.array(1.0)), Tensor(np.array(2.0)), np.array(1.0 - np.exp(-1.0))
        )
        assert theta.data == pytest.approx(2.0, abs=1e-12)

    def test_small_u_limit(self):
        theta = sample_weibull(Tensor(np.array(2.0)), Tensor(np.array(1.0)), np.array(1e-12))
        assert 0.0 < theta.data < 1e-3

    def test_monte_carlo_mean(self):
        k, t = 1.7, 2.3
        n = 1_000_000
        u = np.random.default_rng(11).random(n)
        draws = sample_weibull(Tensor(np.full(n, k)), Tensor(np.full(n, t)), u).data
        expected = t * gamma_fn(1.0 + 1.0 / k)
        se = draws.std(ddof=1) / np.sqrt(n)
        assert abs(draws.mean() - expected) < 3 * se

    def test_kolmogorov_smirnov(self):
        k, t = 0.8, 1.5
        n = 100_000
        u = np.random.default_rng(5).random(n)
        draws = sample_weibull(Tensor(np.full(n, k)), Tensor(np.full(n, t)), u).data
        stat = stats.kstest(draws, "weibull_min", args=(k, 0.0, t)).statistic
        assert stat < 0.01

    def test_mean_helper_matches_gamma_function(self):
        for k, t in [(0.5, 1.0), (1.0, 2.0), (3.0, 0.25)]:
            got = weibull_mean(Tensor(np.array(k)), Tensor(np.array(t))).data
            assert got == pytest.approx(t * gamma_fn(1.0 + 1.0 / k), rel=1e-12)

    def test_gradients_match_finite_differences(self):
        from hypertopic.gradengine import ParamStore
        params = ParamStore()
        params.add("k", np.array([0.7, 1.3, 2.2]))
        params.add("t", np.array([0.4, 1.0, 3.1]))
        u = np.random.default_rng(3).random(3)

        def loss(tensors, batch, rng):
            return sample_weibull(tensors["k"], tensors["t"], u).sum()

        report = finite_diff_check(loss, params)
        assert report.passed, report.per_param


class TestKLWeibullGamma:
    def test_exact_zero_when_distributions_coincide(self):
        # Weibull(1, 1) is Exponential(1) which is Gamma(1, 1).
        kl = kl_weibull_gamma(
            Tensor(np.array(1.0)), Tensor(np.array(1.0)), 1.0, 1.0
        )
        assert float(kl.data) == 0.0

    def test_pinned_value(self):
        kl = kl_weibull_gamma(
            Tensor(np.array(2.0)), Tensor(np.array(1.0)), 1.0, 1.0
        )
        assert kl.data == pytest.approx(0.29076627356, abs=1e-9)

    def test_monte_carlo_oracle(self):
        # KL = E_W[ln w(theta) - ln g(theta)] estimated from raw densities.
        rng = np.random.default_rng(17)
        for _ in range(50):
            k = rng.uniform(0.5, 3.0)
            t = rng.uniform(0.2, 4.0)
            alpha = rng.uniform(0.3, 4.0)
            beta = rng.uniform(0.3, 4.0)
            analytic = float(
                kl_weibull_gamma(
                    Tensor(np.array(k)), Tensor(np.array(t)), alpha, beta
                ).data
            )
            n = 1_000_000
            draws = t * rng.weibull(k, n)
            logq = stats.weibull_min.logpdf(draws, k, scale=t)
            logp = stats.gamma.logpdf(draws, alpha, scale=1.0 / beta)
            diff = logq - logp
            se = diff.std(ddof=1) / np.sqrt(n)
            assert abs(diff.mean() - analytic) < 3 * se + 1e-9, (k, t, alpha, beta)

    def test_nonnegative_on_random_draws(self):
        rng = np.random.default_rng(23)
        k = rng.uniform(0.3, 5.0, 1000)
        t = rng.uniform(0.05, 5.0, 1000)
        alpha = rng.uniform(0.1, 5.0, 1000)
        beta = rng.uniform(0.1, 5.0, 1000)
        kl = kl_weibull_gamma(Tensor(k), Tensor(t), Tensor(alpha), Tensor(beta)).data
        assert np.all(kl >= -1e-10)

    def test_gradients_match_finite_differences(self):
        from hypertopic.gradengine import ParamStore
        params = ParamStore()
        params.add("k", np.array([0.7, 1.3, 2.2]))
        params.add("t", np.array([0.4, 1.0, 3.1]))
        params.add("alpha", np.array([0.5, 1.5, 2.5]))
        params.add("beta", np.array([0.8, 1.2, 0.3]))

        def loss(tensors, batch, rng):
            return kl_weibull_gamma(
                tensors["k"], tensors["t"], tensors["alpha"], tensors["beta"]
            ).sum()

        report = finite_diff_check(loss, params)
        assert report.passed, report.per_param


class TestPoissonTerm:
    def test_empty_document_unit_rates(self):
        x = np.zeros((1, 7))
        rate = constant(np.ones((1, 7)))
        ll = M._poisson_log_likelihood(x, rate)
        assert ll.data[0] == pytest.approx(-7.0, abs=1e-12)

    def test_single_term_value(self):
        x = np.array([[2.0]])
        rate = constant(np.array([[2.0]]))
        ll = M._poisson_log_likelihood(x, rate)
        assert ll.data[0] == pytest.approx(np.log(2.0) - 2.0, abs=1e-12)

    def test_matches_scipy_logpmf(self):
        rng = np.random.default_rng(4)
        x = rng.poisson(2.0, (5, 9)).astype(np.float64)
        rates = rng.uniform(0.2, 4.0, (5, 9))
        ll = M._poisson_log_likelihood(x, constant(rates))
        expected = stats.poisson.logpmf(x.astype(int), rates).sum(axis=1)
        assert np.allclose(ll.data, expected, atol=1e-10)


class TestHierarchicalElbo:
    def test_deterministic_in_seed(self):
        params, buffers = init_params(TINY_HIER, vocab_size=5, seed=3)
        x = tiny_batch()
        a, _, _ = elbo_hierarchical(x, params.as_tensors(), dict(buffers), TINY_HIER, rng_seed=9)
        b, _, _ = elbo_hierarchical(x, params.as_tensors(), dict(buffers), TINY_HIER, rng_seed=9)
        c, _, _ = elbo_hierarchical(x, params.as_tensors(), dict(buffers), TINY_HIER, rng_seed=10)
        assert float(a.data) == float(b.data)
        assert float(a.data) != float(c.data)

    def test_finite_diff_all_parameters(self):
        # seed 3 keeps every ReLU pre-activation away from its kink, where
        # central differences are ill-defined for piecewise-linear paths
        params, buffers = init_params(TINY_HIER, vocab_size=5, seed=3)
        x = tiny_batch()

        def loss(tensors, batch, rng):
            elbo, _, _ = elbo_hierarchical(x, tensors, dict(buffers), TINY_HIER, rng_seed=11)
            return -elbo

        report = finite_diff_check(loss, params)
        assert report.passed, (report.worst_param, report.max_rel_err)

    def test_monte_carlo_density_oracle(self):
        # Replicate one document many times: the batch mean of the analytic
        # estimator must agree with a raw-density estimate of the same
        # expectation, term by term, within paired Monte-Carlo error.
        cfg = TINY_HIER
        params, buffers = init_params(cfg, vocab_size=5, seed=3)
        doc = np.array([[1.0, 0.0, 2.0, 0.0, 1.0]])
        n = 100_000
        x = np.repeat(doc, n, axis=0)

        tensors = params.as_tensors()
        elbo, latent, phis = elbo_hierarchical(
            x, tensors, dict(buffers), cfg, rng_seed=21, training=False
        )

        theta1 = latent.thetas[0].data
        theta2 = latent.thetas[1].data
        k1, t1 = latent.ks[0].data, latent.ts[0].data
        k2, t2 = latent.ks[1].data, latent.ts[1].data
        phi1, phi2 = phis[0].data, phis[1].data

        rate = np.maximum(theta1 @ phi1.T, 1e-10)
        log_lik = stats.poisson.logpmf(x.astype(int), rate).sum(axis=1)
        alpha1 = np.maximum(theta2 @ phi2.T, 1e-10)
        beta1 = cfg.prior_rate_at(1)
        beta2 = cfg.prior_rate_at(2)
        gamma_vec = cfg.gamma_vector()
        log_p1 = stats.gamma.logpdf(theta1, alpha1, scale=1.0 / beta1).sum(axis=1)
        log_p2 = stats.gamma.logpdf(theta2, gamma_vec, scale=1.0 / beta2).sum(axis=1)
        log_q1 = stats.weibull_min.logpdf(theta1, k1, scale=t1).sum(axis=1)
        log_q2 = stats.weibull_min.logpdf(theta2, k2, scale=t2).sum(axis=1)
        direct = log_lik + log_p1 + log_p2 - log_q1 - log_q2

        # per-sample analytic estimator for the paired comparison
        kl1 = kl_weibull_gamma(
            Tensor(k1), Tensor(t1), Tensor(alpha1), Tensor(np.array(beta1))
        ).data.sum(axis=1)
        kl2 = kl_weibull_gamma(
            Tensor(k2), Tensor(t2), Tensor(np.tile(gamma_vec, (n, 1))), Tensor(np.array(beta2))
        ).data.sum(axis=1)
        analytic = log_lik - kl1 - kl2

        assert float(elbo.data) == pytest.approx(analytic.mean(), rel=1e-9)
        paired = analytic - direct
        se = paired.std(ddof=1) / np.sqrt(n)
        assert abs(paired.mean()) < 3 * se + 1e-9

    def test_taxonomy_free_runs_any_layer_count(self):
        cfg = ModelConfig(mode="hierarchical", topics=(5, 3, 2), dim=2, hidden=4,
                          geometry=Geometry.EUCLIDEAN, curvature=-1.0)
        params, buffers = init_params(cfg, vocab_size=6, seed=1)
        x = tiny_batch(vocab=6)
        elbo, latent, phis = elbo_hierarchical(x, params.as_tensors(), buffers, cfg, rng_seed=2)
        assert np.isfinite(elbo.data)
        assert len(latent.thetas) == 3 and len(phis) == 3


class TestFlatElbo:
    def test_finite_diff_all_parameters(self):
        # seed 2 avoids kink-adjacent ReLU pre-activations (see above)
        params, buffers = init_params(TINY_FLAT, vocab_size=5, seed=2)
        x = tiny_batch()

        def loss(tensors, batch, rng):
            elbo, _, _ = elbo_flat_etm(x, tensors, dict(buffers), TINY_FLAT, rng_seed=5)
            return -elbo

        report = finite_diff_check(loss, params)
        assert report.passed, (report.worst_param, report.max_rel_err)

    def test_gaussian_kl_zero_at_standard_normal(self):
        mu = constant(np.zeros((2, 3)))
        logvar = constant(np.zeros((2, 3)))
        kl = ((mu**2.0 + logvar.exp() - logvar - 1.0) * 0.5).sum(axis=1)
        assert np.allclose(kl.data, 0.0)

    def test_monte_carlo_density_oracle(self):
        cfg = TINY_FLAT
        params, buffers = init_params(cfg, vocab_size=5, seed=2)
        doc = np.array([[1.0, 0.0, 2.0, 0.0, 1.0]])
        n = 100_000
        x = np.repeat(doc, n, axis=0)

        elbo, latent, (beta,) = elbo_flat_etm(
            x, params.as_tensors(), dict(buffers), cfg, rng_seed=13, training=False
        )
        mu, logvar = latent.mu.data, latent.logvar.data
        sigma = np.exp(0.5 * logvar)
        # reproduce the estimator's own draws to pair the two routes exactly
        rng = np.random.default_rng(np.random.SeedSequence(13))
        eps = rng.normal(size=(n, cfg.topics[0]))
        z = mu + sigma * eps
        theta = np.exp(z - z.max(axis=1, keepdims=True))
        theta /= theta.sum(axis=1, keepdims=True)
        assert np.allclose(theta, latent.theta.data, atol=1e-12)
        mix = np.maximum(theta @ beta.data, 1e-10)
        log_lik = (x * np.log(mix)).sum(axis=1)
        log_q = stats.norm.logpdf(z, mu, sigma).sum(axis=1)
        log_p = stats.norm.logpdf(z, 0.0, 1.0).sum(axis=1)
        direct = log_lik + log_p - log_q

        kl = 0.5 * (mu**2 + np.exp(logvar) - logvar - 1.0).sum(axis=1)
        analytic = log_lik - kl
        assert float(elbo.data) == pytest.approx(analytic.mean(), rel=1e-9)
        paired = analytic - direct
        se = paired.std(ddof=1) / np.sqrt(n)
        assert abs(paired.mean()) < 3 * se + 1e-9

    def test_topic_word_rows_are_distributions(self):
        params, buffers = init_params(TINY_FLAT, vocab_size=5, seed=2)
        _, _, (beta,) = elbo_flat_etm(
            tiny_batch(), params.as_tensors(), dict(buffers), TINY_FLAT, rng_seed=1
        )
        assert beta.shape == (3, 5)
        assert np.allclose(beta.data.sum(axis=1), 1.0, atol=1e-9)

    def test_coincident_embeddings_give_uniform_mixture(self):
        params, buffers = init_params(TINY_FLAT, vocab_size=5, seed=2)
        params["emb/word"] = np.zeros_like(params["emb/word"])
        params["emb/topic1"] = np.zeros_like(params["emb/topic1"])
        _, _, (beta,) = elbo_flat_etm(
            tiny_batch(), params.as_tensors(), dict(buffers), TINY_FLAT, rng_seed=1
        )
        assert np.allclose(beta.data, 0.2)


class TestTopicRendering:
    def test_hand_product(self):
        phis = [
            np.array([[0.9, 0.1], [0.1, 0.9]]),
            np.array([[0.6], [0.4]]),
        ]
        col = topic_word_distribution(phis, level=2, topic=0)
        assert np.allclose(col, phis[0] @ phis[1][:, 0])
        assert col.sum() == pytest.approx(1.0)

    def test_level_one_is_phi_column(self):
        phis = [np.array([[0.9, 0.1], [0.1, 0.9]])]
        assert np.allclose(topic_word_distribution(phis, 1, 1), [0.1, 0.9])

    def test_out_of_range_rejected(self):
        phis = [np.array([[0.9, 0.1], [0.1, 0.9]])]
        with pytest.raises(ContractViolationError):
            topic_word_distribution(phis, 2, 0)
        with pytest.raises(ContractViolationError):
            topic_word_distribution(phis, 1, 2)

    def test_hierarchy_distributions_normalized(self):
        params, _ = init_params(TINY_HIER, vocab_size=8, seed=5)
        emb = EmbeddingSet.from_params(params, TINY_HIER)
        hierarchy = build_topic_hierarchy(emb, top_n=3)
        assert hierarchy.n_layers() == 2
        for dist in hierarchy.word_distributions:
            assert np.allclose(dist.sum(axis=0), 1.0, atol=1e-6)
        for layer_lists, k in zip(hierarchy.top_words, TINY_HIER.topics):
            assert len(layer_lists) == k
            assert all(len(words) == 3 for words in layer_lists)

    def test_top_words_actually_ranked(self):
        params, _ = init_params(TINY_HIER, vocab_size=8, seed=5)
        emb = EmbeddingSet.from_params(params, TINY_HIER)
        hierarchy = build_topic_hierarchy(emb, top_n=8)
        dist = hierarchy.word_distributions[0][:, 0]
        ranked = hierarchy.top_words[0][0]
        assert all(dist[ranked[i]] >= dist[ranked[i + 1]] for i in range(7))


class TestNodePoints:
    def build_taxonomy(self):
        from hypertopic.taxonomy import build_from_hypernym_paths
        from hypertopic.corpus import Vocabulary
        import io, tempfile, os
        vocab = Vocabulary(["dog", "cat", "fish"])
        content = "dog\tcanine>animal\ncat\tfeline>animal\n"
        fd, path = tempfile.mkstemp(suffix=".tsv")
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        try:
            return build_from_hypernym_paths(path, vocab, depth=2), vocab
        finally:
            os.unlink(path)

    def test_alignment_with_handles(self):
        taxonomy, vocab = self.build_taxonomy()
        cfg = ModelConfig(mode="hierarchical", topics=(2, 1), dim=3,
                          geometry=Geometry.POINCARE, curvature=-1.0)
        params, _ = init_params(cfg, vocab_size=len(vocab), seed=6)
        emb = EmbeddingSet.from_params(params, cfg)
        pts = emb.node_points(taxonomy)
        assert pts.shape == (taxonomy.node_count(), cfg.dim)

        top = emb.topic_points(2)      # taxonomy layer 1 = model layer 2
        bottom = emb.topic_points(1)   # taxonomy layer 2 = model layer 1
        words = emb.word_points()
        layer1_ids = [n.id for n in taxonomy.concepts_in_layer(1)]
        layer2_ids = [n.id for n in taxonomy.concepts_in_layer(2)]
        assert np.allclose(pts[layer1_ids[0]], top[0])
        for i, nid in enumerate(layer2_ids):
            assert np.allclose(pts[nid], bottom[i])
        for i, w in enumerate(taxonomy.attached_word_indices()):
            assert np.allclose(pts[taxonomy.n_concepts + i], words[w])

    def test_tensor_route_matches_numeric(self):
        from hypertopic.model import node_points_tensor
        taxonomy, vocab = self.build_taxonomy()
        cfg = ModelConfig(mode="hierarchical", topics=(2, 1), dim=3,
                          geometry=Geometry.LORENTZ, curvature=-1.0)
        params, _ = init_params(cfg, vocab_size=len(vocab), seed=6)
        emb = EmbeddingSet.from_params(params, cfg)
        t = node_points_tensor(params.as_tensors(), cfg, taxonomy)
        assert np.allclose(t.data, emb.node_points(taxonomy), atol=1e-12)

    def test_depth_mismatch_rejected(self):
        taxonomy, vocab = self.build_taxonomy()
        cfg = ModelConfig(mode="hierarchical", topics=(2, 1, 1), dim=3,
                          geometry=Geometry.POINCARE, curvature=-1.0)
        params, _ = init_params(cfg, vocab_size=len(vocab), seed=6)
        emb = EmbeddingSet.from_params(params, cfg)
        with pytest.raises(ContractViolationError):
            emb.node_points(taxonomy)

    def test_width_mismatch_rejected(self):
        from hypertopic.model import node_points_tensor
        taxonomy, vocab = self.build_taxonomy()
        cfg = ModelConfig(mode="hierarchical", topics=(3, 1), dim=3,
                          geometry=Geometry.POINCARE, curvature=-1.0)
        params, _ = init_params(cfg, vocab_size=len(vocab), seed=6)
        with pytest.raises(ContractViolationError):
            node_points_tensor(params.as_tensors(), cfg, taxonomy)
