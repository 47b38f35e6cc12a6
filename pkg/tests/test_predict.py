"""Held-out scoring: phi averaging, query sweeps, label decisions, model IO."""

import numpy as np
import pytest
from scipy.special import ndtr

from dolda.corpus import Vocabulary
from dolda.predict import (
    FittedModel,
    estimate_phi_bar,
    load_model,
    predict_corpus,
    predict_label,
    predictive_distribution,
    sample_new_doc_topics,
    save_model,
)
from dolda.regression import PriorFamily
from dolda.rng import RngStream


def _gen(seed, stream=0):
    return RngStream(seed, stream).generator()


class TestEstimatePhiBar:
    def test_single_draw_identity(self):
        p = np.array([[0.2, 0.8], [0.5, 0.5]])
        np.testing.assert_allclose(estimate_phi_bar([p]), p, atol=1e-15)

    def test_two_draw_mean(self):
        p = np.array([[0.2, 0.8]])
        q = np.array([[0.6, 0.4]])
        np.testing.assert_allclose(estimate_phi_bar([p, q]), [[0.4, 0.6]], atol=1e-15)

    def test_rows_renormalized(self):
        rng = _gen(1)
        draws = [rng.dirichlet(np.ones(6), size=3) for _ in range(7)]
        out = estimate_phi_bar(draws)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_empty_window_errors(self):
        with pytest.raises(ValueError):
            estimate_phi_bar([])


class TestSampleNewDocTopics:
    def test_single_topic_degenerate(self):
        phi = np.ones((1, 4)) / 4
        zbar = sample_new_doc_topics(np.array([0, 1, 2]), phi, 0.1, rng=_gen(2))
        np.testing.assert_array_equal(zbar, [1.0])

    def test_empty_document_zero_vector(self):
        phi = np.ones((3, 4)) / 4
        np.testing.assert_array_equal(
            sample_new_doc_topics(np.array([], dtype=np.int32), phi, 0.1, rng=_gen(3)),
            np.zeros(3),
        )

    def test_disjoint_supports(self):
        # Topic 0 owns words 0-1, topic 1 owns words 2-3; a doc of topic-0
        # words must land almost entirely on topic 0.
        phi = np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]])
        doc = np.array([0, 1, 0, 1, 1, 0], dtype=np.int32)
        zbar = sample_new_doc_topics(doc, phi, 0.01, passes=400, rng=_gen(4), burn=100)
        assert zbar[0] > 0.97
        assert abs(zbar.sum() - 1.0) < 1e-12

    def test_permutation_equivariance(self):
        phi = np.array([[0.49, 0.49, 0.01, 0.01], [0.01, 0.01, 0.49, 0.49]])
        doc = np.array([0, 0, 0, 0, 2, 2], dtype=np.int32)
        z1 = sample_new_doc_topics(doc, phi, 0.1, passes=2000, rng=_gen(5), burn=500)
        z2 = sample_new_doc_topics(doc, phi[::-1], 0.1, passes=2000, rng=_gen(5), burn=500)
        np.testing.assert_allclose(z2, z1[::-1], atol=0.05)

    def test_mixed_doc_proportions(self):
        phi = np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]])
        doc = np.array([0, 1, 0, 1, 2, 2], dtype=np.int32)
        zbar = sample_new_doc_topics(doc, phi, 0.01, passes=1000, rng=_gen(6), burn=200)
        np.testing.assert_allclose(zbar, [4 / 6, 2 / 6], atol=0.02)

    def test_burn_validated(self):
        phi = np.ones((2, 3)) / 3
        with pytest.raises(ValueError):
            sample_new_doc_topics(np.array([0]), phi, 0.1, passes=10, burn=10, rng=_gen(7))


class TestPredictLabel:
    def test_argmax(self):
        eta = np.array([[0.3, -0.1]])  # intercept only
        assert predict_label(np.zeros(0), np.zeros(0), eta) == 0

    def test_tie_goes_to_lowest_id(self):
        eta = np.array([[0.5, 0.5]])
        assert predict_label(np.zeros(0), np.zeros(0), eta) == 0

    def test_intercept_shift_invariance(self):
        rng = _gen(8)
        eta = rng.normal(size=(4, 3))
        zbar, x = rng.dirichlet(np.ones(2)), rng.normal(size=1)
        before = predict_label(zbar, x, eta)
        eta_shift = eta.copy()
        eta_shift[0, :] += 7.3
        assert predict_label(zbar, x, eta_shift) == before


class TestPredictiveDistribution:
    def test_uniform_when_scores_equal(self):
        draws = np.zeros((1, 1, 4))
        out = predictive_distribution(np.zeros(0), np.zeros(0), draws)
        np.testing.assert_allclose(out, 0.25, atol=1e-12)

    def test_unit_case(self):
        # intercept-only scores (1, 0) with a single draw
        draws = np.array([[[1.0, 0.0]]])
        out = predictive_distribution(np.zeros(0), np.zeros(0), draws)
        exact = ndtr(1.0) / (ndtr(1.0) + 0.5)
        np.testing.assert_allclose(out, [exact, 1 - exact], rtol=1e-12)
        assert abs(out[0] - 0.62727) < 5e-5

    def test_single_draw_consistent_with_map_label(self):
        rng = _gen(9)
        eta = rng.normal(size=(5, 3))
        zbar = rng.dirichlet(np.ones(3))
        x = rng.normal(size=1)
        dist = predictive_distribution(zbar, x, eta[None])
        assert int(np.argmax(dist)) == predict_label(zbar, x, eta)

    def test_averages_over_draws(self):
        d1 = np.array([[[3.0, -3.0]]])
        d2 = np.array([[[-3.0, 3.0]]])
        both = np.concatenate([d1, d2])
        out = predictive_distribution(np.zeros(0), np.zeros(0), both)
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-3)

    def test_topic_permutation_invariance(self):
        rng = _gen(10)
        K = 3
        eta = rng.normal(size=(1 + K, 2))
        zbar = rng.dirichlet(np.ones(K))
        perm = np.array([2, 0, 1])
        eta_p = eta.copy()
        eta_p[1:] = eta[1:][perm]
        a = predictive_distribution(zbar, np.zeros(0), eta[None])
        b = predictive_distribution(zbar[perm], np.zeros(0), eta_p[None])
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_requires_draw_axis(self):
        with pytest.raises(ValueError):
            predictive_distribution(np.zeros(2), np.zeros(0), np.zeros((3, 2)))


def _toy_model(n_covariates=0):
    K, V, L = 2, 4, 2
    phi = np.array([[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]])
    rng = _gen(11)
    draws = rng.normal(size=(5, 1 + K + n_covariates, L))
    meta = None
    if n_covariates:
        from dolda.corpus import CovariateEncoder
        import pandas as pd

        meta = CovariateEncoder().fit(pd.DataFrame({"age": [1.0, 2.0]})).to_meta()
    return FittedModel(
        phi_bar=phi,
        eta_mean=draws.mean(axis=0),
        eta_draws=draws,
        vocabulary=Vocabulary.from_types(["alpha", "bravo", "charlie", "delta"]),
        label_names=["neg", "pos"],
        n_topics=K,
        alpha=0.1,
        beta=0.01,
        prior=PriorFamily("horseshoe", c=100.0),
        covariate_meta=meta,
        predict_passes=50,
        predict_burn=20,
    )


class TestPredictCorpus:
    def test_shapes_and_determinism(self):
        model = _toy_model()
        docs = [np.array([0, 1], np.int32), np.array([2, 3, 2], np.int32), np.zeros(0, np.int32)]
        labels1, probs1, zbars1 = predict_corpus(model, docs, seed=5)
        labels2, probs2, zbars2 = predict_corpus(model, docs, seed=5)
        assert labels1.shape == (3,)
        assert probs1.shape == (3, 2)
        assert zbars1.shape == (3, 2)
        np.testing.assert_allclose(probs1.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_array_equal(labels1, labels2)
        np.testing.assert_array_equal(probs1, probs2)
        np.testing.assert_array_equal(zbars1, zbars2)
        # empty doc gets the zero proportion vector
        np.testing.assert_array_equal(zbars1[2], np.zeros(2))

    def test_covariate_shape_enforced(self):
        model = _toy_model(n_covariates=1)
        docs = [np.array([0], np.int32)]
        with pytest.raises(ValueError, match="covariates"):
            predict_corpus(model, docs, covariates=np.zeros((1, 3)), seed=0)
        labels, probs, _ = predict_corpus(model, docs, covariates=np.ones((1, 1)), seed=0)
        assert labels.shape == (1,)


class TestFittedModelIO:
    def test_validation(self):
        model = _toy_model()
        with pytest.raises(ValueError, match="draw"):
            FittedModel(
                phi_bar=model.phi_bar, eta_mean=model.eta_mean,
                eta_draws=model.eta_mean,  # 2-d: missing draw axis
                vocabulary=model.vocabulary, label_names=model.label_names,
                n_topics=2, alpha=0.1, beta=0.01, prior=model.prior,
            )
        with pytest.raises(ValueError, match="sum"):
            FittedModel(
                phi_bar=np.full((2, 4), 0.5), eta_mean=model.eta_mean,
                eta_draws=model.eta_draws, vocabulary=model.vocabulary,
                label_names=model.label_names, n_topics=2, alpha=0.1,
                beta=0.01, prior=model.prior,
            )

    def test_round_trip(self, tmp_path):
        model = _toy_model(n_covariates=1)
        path = tmp_path / "model.npz"
        save_model(model, str(path))
        loaded = load_model(str(path))
        np.testing.assert_array_equal(loaded.phi_bar, model.phi_bar)
        np.testing.assert_array_equal(loaded.eta_draws, model.eta_draws)
        assert loaded.vocabulary.types == model.vocabulary.types
        assert loaded.label_names == model.label_names
        assert loaded.prior.kind == "horseshoe"
        assert loaded.predict_passes == 50
        assert loaded.n_covariates == 1
        enc = loaded.covariate_encoder()
        assert enc is not None and enc.feature_names == ["age"]

    def test_rewrite_is_byte_identical(self, tmp_path):
        model = _toy_model()
        p1, p2 = tmp_path / "m1.npz", tmp_path / "m2.npz"
        save_model(model, str(p1))
        save_model(model, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_kind_rejected(self, tmp_path):
        from dolda.serialize import save_bundle

        path = tmp_path / "other.npz"
        save_bundle(str(path), {"kind": "sampler_snapshot"}, {"z": np.zeros(3)})
        with pytest.raises(ValueError, match="fitted model"):
            load_model(str(path))

    def test_predictions_survive_round_trip(self, tmp_path):
        model = _toy_model()
        docs = [np.array([0, 1, 1], np.int32), np.array([3, 2], np.int32)]
        path = tmp_path / "model.npz"
        save_model(model, str(path))
        loaded = load_model(str(path))
        l1, p1, z1 = predict_corpus(model, docs, seed=3)
        l2, p2, z2 = predict_corpus(loaded, docs, seed=3)
        np.testing.assert_array_equal(l1, l2)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(z1, z2)
