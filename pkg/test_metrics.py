#!/usr/bin/env python3
"""
Tests for FID (Gaussian fitting, PSD square root, Fréchet distance),
feature extractors and Inception Score
"""

import logging
import math
import sys

import numpy as np
import pytest

from errors import ConfigError, ContractError, DimensionError, InsufficientDataError
from metrics import (GaussianStats, IdentityExtractor, SmallCNNClassifier, SmallCNNExtractor, fid,
                     fit_gaussian, frechet_distance, get_extractor, inception_score,
                     inception_score_from_probs, matrix_sqrt_psd)


def random_spd(rng, d):
    a = rng.standard_normal((d, d))
    return a @ a.T + 0.1 * np.eye(d)


def direct_inception_score(probs):
    n, c = probs.shape
    marginal = [sum(probs[i][j] for i in range(n)) / n for j in range(c)]
    total = 0.0
    for i in range(n):
        for j in range(c):
            if probs[i][j] > 0:
                total += probs[i][j] * (math.log(probs[i][j]) - math.log(marginal[j]))
    return math.exp(total / n)


class TestGaussian:
    def test_fit(self, rng):
        features = rng.standard_normal((500, 3))
        stats = fit_gaussian(features)
        np.testing.assert_allclose(stats.mu, features.mean(axis=0))
        np.testing.assert_allclose(stats.sigma, np.cov(features, rowvar=False), rtol=1e-12)
        assert np.array_equal(stats.sigma, stats.sigma.T)

    def test_needs_two_samples(self):
        with pytest.raises(InsufficientDataError):
            fit_gaussian(np.ones((1, 4)))

    def test_needs_matrix(self):
        with pytest.raises(DimensionError):
            fit_gaussian(np.ones(5))


class TestMatrixSqrt:
    def test_squares_back(self, rng):
        a = random_spd(rng, 6)
        root = matrix_sqrt_psd(a)
        np.testing.assert_allclose(root @ root, a, rtol=1e-9, atol=1e-9)
        assert np.array_equal(root, root.T)

    def test_rejects_asymmetric(self):
        with pytest.raises(ContractError):
            matrix_sqrt_psd(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_clamps_negative_eigenvalues(self, caplog):
        with caplog.at_level(logging.WARNING):
            root = matrix_sqrt_psd(np.diag([4.0, -1e-3]))
        np.testing.assert_allclose(root, np.diag([2.0, 0.0]), atol=1e-12)
        assert 'Clamping' in caplog.text


class TestFrechetDistance:
    def test_one_dimensional_closed_form(self):
        a = GaussianStats(mu=np.array([0.0]), sigma=np.array([[1.0]]))
        b = GaussianStats(mu=np.array([3.0]), sigma=np.array([[4.0]]))
        assert frechet_distance(a, b) == pytest.approx(10.0, abs=1e-9)

    def test_diagonal_closed_form(self, rng):
        va, vb = rng.uniform(0.5, 2.0, 4), rng.uniform(0.5, 2.0, 4)
        mu_a, mu_b = rng.standard_normal(4), rng.standard_normal(4)
        expected = np.sum((mu_a - mu_b) ** 2) + np.sum((np.sqrt(va) - np.sqrt(vb)) ** 2)
        value = frechet_distance(GaussianStats(mu_a, np.diag(va)), GaussianStats(mu_b, np.diag(vb)))
        assert value == pytest.approx(expected, rel=1e-9)

    def test_identical_is_zero(self, rng):
        stats = GaussianStats(rng.standard_normal(5), random_spd(rng, 5))
        assert frechet_distance(stats, stats) < 1e-8

    def test_symmetric_and_non_negative(self, rng):
        for _ in range(20):
            a = GaussianStats(rng.standard_normal(4), random_spd(rng, 4))
            b = GaussianStats(rng.standard_normal(4), random_spd(rng, 4))
            ab, ba = frechet_distance(a, b), frechet_distance(b, a)
            assert ab >= 0
            assert ab == pytest.approx(ba, rel=1e-8, abs=1e-10)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionError):
            frechet_distance(GaussianStats(np.zeros(2), np.eye(2)), GaussianStats(np.zeros(3), np.eye(3)))


class TestFid:
    def test_same_set_is_zero(self, rng):
        images = rng.uniform(-1, 1, size=(40, 1, 2, 2))
        assert fid(images, images, IdentityExtractor()) < 1e-8

    def test_mean_shift(self, rng):
        images = rng.uniform(-0.5, 0.5, size=(60, 1, 2, 2))
        assert fid(images, images + 0.5, IdentityExtractor()) == pytest.approx(1.0, rel=1e-9)

    def test_smallcnn_separates_sets(self, rng):
        extractor = SmallCNNExtractor(seed=0)
        flat = np.zeros((32, 3, 8, 8)) + rng.normal(0, 0.05, size=(32, 3, 8, 8))
        noisy = rng.uniform(-1, 1, size=(32, 3, 8, 8))
        assert fid(flat, flat, extractor) < 1e-6
        assert fid(flat, noisy, extractor) > fid(flat, flat + 0.01, extractor)

    def test_sampled_gaussians_approach_closed_form(self, rng):
        a = rng.normal(0.0, 1.0, size=(10_000, 1, 1, 1))
        b = rng.normal(3.0, 2.0, size=(10_000, 1, 1, 1))
        assert fid(a, b, IdentityExtractor()) == pytest.approx(10.0, rel=0.05)

    def test_invariant_to_image_order(self, rng):
        real = rng.uniform(-1, 1, size=(30, 3, 2, 2))
        fake = rng.uniform(-0.5, 1, size=(30, 3, 2, 2))
        extractor = IdentityExtractor()
        shuffled = fid(real[rng.permutation(30)], fake[rng.permutation(30)], extractor)
        assert shuffled == pytest.approx(fid(real, fake, extractor), rel=1e-8)

    def test_too_few_images(self, rng):
        with pytest.raises(InsufficientDataError):
            fid(rng.uniform(-1, 1, size=(1, 1, 2, 2)), rng.uniform(-1, 1, size=(5, 1, 2, 2)),
                IdentityExtractor())


class TestExtractors:
    def test_smallcnn_features(self, rng):
        images = rng.uniform(-1, 1, size=(5, 3, 8, 8))
        features = SmallCNNExtractor(seed=0, chunk=2)(images)
        assert features.shape == (5, 64)
        assert np.all(features >= 0)
        np.testing.assert_allclose(features, SmallCNNExtractor(seed=0)(images), rtol=1e-12)

    def test_smallcnn_channel_check(self, rng):
        with pytest.raises(DimensionError):
            SmallCNNExtractor()(rng.uniform(-1, 1, size=(2, 1, 8, 8)))

    def test_get_extractor(self):
        assert get_extractor('identity').name == 'identity'
        assert get_extractor('smallcnn').name == 'smallcnn'
        with pytest.raises(ConfigError):
            get_extractor('inception')


class TestInceptionScore:
    def test_uniform_posteriors_score_one(self):
        mean, std = inception_score_from_probs(np.full((20, 5), 0.2), n_splits=2)
        assert mean == pytest.approx(1.0, abs=1e-12)
        assert std == pytest.approx(0.0, abs=1e-12)

    def test_confident_distinct_classes_score_c(self):
        probs = np.tile(np.eye(10), (10, 1))
        mean, std = inception_score_from_probs(probs, n_splits=10)
        assert mean == pytest.approx(10.0, rel=1e-12)
        assert std == pytest.approx(0.0, abs=1e-9)

    def test_bounds(self, rng):
        logits = rng.standard_normal((100, 6))
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        mean, _ = inception_score_from_probs(probs, n_splits=4)
        assert 1.0 <= mean <= 6.0

    def test_rejects_bad_rows(self):
        with pytest.raises(ContractError):
            inception_score_from_probs(np.array([[0.5, 0.6], [0.5, 0.5]]), n_splits=1)
        with pytest.raises(ContractError):
            inception_score_from_probs(np.array([[1.5, -0.5], [0.5, 0.5]]), n_splits=1)

    def test_rejects_bad_splits(self):
        probs = np.full((4, 2), 0.5)
        with pytest.raises(ContractError):
            inception_score_from_probs(probs, n_splits=0)
        with pytest.raises(ContractError):
            inception_score_from_probs(probs, n_splits=5)

    def test_classifier_pipeline(self, rng):
        classifier = SmallCNNClassifier(n_classes=10, seed=0)
        images = rng.uniform(-1, 1, size=(20, 3, 8, 8))
        probs = classifier(images)
        assert probs.shape == (20, 10)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        mean, std = inception_score(images, classifier, n_splits=2)
        assert 1.0 <= mean <= 10.0
        assert std >= 0

    def test_matches_direct_loops(self, rng):
        probs = rng.dirichlet(np.ones(5), size=30)
        for n_splits in (1, 3):
            scores = [direct_inception_score(part) for part in np.array_split(probs, n_splits)]
            mean, std = inception_score_from_probs(probs, n_splits=n_splits)
            assert mean == pytest.approx(np.mean(scores), rel=1e-10)
            assert std == pytest.approx(np.std(scores), rel=1e-8, abs=1e-12)

    def test_invariant_to_sample_order(self, rng):
        probs = rng.dirichlet(np.ones(4), size=40)
        shuffled = probs[rng.permutation(40)]
        assert inception_score_from_probs(shuffled, 1)[0] == pytest.approx(
            inception_score_from_probs(probs, 1)[0], rel=1e-12)
        # reordering whole splits keeps every split score
        blocks = np.split(probs, 4)
        reordered = np.concatenate([blocks[i] for i in (2, 0, 3, 1)])
        for a, b in zip(inception_score_from_probs(reordered, 4), inception_score_from_probs(probs, 4)):
            assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
