#!/usr/bin/env python3
"""
Evaluation Metrics

FID and Inception Score over pluggable feature extractors / classifiers.

FID = ‖μa − μb‖² + Tr(Σa + Σb − 2·(Σa^½ Σb Σa^½)^½)

The default desk-scale extractor is a fixed-seed random-weight CNN, so the
numbers produced here are an FID-proxy: comparable between runs of this
toolkit, not with Inception-v3 based values.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple, Union

import numpy as np

from dataio import ImageBatch
from errors import ConfigError, ContractError, DimensionError, InsufficientDataError
from tensor_engine import Tensor, activation, avg_pool2d, conv2d, softmax

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8
EIGEN_TOL = 1e-8
PROB_TOL = 1e-6
EXTRACTORS = ('identity', 'smallcnn')

Images = Union[ImageBatch, np.ndarray]


@dataclass
class GaussianStats:
    """Mean vector and covariance of a feature set"""
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def _as_images(images: Images) -> np.ndarray:
    return images.images if isinstance(images, ImageBatch) else np.asarray(images)


def fit_gaussian(features: np.ndarray) -> GaussianStats:
    """
    Fit a Gaussian to an n×d feature matrix

    Args:
        features: one row per sample

    Returns:
        GaussianStats with the sample mean and unbiased (n−1) covariance
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionError(f"fit_gaussian expects an n×d matrix, got shape {features.shape}")
    if features.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 samples to fit a Gaussian, got {features.shape[0]}")
    mu = features.mean(axis=0)
    sigma = np.atleast_2d(np.cov(features, rowvar=False, ddof=1))
    return GaussianStats(mu=mu, sigma=(sigma + sigma.T) / 2)


def matrix_sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix by eigendecomposition, clamping negative eigenvalues to 0"""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix_sqrt_psd expects a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    asymmetry = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asymmetry > SYMMETRY_TOL * scale:
        raise ContractError(f"matrix_sqrt_psd input is not symmetric (max |A - Aᵀ| = {asymmetry:.3e})")
    eigenvalues, eigenvectors = np.linalg.eigh((a + a.T) / 2)
    if eigenvalues.size and eigenvalues.min() < -EIGEN_TOL * scale:
        logger.warning(f"Clamping negative eigenvalue {eigenvalues.min():.3e} to 0 in matrix square root")
    root = (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.T
    return (root + root.T) / 2


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    if a.dim != b.dim or a.sigma.shape != b.sigma.shape:
        raise DimensionError(f"Gaussian dimensions differ: {a.dim} vs {b.dim}")
    diff = a.mu - b.mu
    root_a = matrix_sqrt_psd(a.sigma)
    cross = root_a @ b.sigma @ root_a
    covmean = matrix_sqrt_psd((cross + cross.T) / 2)
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2 * np.trace(covmean))
    if value < -EIGEN_TOL:
        logger.warning(f"Fréchet distance {value:.3e} below numerical floor, clamping to 0")
    return max(value, 0.0)


class IdentityExtractor:
    """Flattened pixels as features"""
    name = 'identity'

    def __call__(self, images: Images) -> np.ndarray:
        images = _as_images(images)
        return images.reshape(len(images), -1).astype(np.float64)


class SmallCNNExtractor:
    """
    Fixed random-weight CNN: conv3×3→32, ReLU, 2×2 average pool,
    conv3×3→64, ReLU, global mean. Features have d = 64.
    """
    name = 'smallcnn'
    dim = 64

    def __init__(self, seed: int = 0, in_channels: int = 3, chunk: int = 64):
        rng = np.random.default_rng(seed)
        self.conv1 = Tensor(rng.normal(0.0, np.sqrt(2.0 / (in_channels * 9)), size=(32, in_channels, 3, 3)))
        self.conv2 = Tensor(rng.normal(0.0, np.sqrt(2.0 / (32 * 9)), size=(self.dim, 32, 3, 3)))
        self.chunk = chunk

    def __call__(self, images: Images) -> np.ndarray:
        images = _as_images(images).astype(np.float64)
        if images.ndim != 4 or images.shape[1] != self.conv1.shape[1]:
            raise DimensionError(f"SmallCNNExtractor expects N×{self.conv1.shape[1]}×H×W, got {images.shape}")
        features = []
        for start in range(0, len(images), self.chunk):
            h = activation(conv2d(Tensor(images[start:start + self.chunk]), self.conv1, padding=1), 'relu')
            if h.shape[2] % 2 == 0 and h.shape[3] % 2 == 0:
                h = avg_pool2d(h, 2)
            h = activation(conv2d(h, self.conv2, padding=1), 'relu')
            features.append(h.data.mean(axis=(2, 3)))
        return np.concatenate(features) if features else np.zeros((0, self.dim))


class SmallCNNClassifier:
    """Class posteriors from a fixed random linear head over SmallCNNExtractor features"""

    def __init__(self, n_classes: int = 10, seed: int = 0, temperature: float = 10.0):
        self.features = SmallCNNExtractor(seed=seed)
        rng = np.random.default_rng([seed, n_classes])
        self.head = rng.normal(0.0, 1.0 / np.sqrt(self.features.dim), size=(self.features.dim, n_classes))
        self.temperature = temperature
        self.n_classes = n_classes

    def __call__(self, images: Images) -> np.ndarray:
        feats = self.features(images)
        feats = feats / (np.linalg.norm(feats, axis=1, keepdims=True) + 1e-12)
        return softmax(Tensor(self.temperature * np.sqrt(self.features.dim) * feats @ self.head)).data


def get_extractor(name: str, seed: int = 0) -> Callable[[Images], np.ndarray]:
    if name == 'identity':
        return IdentityExtractor()
    if name == 'smallcnn':
        return SmallCNNExtractor(seed=seed)
    raise ConfigError(f"extractor must be one of {EXTRACTORS}, got '{name}'")


def fid(real_images: Images, fake_images: Images, extractor: Callable[[Images], np.ndarray]) -> float:
    """Fréchet distance between Gaussians fitted to extractor features of two image sets"""
    real = fit_gaussian(extractor(real_images))
    fake = fit_gaussian(extractor(fake_images))
    value = frechet_distance(real, fake)
    logger.debug(f"FID-proxy ({getattr(extractor, 'name', 'custom')}): {value:.6f}")
    return value


def inception_score_from_probs(probs: np.ndarray, n_splits: int = 10) -> Tuple[float, float]:
    """
    Inception Score of class posterior rows

    Args:
        probs: n×C rows, each summing to 1
        n_splits: number of contiguous splits

    Returns:
        (mean, std) over splits of exp(mean_i KL(p(y|x_i) ‖ p(y)))
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise DimensionError(f"class posteriors must be n×C, got shape {probs.shape}")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL):
        raise ContractError("class posterior rows must be non-negative and sum to 1 within 1e-6")
    if not 1 <= n_splits <= len(probs):
        raise ContractError(f"n_splits must be in [1, {len(probs)}], got {n_splits}")

    scores = []
    for part in np.array_split(probs, n_splits):
        marginal = part.mean(axis=0)
        with np.errstate(divide='ignore', invalid='ignore'):
            terms = np.where(part > 0, part * (np.log(part) - np.log(marginal)), 0.0)
        scores.append(np.exp(terms.sum(axis=1).mean()))
    return float(np.mean(scores)), float(np.std(scores))


def inception_score(images: Images, classifier: Callable[[Images], np.ndarray],
                    n_splits: int = 10) -> Tuple[float, float]:
    return inception_score_from_probs(classifier(images), n_splits)
