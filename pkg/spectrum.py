#!/usr/bin/env python3
"""
Fourier Power Spectrum Analysis

1. power_spectrum2d: |DFT2(image)|², zero frequency shifted to (R/2, R/2)
2. azimuthal_profile: sum of the spectrum over annuli of equal rounded radius
3. profile_stats: per-bin mean and variance of the profiles of an image set

Radii are rounded to the nearest integer and clamped to K = floor(√2·R/2), so
bins 0..K partition all R² spectrum entries.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from dataio import ImageBatch
from errors import ContractError, DimensionError

logger = logging.getLogger(__name__)

LUMINANCE = np.array([0.299, 0.587, 0.114])
CSV_FIELDS = ['bin', 'mean_a', 'var_a', 'mean_b', 'var_b']


@dataclass
class SpectrumProfile:
    """Across-image statistics of azimuthal power profiles"""
    bins: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    n_images: int
    normalized: bool
    resolution: int


def max_radius(resolution: int) -> int:
    return int(np.floor(np.sqrt(2.0) * resolution / 2))


def radius_map(resolution: int) -> np.ndarray:
    """Rounded distance of every spectrum entry from the centered DC bin, clamped to K"""
    center = resolution // 2
    rows, cols = np.indices((resolution, resolution))
    radius = np.rint(np.hypot(rows - center, cols - center)).astype(np.int64)
    return np.minimum(radius, max_radius(resolution))


def power_spectrum2d(image: np.ndarray) -> np.ndarray:
    """Centered power spectrum of a square grayscale image (unnormalized forward DFT)"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise DimensionError(f"power_spectrum2d expects a square R×R image, got shape {image.shape}")
    if image.shape[0] < 2:
        raise DimensionError(f"power_spectrum2d needs R >= 2, got {image.shape[0]}")
    spectrum = np.fft.fftshift(np.fft.fft2(image))
    return spectrum.real ** 2 + spectrum.imag ** 2


def azimuthal_profile(ps: np.ndarray, normalize: bool = False) -> np.ndarray:
    """
    Integrate a centered power spectrum over rounded-radius annuli

    Args:
        ps: R×R array from power_spectrum2d
        normalize: divide every bin by bin 0

    Returns:
        Array of K+1 bin sums
    """
    ps = np.asarray(ps, dtype=np.float64)
    if ps.ndim != 2 or ps.shape[0] != ps.shape[1]:
        raise DimensionError(f"azimuthal_profile expects a square spectrum, got shape {ps.shape}")
    resolution = ps.shape[0]
    profile = np.bincount(radius_map(resolution).ravel(), weights=ps.ravel(),
                          minlength=max_radius(resolution) + 1)
    if normalize:
        if profile[0] == 0:
            raise ContractError("cannot normalize a profile whose zero-frequency bin is 0")
        profile = profile / profile[0]
    return profile


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """
    Map one image to an R×R grayscale array

    H×W arrays pass through unchanged; C×H×W images in [-1, 1] are mapped to
    [0, 1] and, for C = 3, combined with luminance weights 0.299/0.587/0.114.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim != 3 or image.shape[0] not in (1, 3):
        raise DimensionError(f"expected an H×W or C×H×W image with C in (1, 3), got shape {image.shape}")
    unit = (image + 1.0) / 2.0
    if image.shape[0] == 1:
        return unit[0]
    return np.tensordot(LUMINANCE, unit, axes=1)


def image_profile(image: np.ndarray, normalize: bool = False) -> np.ndarray:
    return azimuthal_profile(power_spectrum2d(to_grayscale(image)), normalize)


def profile_stats(images: Union[ImageBatch, np.ndarray, Sequence[np.ndarray]],
                  normalize: bool = False) -> SpectrumProfile:
    """
    Per-bin mean and population variance of the profiles of an image set

    Args:
        images: ImageBatch, N×C×R×R array, or a sequence of individual images
        normalize: normalize each image's profile by its bin 0 first

    Returns:
        SpectrumProfile
    """
    if isinstance(images, ImageBatch):
        images = images.images
    images = list(images)
    if not images:
        raise ContractError("profile_stats needs at least one image")
    resolutions = {np.shape(im)[-1] for im in images} | {np.shape(im)[-2] for im in images}
    if len(resolutions) != 1:
        raise DimensionError(f"profile_stats needs a uniform resolution, got {sorted(resolutions)}")

    profiles = np.stack([image_profile(im, normalize) for im in images])
    resolution = resolutions.pop()
    return SpectrumProfile(bins=np.arange(profiles.shape[1]), mean=profiles.mean(axis=0),
                           variance=profiles.var(axis=0), n_images=len(images),
                           normalized=normalize, resolution=resolution)


def spectrum_rows(a: SpectrumProfile, b: Optional[SpectrumProfile] = None) -> List[Dict]:
    if b is not None and len(b.bins) != len(a.bins):
        raise DimensionError(f"profiles have {len(a.bins)} and {len(b.bins)} bins; resolutions differ")
    rows = []
    for k in a.bins:
        rows.append({
            'bin': int(k),
            'mean_a': float(a.mean[k]),
            'var_a': float(a.variance[k]),
            'mean_b': float(b.mean[k]) if b is not None else '',
            'var_b': float(b.variance[k]) if b is not None else '',
        })
    return rows


def write_spectrum_csv(path: Union[str, Path], a: SpectrumProfile,
                       b: Optional[SpectrumProfile] = None) -> Path:
    """One row per radial bin: bin, mean_a, var_a, mean_b, var_b"""
    path = Path(path)
    rows = spectrum_rows(a, b)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"Spectrum profile ({len(rows)} bins) saved to {path}")
    return path


def plot_profiles(path: Union[str, Path], a: SpectrumProfile, b: Optional[SpectrumProfile] = None,
                  labels: Sequence[str] = ('set A', 'set B')) -> Path:
    """Mean ± one standard deviation per bin on a log scale, saved as PNG"""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for profile, label in zip((a, b), labels):
        if profile is None:
            continue
        std = np.sqrt(profile.variance)
        ax.plot(profile.bins, profile.mean, label=f"{label} (n={profile.n_images})")
        ax.fill_between(profile.bins, np.clip(profile.mean - std, 1e-12, None), profile.mean + std, alpha=0.25)
    ax.set_yscale('log')
    ax.set_xlabel('radial frequency bin')
    ax.set_ylabel('normalized power' if a.normalized else 'power')
    ax.set_title(f"Azimuthally integrated power spectrum ({a.resolution}x{a.resolution})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
