"""Restoration-quality metrics: pixel MSE, SSIM, and the combined loss.

The combined loss optionally adds a pluggable deep-feature distance; no
pretrained network ships with this package, callers inject their own.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .imgcore import ImageBuffer, ValidationError

# Contract: symmetric, nonnegative, and zero on identical inputs.
FeatureDistance = Callable[[ImageBuffer, ImageBuffer], float]


@dataclass(frozen=True)
class SSIMConfig:
    """Gaussian-window SSIM parameters (canonical reference values)."""

    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValidationError(f"window must be odd and >= 3, got {self.window}")
        if not (self.sigma > 0):
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValidationError(f"k1 and k2 must be positive, got {self.k1}, {self.k2}")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the structural and feature terms in the combined loss."""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValidationError(
                f"loss weights must be nonnegative, got {self.lambda1}, {self.lambda2}"
            )


def _check_same_shape(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.width != b.width or a.height != b.height:
        raise ValidationError(
            f"image dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )


def mse(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean squared error over intensities normalized to [0, 1]."""
    _check_same_shape(a, b)
    diff = (a.array.astype(np.float64) - b.array.astype(np.float64)) / 255.0
    return float(np.mean(diff * diff))


def _gaussian_taps(window: int, sigma: float) -> np.ndarray:
    r = window // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def _valid_conv2d(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 2-D convolution keeping only fully-supported positions."""
    w = len(taps)
    h_out = img.shape[0] - w + 1
    w_out = img.shape[1] - w + 1
    tmp = np.zeros((img.shape[0], w_out), dtype=np.float64)
    for i in range(w):
        tmp += taps[i] * img[:, i : i + w_out]
    out = np.zeros((h_out, w_out), dtype=np.float64)
    for j in range(w):
        out += taps[j] * tmp[j : j + h_out, :]
    return out


def ssim(a: ImageBuffer, b: ImageBuffer, cfg: SSIMConfig = SSIMConfig()) -> float:
    """Structural similarity with Gaussian-weighted local statistics.

    Local means/variances/covariance use the normalized Gaussian window,
    statistics are evaluated only at fully-supported (non-padded) positions,
    and channel scores are averaged.  Returns 1 for identical inputs.
    """
    _check_same_shape(a, b)
    if a.width < cfg.window or a.height < cfg.window:
        raise ValidationError(
            f"image {a.width}x{a.height} smaller than SSIM window {cfg.window}"
        )
    taps = _gaussian_taps(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    scores = []
    for c in range(a.channels):
        x = a.array[:, :, c].astype(np.float64)
        y = b.array[:, :, c].astype(np.float64)
        mu_x = _valid_conv2d(x, taps)
        mu_y = _valid_conv2d(y, taps)
        var_x = _valid_conv2d(x * x, taps) - mu_x * mu_x
        var_y = _valid_conv2d(y * y, taps) - mu_y * mu_y
        cov = _valid_conv2d(x * y, taps) - mu_x * mu_y
        s = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
            (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        )
        scores.append(float(np.mean(s)))
    return float(np.mean(scores))


def restoration_loss(
    a: ImageBuffer,
    b: ImageBuffer,
    weights: LossWeights = LossWeights(),
    feature_distance: Optional[FeatureDistance] = None,
    ssim_cfg: SSIMConfig = SSIMConfig(),
) -> float:
    """Combined restoration loss: MSE + lambda1*DSSIM + lambda2*feature term.

    The structural term is the distance form (1 - SSIM)/2 so that larger
    means worse, like the other two terms.  The feature term is 0 when no
    distance is injected.  Terms with zero weight are skipped entirely, so
    lambda1=lambda2=0 reduces exactly to :func:`mse`.
    """
    _check_same_shape(a, b)
    total = mse(a, b)
    if weights.lambda1 > 0:
        total += weights.lambda1 * (1.0 - ssim(a, b, ssim_cfg)) / 2.0
    if weights.lambda2 > 0 and feature_distance is not None:
        d = float(feature_distance(a, b))
        if d < 0:
            raise ValidationError(f"feature distance must be nonnegative, got {d}")
        total += weights.lambda2 * d
    return total
