"""Training-time augmentations for low-light imagery.

Two randomized transforms, patch-wise light adjustment and per-region block
shuffling, plus the classic global histogram equalization used as an
enhancement baseline.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .imgcore import ImageBuffer, Region, RngStream, ValidationError


@dataclass(frozen=True)
class LightAugConfig:
    """Ranges for patch-wise brightness/contrast jitter.

    ``alpha_limit`` bounds the contrast shift a (gain is 1+a), ``delta_limit``
    bounds the brightness shift d as a fraction of the 255 dynamic range, and
    the patch fractions bound the tile side relative to min(width, height).
    """

    alpha_limit: float = 0.3
    delta_limit: float = 0.3
    patch_frac_min: float = 0.04
    patch_frac_max: float = 0.20

    def __post_init__(self):
        if not (0 <= self.alpha_limit < 1):
            raise ValidationError(f"alpha_limit must be in [0, 1), got {self.alpha_limit}")
        if not (0 <= self.delta_limit <= 1):
            raise ValidationError(f"delta_limit must be in [0, 1], got {self.delta_limit}")
        if not (0 < self.patch_frac_min <= self.patch_frac_max <= 1):
            raise ValidationError(
                "need 0 < patch_frac_min <= patch_frac_max <= 1, got "
                f"[{self.patch_frac_min}, {self.patch_frac_max}]"
            )


@dataclass(frozen=True)
class ShuffleConfig:
    """Block size and per-region selection probability for block shuffling."""

    block: int = 16
    prob: float = 0.5

    def __post_init__(self):
        if self.block < 1:
            raise ValidationError(f"block side must be >= 1, got {self.block}")
        if not (0 <= self.prob <= 1):
            raise ValidationError(f"prob must be in [0, 1], got {self.prob}")


def adjust_light(values: np.ndarray, contrast: float, brightness: float) -> np.ndarray:
    """Per-pixel light transfer: clamp(round((1+contrast) * (v + brightness*255))).

    ``contrast`` shifts the multiplicative gain away from 1 and ``brightness``
    shifts intensities by a fraction of the full 255 range.
    """
    v = np.asarray(values, dtype=np.float64)
    out = (1.0 + contrast) * (v + brightness * 255.0)
    return np.clip(np.rint(out), 0.0, 255.0).astype(np.uint8)


def patch_light_augment(img: ImageBuffer, cfg: LightAugConfig, rng: RngStream) -> ImageBuffer:
    """Jitter brightness and contrast independently in every tile.

    One tile side per call: round(u * min(w, h)) with u uniform in
    [patch_frac_min, patch_frac_max], floored at 1 pixel.  Tiles are anchored
    top-left with smaller edge tiles; tiles scan row-major, drawing contrast
    then brightness for each.
    """
    side = max(1, int(round(
        rng.uniform_in(cfg.patch_frac_min, cfg.patch_frac_max) * min(img.width, img.height)
    )))
    out = img.array.copy()
    for ty in range(0, img.height, side):
        for tx in range(0, img.width, side):
            a = rng.uniform_in(-cfg.alpha_limit, cfg.alpha_limit)
            d = rng.uniform_in(-cfg.delta_limit, cfg.delta_limit)
            tile = out[ty : ty + side, tx : tx + side]
            out[ty : ty + side, tx : tx + side] = adjust_light(tile, a, d)
    return ImageBuffer(out)


def block_shuffle(
    img: ImageBuffer,
    regions: Sequence[Region],
    cfg: ShuffleConfig,
    rng: RngStream,
) -> ImageBuffer:
    """Randomly permute the full BxB blocks inside selected regions.

    Regions are visited in input order; each is selected by one Bernoulli(p)
    draw.  The block grid anchors at the region's top-left corner and partial
    edge blocks are excluded, so pixels outside full blocks never move.
    Permutations come from an unbiased Fisher-Yates shuffle.
    """
    for region in regions:
        region.check_within(img.width, img.height)
    out = img.array.copy()
    b = cfg.block
    for region in regions:
        if not (rng.uniform() < cfg.prob):
            continue
        ny, nx = region.h // b, region.w // b
        n = ny * nx
        if n <= 1:
            continue
        perm = list(range(n))
        rng.shuffle(perm)
        blocks = []
        for i in range(n):
            y0 = region.y + (i // nx) * b
            x0 = region.x + (i % nx) * b
            blocks.append(out[y0 : y0 + b, x0 : x0 + b].copy())
        for i in range(n):
            y0 = region.y + (i // nx) * b
            x0 = region.x + (i % nx) * b
            out[y0 : y0 + b, x0 : x0 + b] = blocks[perm[i]]
    return ImageBuffer(out)


def histogram_equalize(img: ImageBuffer) -> ImageBuffer:
    """Classic per-channel histogram equalization.

    out(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255) with cdf_min the
    smallest nonzero cdf value; constant channels pass through unchanged.
    """
    out = np.empty_like(img.array)
    n = img.width * img.height
    for c in range(img.channels):
        channel = img.array[:, :, c]
        hist = np.bincount(channel.reshape(-1), minlength=256)
        cdf = np.cumsum(hist)
        cdf_min = int(cdf[hist > 0][0])  # cdf at the first occupied bin
        if n == cdf_min:
            out[:, :, c] = channel
            continue
        lut = np.clip(
            np.rint((cdf - cdf_min) / float(n - cdf_min) * 255.0), 0.0, 255.0
        ).astype(np.uint8)
        out[:, :, c] = lut[channel]
    return ImageBuffer(out)
