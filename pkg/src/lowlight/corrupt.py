"""Synthesis of (corrupted, clean) restoration pairs from well-lit images.

Corruption is two-stage: uniform gray-level quantization down to ``k``
levels, then photon shot noise at a chosen photons-per-intensity scale.
Severity is controlled by ``k`` (fewer levels = worse) and the photon scale
(fewer photons = noisier).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgcore import (
    ImageBuffer,
    Region,
    RngStream,
    ValidationError,
    extract_random_patch,
    load_image,
    save_png,
)

# Poisson sampling switches to the normal approximation at this rate.
_NORMAL_APPROX_LAMBDA = 30.0
# CDF inversion iteration guard; unreachable for lambda < 30 except when the
# uniform draw sits within a float ulp of 1.
_INVERSE_CAP = 512

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass(frozen=True)
class CorruptionConfig:
    """Severity ranges for restoration-pair generation."""

    k_min: int = 2
    k_max: int = 8
    photon_scale_min: float = 0.05
    photon_scale_max: float = 1.0
    patch_side: int = 256

    def __post_init__(self):
        if not (2 <= self.k_min <= self.k_max <= 256):
            raise ValidationError(
                f"need 2 <= k_min <= k_max <= 256, got [{self.k_min}, {self.k_max}]"
            )
        if not (0 < self.photon_scale_min <= self.photon_scale_max):
            raise ValidationError(
                "need 0 < photon_scale_min <= photon_scale_max, got "
                f"[{self.photon_scale_min}, {self.photon_scale_max}]"
            )
        if not math.isfinite(self.photon_scale_max):
            raise ValidationError("photon_scale_max must be finite")
        if self.patch_side < 1:
            raise ValidationError(f"patch_side must be >= 1, got {self.patch_side}")


@dataclass(frozen=True)
class CorruptionRecord:
    """Provenance of one corrupted patch; replays bit-exactly via
    :func:`apply_corruption`."""

    k: int
    photon_scale: float
    seed: int


def posterize(img: ImageBuffer, k: int) -> ImageBuffer:
    """Quantize each channel to ``k`` uniform gray levels.

    Segment index i = floor(v*k/256); reconstruction value round(i*255/(k-1)),
    anchoring 0 and 255.  Idempotent; identity at k=256.
    """
    if not (2 <= k <= 256):
        raise ValidationError(f"gray-level count must be in [2, 256], got {k}")
    v = np.arange(256, dtype=np.int64)
    idx = np.minimum((v * k) // 256, k - 1)
    lut = np.rint(idx * 255.0 / (k - 1)).astype(np.uint8)
    return ImageBuffer(lut[img.array])


def _poisson_inverse(lam: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Smallest j with u < CDF(j), probabilities by upward recurrence."""
    p = np.exp(-lam)
    cdf = p.copy()
    k = np.zeros(lam.shape, dtype=np.float64)
    for step in range(1, _INVERSE_CAP + 1):
        active = u >= cdf
        if not active.any():
            break
        p = p * (lam / step)
        cdf = cdf + p
        k[active] += 1.0
    return k


def sample_poisson(lam: np.ndarray, rng: RngStream) -> np.ndarray:
    """Poisson draws with a fixed, replayable algorithm.

    Per element, in element order: rates below 30 invert the CDF and consume
    one uniform; rates at or above 30 use the rounded normal approximation
    N(lam, lam) clamped at 0, consuming two uniforms via Box-Muller
    z = sqrt(-2*ln(1-u1)) * cos(2*pi*u2).
    """
    lam = np.asarray(lam, dtype=np.float64)
    flat = lam.reshape(-1)
    use_normal = flat >= _NORMAL_APPROX_LAMBDA
    draws_per = np.where(use_normal, 2, 1)
    starts = np.concatenate(([0], np.cumsum(draws_per)[:-1]))
    u = rng.uniform_block(int(draws_per.sum()))

    out = np.empty(flat.shape, dtype=np.float64)
    inv = ~use_normal
    if inv.any():
        out[inv] = _poisson_inverse(flat[inv], u[starts[inv]])
    if use_normal.any():
        lam_n = flat[use_normal]
        u1 = u[starts[use_normal]]
        u2 = u[starts[use_normal] + 1]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        out[use_normal] = np.maximum(np.rint(lam_n + z * np.sqrt(lam_n)), 0.0)
    return out.reshape(lam.shape)


def shot_noise(img: ImageBuffer, photon_scale: float, rng: RngStream) -> ImageBuffer:
    """Photon shot noise: v -> clamp(round(Poisson(v*photon_scale)/photon_scale)).

    ``photon_scale`` is photons per intensity unit; lower values mean fewer
    photons and stronger noise.  Output variance approximates v/photon_scale.
    """
    if not (photon_scale > 0) or not math.isfinite(photon_scale):
        raise ValidationError(f"photon_scale must be positive and finite, got {photon_scale}")
    lam = img.array.astype(np.float64) * photon_scale
    counts = sample_poisson(lam, rng)
    out = np.clip(np.rint(counts / photon_scale), 0.0, 255.0).astype(np.uint8)
    return ImageBuffer(out)


def apply_corruption(clean: ImageBuffer, k: int, photon_scale: float, seed: int) -> ImageBuffer:
    """Replay a recorded corruption bit-exactly."""
    return shot_noise(posterize(clean, k), photon_scale, RngStream(seed))


def corrupt_patch(
    clean: ImageBuffer, cfg: CorruptionConfig, rng: RngStream
) -> tuple[ImageBuffer, ImageBuffer, CorruptionRecord]:
    """Draw a severity and corrupt one patch.

    Draw order: k uniform over [k_min, k_max], photon scale log-uniform over
    [photon_scale_min, photon_scale_max], then one 64-bit noise seed.
    """
    k = cfg.k_min + rng.randint(cfg.k_max - cfg.k_min + 1)
    scale = math.exp(
        rng.uniform_in(math.log(cfg.photon_scale_min), math.log(cfg.photon_scale_max))
    )
    seed = rng.next_u64()
    corrupted = apply_corruption(clean, k, scale, seed)
    return corrupted, clean, CorruptionRecord(k=k, photon_scale=scale, seed=seed)


def _list_source_images(src_dir: Path) -> list[Path]:
    paths = sorted(
        p for p in src_dir.iterdir()
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not paths:
        raise ValidationError(f"no PNG/JPEG images found in {src_dir}")
    return paths


def _eligible_sources(paths: list[Path], patch_side: int) -> list[Path]:
    from PIL import Image  # header-only size probe, no full decode

    eligible = []
    for p in paths:
        with Image.open(p) as im:
            w, h = im.size
        if w >= patch_side and h >= patch_side:
            eligible.append(p)
    if not eligible:
        raise ValidationError(
            f"no source image is at least {patch_side}x{patch_side} pixels"
        )
    return eligible


def generate_restoration_dataset(
    src_dir: str | os.PathLike,
    cfg: CorruptionConfig,
    out_dir: str | os.PathLike,
    count: int,
    master_seed: int,
    jobs: int = 1,
) -> list[dict]:
    """Emit ``count`` (corrupted, clean) PNG pairs plus a JSONL manifest.

    Pair i derives its own stream from (master_seed, i); per pair the draw
    order is source index, patch x, patch y, then the corrupt_patch draws.
    Output bytes are a pure function of (sorted source listing, cfg, seed)
    regardless of worker count.
    """
    if count < 0:
        raise ValidationError(f"pair count must be >= 0, got {count}")
    src = Path(src_dir)
    if not src.is_dir():
        raise ValidationError(f"source directory does not exist: {src}")
    out = Path(out_dir)
    clean_dir = out / "clean"
    corrupt_dir = out / "corrupt"
    clean_dir.mkdir(parents=True, exist_ok=True)
    corrupt_dir.mkdir(parents=True, exist_ok=True)

    records: list[dict] = []
    if count > 0:
        sources = _eligible_sources(_list_source_images(src), cfg.patch_side)
        cache: dict[Path, ImageBuffer] = {}

        def load_cached(path: Path) -> ImageBuffer:
            img = cache.get(path)
            if img is None:
                img = cache.setdefault(path, load_image(path))
            return img

        def make_pair(i: int) -> dict:
            stream = RngStream(master_seed, stream_id=i)
            src_path = sources[stream.randint(len(sources))]
            patch, region = extract_random_patch(load_cached(src_path), cfg.patch_side, stream)
            corrupted, clean, rec = corrupt_patch(patch, cfg, stream)
            save_png(clean, clean_dir / f"{i:06d}.png")
            save_png(corrupted, corrupt_dir / f"{i:06d}.png")
            return {
                "index": i,
                "source": src_path.name,
                "region": list(region.as_tuple()),
                "k": rec.k,
                "photon_scale": rec.photon_scale,
                "seed": rec.seed,
            }

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                records = list(pool.map(make_pair, range(count)))
        else:
            records = [make_pair(i) for i in range(count)]
        records.sort(key=lambda r: r["index"])

    with open(out / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return records
