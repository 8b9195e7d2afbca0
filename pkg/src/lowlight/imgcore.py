"""Image buffers, rectangular regions, deterministic randomness, and PNG/JPEG IO.

Everything pixel-related in this package flows through :class:`ImageBuffer`
(8-bit interleaved RGB) and :class:`RngStream` (a fixed, documented counter
RNG).  No operation ever consults ambient randomness or the wall clock.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError


class LowlightError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LowlightError):
    """A parameter, file schema, or precondition was violated."""


class ImageFormatError(LowlightError):
    """An image file is unsupported or could not be decoded."""


_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_M1 = 0xBF58476D1CE4E5B9
_MIX_M2 = 0x94D049BB133111EB


def _mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective permutation of 64-bit integers."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_M1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_M2) & _MASK64
    return z ^ (z >> 31)


def _mix64_vec(z: np.ndarray) -> np.ndarray:
    # Same permutation on a uint64 vector; numpy uint64 arithmetic wraps mod 2**64.
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_M2)
    return z ^ (z >> np.uint64(31))


class RngStream:
    """Deterministic 64-bit random stream, bit-stable across platforms.

    The generator is a Weyl counter passed through the SplitMix64 finalizer,
    written out here so outputs never depend on a library version:

        state_0     = mix(mix(seed) XOR mix(stream_id XOR 0x9E3779B97F4A7C15))
        state_{j+1} = (state_j + 0x9E3779B97F4A7C15)  mod 2**64
        output_j    = mix(state_{j+1})

        mix(z): z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9  mod 2**64
                z ^= z >> 27;  z *= 0x94D049BB133111EB  mod 2**64
                z ^= z >> 31

    Uniform doubles take the top 53 bits: u = (output >> 11) * 2**-53, giving
    values in [0, 1).  Bounded integers use unbiased modulo rejection.
    Identical ``(seed, stream_id)`` always replays the identical sequence;
    distinct stream ids give independent streams for parallel workers.
    """

    __slots__ = ("seed", "stream_id", "_state")

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = seed & _MASK64
        self.stream_id = stream_id & _MASK64
        self._state = _mix64(_mix64(self.seed) ^ _mix64(self.stream_id ^ _GOLDEN))

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def u64_block(self, n: int) -> np.ndarray:
        """The next ``n`` outputs as a uint64 vector.

        Because the state is a pure counter, a block is computable in one
        vectorized pass; the result is element-for-element identical to ``n``
        sequential :meth:`next_u64` calls.
        """
        if n < 0:
            raise ValidationError(f"block size must be >= 0, got {n}")
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        out = _mix64_vec(np.uint64(self._state) + steps)
        self._state = (self._state + n * _GOLDEN) & _MASK64
        return out

    def uniform(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_block(self, n: int) -> np.ndarray:
        return (self.u64_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        """Uniform double in [lo, hi)."""
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Unbiased uniform integer in [0, n) via modulo rejection."""
        if n <= 0:
            raise ValidationError(f"randint bound must be positive, got {n}")
        threshold = ((1 << 64) // n) * n
        while True:
            u = self.next_u64()
            if u < threshold:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle; uniform over all permutations."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle in pixel coordinates, top-left anchored."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValidationError(f"region extent must be positive, got {self.w}x{self.h}")

    def check_within(self, width: int, height: int) -> None:
        if self.x < 0 or self.y < 0 or self.x + self.w > width or self.y + self.h > height:
            raise ValidationError(
                f"region {self.as_tuple()} exceeds image bounds {width}x{height}"
            )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


class ImageBuffer:
    """8-bit interleaved RGB raster, the substrate of all pixel operations.

    Wraps a C-contiguous ``(height, width, 3)`` uint8 array.  The array is
    exposed through :attr:`array` for in-place mutation by its exclusive
    holder; every operation in this package returns a fresh buffer instead
    of mutating its input.
    """

    CHANNELS = 3

    __slots__ = ("_arr",)

    def __init__(self, array: np.ndarray):
        arr = np.asarray(array)
        if arr.dtype != np.uint8:
            raise ValidationError(f"image data must be uint8, got {arr.dtype}")
        if arr.ndim != 3 or arr.shape[2] != self.CHANNELS:
            raise ValidationError(f"image shape must be (h, w, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError(f"image must be at least 1x1, got {arr.shape}")
        self._arr = np.ascontiguousarray(arr)

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ImageBuffer":
        """Build from an HxWx3 or HxW uint8 array (grayscale is replicated)."""
        arr = np.asarray(array)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], cls.CHANNELS, axis=2)
        return cls(arr)

    @property
    def array(self) -> np.ndarray:
        return self._arr

    @property
    def data(self) -> np.ndarray:
        """Flat row-major interleaved view of length width*height*3."""
        return self._arr.reshape(-1)

    @property
    def width(self) -> int:
        return self._arr.shape[1]

    @property
    def height(self) -> int:
        return self._arr.shape[0]

    @property
    def channels(self) -> int:
        return self.CHANNELS

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self._arr.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self._arr.shape == other._arr.shape and bool(
            np.array_equal(self._arr, other._arr)
        )

    def __repr__(self) -> str:
        return f"ImageBuffer({self.width}x{self.height})"


_READABLE_FORMATS = ("PNG", "JPEG")
_READABLE_MODES = ("L", "RGB")


def load_image(path: str | os.PathLike) -> ImageBuffer:
    """Load a PNG or JPEG file; grayscale expands to 3 identical channels.

    Raises ``FileNotFoundError`` for a missing file and
    :class:`ImageFormatError` for anything unsupported or undecodable.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        with Image.open(path) as im:
            if im.format not in _READABLE_FORMATS:
                raise ImageFormatError(f"unsupported image format {im.format!r}: {path}")
            if im.mode not in _READABLE_MODES:
                raise ImageFormatError(
                    f"unsupported pixel mode {im.mode!r} (need 8-bit gray or RGB): {path}"
                )
            arr = np.asarray(im)  # forces a full decode
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"not a decodable image: {path}") from exc
    except OSError as exc:
        raise ImageFormatError(f"failed to decode image: {path} ({exc})") from exc
    return ImageBuffer.from_array(arr)


def save_png(img: ImageBuffer, path: str | os.PathLike) -> None:
    """Write a buffer as an 8-bit RGB PNG (lossless round-trip)."""
    Image.fromarray(img.array, "RGB").save(path, format="PNG")


def extract_random_patch(
    img: ImageBuffer, side: int, rng: RngStream
) -> tuple[ImageBuffer, Region]:
    """Copy a random ``side`` x ``side`` square, uniform over all positions.

    Draw order: x offset first, then y offset.
    """
    if side < 1:
        raise ValidationError(f"patch side must be >= 1, got {side}")
    if side > img.width or side > img.height:
        raise ValidationError(
            f"patch side {side} exceeds image dimensions {img.width}x{img.height}"
        )
    x = rng.randint(img.width - side + 1)
    y = rng.randint(img.height - side + 1)
    patch = ImageBuffer(img.array[y : y + side, x : x + side].copy())
    return patch, Region(x, y, side, side)
