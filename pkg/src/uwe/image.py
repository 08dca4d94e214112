"""8-bit raster types, decoloring, normalization, padding and a netpbm codec.

Images are thin wrappers around ``uint8`` numpy arrays: ``(H, W)`` for gray
and ``(H, W, 3)`` for RGB, row-major like the on-disk layout.
"""

from __future__ import annotations

from typing import Union

import numpy as np

from .errors import (
    ImageTooSmall,
    MalformedHeader,
    NonFiniteValue,
    Truncated,
    UnsupportedMagic,
    UnsupportedMaxval,
)

LEVELS = 256
MAXVAL = LEVELS - 1

# BT.601 luma weights, in thousandths so decoloring is exact integer math.
_LUMA = (299, 587, 114)


def _as_u8(values, ndim: int) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > MAXVAL):
            raise ValueError("pixel values must lie in [0, 255]")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.array_equal(arr, np.floor(arr)):
                raise ValueError("pixel values must be integers")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


class GrayImage:
    """Single-channel 8-bit image, ``pixels`` has shape ``(height, width)``."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        self.pixels = _as_u8(pixels, 2)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 1

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


class RgbImage:
    """Three-channel 8-bit image, ``pixels`` has shape ``(height, width, 3)``."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = _as_u8(pixels, 3)
        if arr.shape[2] != 3:
            raise ValueError(f"RGB image needs 3 channels, got {arr.shape[2]}")
        self.pixels = arr

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"RgbImage({self.width}x{self.height})"


Image = Union[GrayImage, RgbImage]


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer, ties away from zero (``np.round`` ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_grayscale(img: RgbImage) -> GrayImage:
    """Decolor with BT.601 luma weights, rounding half away from zero."""
    px = img.pixels.astype(np.int64)
    acc = _LUMA[0] * px[..., 0] + _LUMA[1] * px[..., 1] + _LUMA[2] * px[..., 2]
    # acc >= 0, so adding half the divisor before floor-division rounds half up
    gray = (acc + 500) // 1000
    return GrayImage(np.clip(gray, 0, MAXVAL).astype(np.uint8))


def as_gray(img: Image) -> GrayImage:
    return img if isinstance(img, GrayImage) else to_grayscale(img)


def normalize(img: GrayImage) -> np.ndarray:
    return img.pixels.astype(np.float64) / MAXVAL


def denormalize(planes: np.ndarray) -> RgbImage:
    """Map a ``(3, H, W)`` float array in [0, 1] back to an 8-bit RGB image."""
    planes = np.asarray(planes, dtype=np.float64)
    if planes.ndim != 3 or planes.shape[0] != 3:
        raise ValueError(f"expected shape (3, H, W), got {planes.shape}")
    if not np.all(np.isfinite(planes)):
        raise NonFiniteValue("plane contains NaN or infinite values")
    scaled = round_half_away(np.clip(planes, 0.0, 1.0) * MAXVAL)
    return RgbImage(np.moveaxis(scaled, 0, -1).astype(np.uint8))


def pad_reflect(img: GrayImage, multiple: int) -> tuple[GrayImage, tuple[int, int]]:
    """Grow ``img`` on the bottom/right to the next multiple by mirror reflection.

    Returns the padded image and the original ``(height, width)`` for :func:`crop`.
    """
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    h, w = img.height, img.width
    pad_h = -h % multiple
    pad_w = -w % multiple
    if (pad_h and h < 2) or (pad_w and w < 2):
        raise ImageTooSmall(f"cannot reflect-pad a {w}x{h} image to a multiple of {multiple}")
    if not pad_h and not pad_w:
        return img, (h, w)
    padded = np.pad(img.pixels, ((0, pad_h), (0, pad_w)), mode="reflect")
    return GrayImage(padded), (h, w)


def crop(img: Image, dims: tuple[int, int]) -> Image:
    h, w = dims
    return type(img)(img.pixels[:h, :w])


# --- netpbm (P5 / P6, maxval 255) -------------------------------------------

_WHITESPACE = b" \t\n\r\v\f"


def _header_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c in _WHITESPACE and c:
            pos += 1
        elif c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos:pos + 1] not in _WHITESPACE and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeader("header ended early")
    return data[start:pos], pos


def _header_int(data: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, pos = _header_token(data, pos)
    if not tok.isdigit():
        raise MalformedHeader(f"bad {what}: {tok[:16]!r}")
    return int(tok), pos


def read_ppm(data: bytes) -> Image:
    """Decode a binary PGM (P5) or PPM (P6) with maxval 255."""
    magic = bytes(data[:2])
    if magic not in (b"P5", b"P6"):
        raise UnsupportedMagic(f"unsupported magic {magic!r}")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise MalformedHeader("missing whitespace after magic")
    width, pos = _header_int(data, pos, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if maxval != MAXVAL:
        raise UnsupportedMaxval(f"maxval {maxval} (only 255 supported)")
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1

    need = width * height * channels
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise Truncated(f"expected {need} payload bytes, got {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return GrayImage(arr.reshape(height, width).copy())
    return RgbImage(arr.reshape(height, width, 3).copy())


def write_ppm(img: Image) -> bytes:
    magic = b"P5" if isinstance(img, GrayImage) else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.pixels.tobytes()
