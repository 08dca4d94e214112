"""Paired-image manifests, seeded patch extraction and synthetic test data."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, DuplicatePair, MalformedLine, PatchTooLarge
from .image import GrayImage, RgbImage, round_half_away
from .nn import Prng


@dataclass(frozen=True)
class ManifestEntry:
    input_path: str
    reference_path: str
    line: int = 0

    def resolve(self, base: Path) -> tuple[Path, Path]:
        return base / self.input_path, base / self.reference_path


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_manifest(data: bytes) -> Manifest:
    """Parse ``input<TAB>reference`` lines; ``#`` comments and blank lines are skipped."""
    text = data.decode("utf-8")
    entries = []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise MalformedLine(lineno)
        pair = (fields[0], fields[1])
        if pair in seen:
            raise DuplicatePair(lineno)
        seen.add(pair)
        entries.append(ManifestEntry(fields[0], fields[1], lineno))
    return Manifest(tuple(entries))


def extract_patches(gray: GrayImage, rgb: RgbImage, size: int, count: int, prng: Prng):
    """Draw ``count`` aligned ``size x size`` patches at uniformly random corners.

    Each corner consumes two draws from ``prng``, x first then y.
    """
    if gray.pixels.shape != rgb.pixels.shape[:2]:
        raise DimensionMismatch(
            f"gray {gray.width}x{gray.height} vs rgb {rgb.width}x{rgb.height}")
    if size > gray.width or size > gray.height:
        raise PatchTooLarge(f"patch {size} exceeds image {gray.width}x{gray.height}")
    patches = []
    for _ in range(count):
        x = prng.below(gray.width - size + 1)
        y = prng.below(gray.height - size + 1)
        patches.append((
            GrayImage(gray.pixels[y:y + size, x:x + size]),
            RgbImage(rgb.pixels[y:y + size, x:x + size]),
        ))
    return patches


def patch_corners(width: int, height: int, size: int, count: int, prng: Prng):
    """Corner sequence :func:`extract_patches` would use, without copying pixels."""
    return [(prng.below(width - size + 1), prng.below(height - size + 1)) for _ in range(count)]


@dataclass(frozen=True)
class DegradeParams:
    r_gain: float = 0.35
    g_gain: float = 0.85
    b_gain: float = 0.95
    contrast: float = 0.6
    lift: float = 0.1

    def __post_init__(self):
        for name in ("r_gain", "g_gain", "b_gain", "contrast"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must be in (0, 1], got {value}")
        if not 0 <= self.lift <= 0.3:
            raise ValueError(f"lift must be in [0, 0.3], got {self.lift}")


def synth_degrade(img: RgbImage, params: DegradeParams = DegradeParams()) -> RgbImage:
    """Simulate an underwater look: red loss, contrast compression and haze lift."""
    gains = np.array([params.r_gain, params.g_gain, params.b_gain])
    v = img.pixels.astype(np.float64) / 255.0
    out = np.clip(gains * (params.contrast * v + params.lift), 0.0, 1.0) * 255.0
    return RgbImage(round_half_away(out).astype(np.uint8))


def synth_scene(width: int, height: int, prng: Prng, blobs: int = 4) -> RgbImage:
    """A smooth, colorful test scene: a random linear gradient plus Gaussian blobs."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    xx /= max(width - 1, 1)
    yy /= max(height - 1, 1)
    u = prng.uniforms(6 + 7 * blobs)
    base = u[0:3].reshape(3, 1, 1) * 0.6 + 0.2
    slope = (u[3:6].reshape(3, 1, 1) - 0.5) * 0.6
    img = base + slope * (xx + yy) / 2
    for k in range(blobs):
        b = u[6 + 7 * k: 13 + 7 * k]
        cx, cy, radius = b[0], b[1], 0.15 + 0.35 * b[2]
        color = (b[3:6] - 0.5).reshape(3, 1, 1)
        weight = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * radius * radius))
        img = img + color * weight * (0.5 + b[6])
    img = np.clip(img, 0.0, 1.0) * 255.0
    return RgbImage(np.moveaxis(round_half_away(img), 0, -1).astype(np.uint8))
