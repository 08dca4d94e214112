"""Image quality metrics (MSE, PSNR, Shannon entropy) and report records."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .histeq import histogram
from .image import MAXVAL, Image, as_gray

PEAK = float(MAXVAL)


def mse(a: Image, b: Image) -> float:
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / value)


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB with peak 255; ``inf`` for identical images."""
    return psnr_from_mse(mse(a, b))


def entropy(img: Image) -> float:
    """Shannon entropy in bits of the gray-level histogram.

    RGB input is decolored first.
    """
    p = histogram(as_gray(img)).normalized()
    p = p[p > 0]
    # + 0.0 turns the -0.0 of a single-bin histogram into 0.0
    return float(-np.sum(p * np.log2(p))) + 0.0


@dataclass
class ImageMetrics:
    input_id: str
    mse: float
    psnr_db: float
    entropy_bits: float

    def to_json(self) -> dict:
        return {
            "input_id": self.input_id,
            "mse": self.mse,
            "psnr_db": _encode_db(self.psnr_db),
            "entropy_bits": self.entropy_bits,
        }


@dataclass
class MetricsReport:
    per_image: list[ImageMetrics] = field(default_factory=list)

    def aggregate(self) -> dict:
        n = len(self.per_image)
        finite = [m.psnr_db for m in self.per_image if math.isfinite(m.psnr_db)]
        return {
            "mean_mse": _mean([m.mse for m in self.per_image]),
            "mean_psnr_db": _mean(finite),
            "infinite_psnr_count": n - len(finite),
            "mean_entropy_bits": _mean([m.entropy_bits for m in self.per_image]),
            "image_count": n,
        }

    def to_json(self) -> dict:
        return {
            "per_image": [m.to_json() for m in self.per_image],
            "aggregate": self.aggregate(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MetricsReport":
        doc = json.loads(text)
        return cls([
            ImageMetrics(
                input_id=rec["input_id"],
                mse=float(rec["mse"]),
                psnr_db=float(rec["psnr_db"]),
                entropy_bits=float(rec["entropy_bits"]),
            )
            for rec in doc["per_image"]
        ])


def _encode_db(value: float):
    return "inf" if math.isinf(value) else value


def _mean(values):
    # None when there is nothing to average (e.g. every PSNR infinite)
    return math.fsum(values) / len(values) if values else None
