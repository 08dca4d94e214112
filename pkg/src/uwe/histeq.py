"""Global histogram equalization of 8-bit grayscale images.

The transform is ``T(k) = floor((L - 1) * cdf(k))`` evaluated as
``((L - 1) * cum_k) // total`` in integers, so there is no float rounding and
``equalize`` is exactly idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyImage
from .image import LEVELS, GrayImage


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray  # int64, one bin per intensity level
    total: int

    @property
    def levels(self) -> int:
        return len(self.counts)

    def normalized(self) -> np.ndarray:
        """The per-level pixel fractions p_n."""
        return self.counts / self.total


@dataclass(frozen=True)
class IntensityMap:
    table: np.ndarray  # uint8 lookup, table[k] is the output for input level k

    def apply(self, img: GrayImage) -> GrayImage:
        return GrayImage(self.table[img.pixels])


def histogram(img: GrayImage, levels: int = LEVELS) -> Histogram:
    if img.pixels.size == 0:
        raise EmptyImage("cannot build a histogram of an empty image")
    counts = np.bincount(img.pixels.ravel(), minlength=levels).astype(np.int64)
    return Histogram(counts=counts, total=int(img.pixels.size))


def equalization_map(hist: Histogram) -> IntensityMap:
    cum = np.cumsum(hist.counts, dtype=np.int64)
    table = ((hist.levels - 1) * cum) // hist.total
    return IntensityMap(table=table.astype(np.uint8))


def equalize(img: GrayImage) -> GrayImage:
    return equalization_map(histogram(img)).apply(img)
