"""The enhancement pipeline: decolor, equalize, then (optionally) recolor."""

from __future__ import annotations

from typing import Optional

from .colorizer import ColorizerModel, colorize
from .histeq import equalize
from .image import Image, as_gray


def enhance(img: Image, model: Optional[ColorizerModel] = None) -> Image:
    """Return the equalized gray image, or its colorization when a model is given."""
    equalized = equalize(as_gray(img))
    if model is None:
        return equalized
    return colorize(model, equalized)
