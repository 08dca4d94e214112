"""Underwater image enhancement: decoloring, histogram equalization and CNN recoloring."""

from .colorizer import (
    ColorizerModel,
    LossHistory,
    TrainConfig,
    build_model,
    colorize,
    forward,
    load_model,
    save_model,
    train,
)
from .dataset import DegradeParams, Manifest, extract_patches, load_manifest, synth_degrade
from .histeq import Histogram, IntensityMap, equalization_map, equalize, histogram
from .image import (
    GrayImage,
    RgbImage,
    denormalize,
    normalize,
    pad_reflect,
    read_ppm,
    to_grayscale,
    write_ppm,
)
from .metrics import MetricsReport, entropy, mse, psnr
from .pipeline import enhance

__version__ = "0.1.0"
