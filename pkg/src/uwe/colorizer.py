"""Convolutional autoencoder mapping an equalized gray plane to RGB.

The topology is fixed::

    conv 1->16, relu, avgpool
    conv 16->32, relu, avgpool
    conv 32->64, relu                    (the H/4 x W/4 code)
    upsample, conv 64->32, relu
    upsample, conv 32->16, relu
    conv 16->3, sigmoid

All convolutions are 3x3 with zero padding 1, so any input whose sides are
divisible by 4 comes back at its own resolution.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import nn
from .errors import (
    ArchMismatch,
    BadMagic,
    CheckpointError,
    EmptyDataset,
    MisalignedDims,
    NonFiniteLoss,
    NonFiniteTensor,
    TruncatedCheckpoint,
)
from .image import GrayImage, RgbImage, crop, denormalize, normalize, pad_reflect

LAYERS = (
    ("conv", 1, 16), ("relu",), ("avgpool2",),
    ("conv", 16, 32), ("relu",), ("avgpool2",),
    ("conv", 32, 64), ("relu",),
    ("upsample2",), ("conv", 64, 32), ("relu",),
    ("upsample2",), ("conv", 32, 16), ("relu",),
    ("conv", 16, 3), ("sigmoid",),
)
CONV_SHAPES = tuple((spec[2], spec[1], 3, 3) for spec in LAYERS if spec[0] == "conv")
ALIGN = 4
MAGIC = b"UWCOLOR1"


@dataclass
class ColorizerModel:
    convs: list[nn.ConvParams]

    def __post_init__(self):
        shapes = tuple(p.weights.shape for p in self.convs)
        if shapes != CONV_SHAPES:
            raise ArchMismatch(f"conv shapes {shapes} do not match the fixed architecture")

    def parameter_count(self) -> int:
        return sum(p.weights.size + p.bias.size for p in self.convs)

    def copy(self) -> "ColorizerModel":
        return ColorizerModel([p.copy() for p in self.convs])


def _init_model(prng: nn.Prng) -> ColorizerModel:
    return ColorizerModel([nn.he_init(shape, prng) for shape in CONV_SHAPES])


def build_model(seed: int) -> ColorizerModel:
    return _init_model(nn.Prng(seed))


# --- forward / backward ---------------------------------------------------------

def _check_input(x: np.ndarray):
    if x.ndim != 3 or x.shape[0] != 1:
        raise MisalignedDims(f"expected input of shape [1, H, W], got {x.shape}")
    if x.shape[1] % ALIGN or x.shape[2] % ALIGN:
        raise MisalignedDims(f"H and W must be divisible by {ALIGN}, got {x.shape[1:]}")


def _forward(model: ColorizerModel, x: np.ndarray):
    """Run the network, returning the output and the per-layer activations."""
    _check_input(x)
    acts = [x]
    convs = iter(model.convs)
    for spec in LAYERS:
        kind = spec[0]
        if kind == "conv":
            x = nn.conv2d(x, next(convs))
        elif kind == "relu":
            x = nn.relu(x)
        elif kind == "avgpool2":
            x = nn.avgpool2(x)
        elif kind == "upsample2":
            x = nn.upsample2(x)
        else:
            x = nn.sigmoid(x)
        acts.append(x)
    return x, acts


def forward(model: ColorizerModel, plane: np.ndarray) -> np.ndarray:
    """``[1, H, W]`` (or ``[H, W]``) plane in [0, 1] to a ``[3, H, W]`` RGB tensor."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim == 2:
        plane = plane[None]
    out, _ = _forward(model, plane)
    return out


def backward(model: ColorizerModel, acts: list, grad_out: np.ndarray):
    """Backpropagate ``grad_out`` through a cached forward pass.

    Returns ``(grad_input, [(grad_w, grad_b), ...])`` with one pair per conv.
    """
    g = grad_out
    conv_grads = []
    conv_idx = len(model.convs)
    for i in range(len(LAYERS) - 1, -1, -1):
        kind = LAYERS[i][0]
        x_in, x_out = acts[i], acts[i + 1]
        if kind == "conv":
            conv_idx -= 1
            g, gw, gb = nn.conv2d_backward(g, x_in, model.convs[conv_idx])
            conv_grads.append((gw, gb))
        elif kind == "relu":
            g = nn.relu_backward(g, x_in)
        elif kind == "avgpool2":
            g = nn.avgpool2_backward(g)
        elif kind == "upsample2":
            g = nn.upsample2_backward(g)
        else:
            g = nn.sigmoid_backward(g, x_out)
    conv_grads.reverse()
    return g, conv_grads


def loss_and_grads(model: ColorizerModel, x: np.ndarray, target: np.ndarray):
    """MSE loss of one sample plus gradients w.r.t. every conv and the input."""
    out, acts = _forward(model, x)
    loss, g = nn.mse_loss(out, target)
    grad_x, conv_grads = backward(model, acts, g)
    return loss, conv_grads, grad_x


# --- training -----------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    seed: int = 42
    patch_size: int = 32
    patches_per_image: int = 16
    batch_size: int = 8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patches_per_image < 1:
            raise ValueError("epochs, batch_size and patches_per_image must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.patch_size < ALIGN or self.patch_size % ALIGN:
            raise ValueError(f"patch_size must be a positive multiple of {ALIGN}")


@dataclass
class LossHistory:
    per_step: list[tuple[int, float]] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [loss for _, loss in self.per_step]


def patch_tensors(gray: GrayImage, rgb: RgbImage) -> tuple[np.ndarray, np.ndarray]:
    """Network input ``[1,H,W]`` and target ``[3,H,W]`` for an aligned patch pair."""
    target = np.moveaxis(rgb.pixels.astype(np.float64) / 255.0, -1, 0)
    return normalize(gray)[None], np.ascontiguousarray(target)


def train(pairs: Sequence[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig,
          on_step: Optional[Callable[[int, float], None]] = None):
    """Fit a fresh model to ``(input [1,P,P], target [3,P,P])`` pairs with Adam.

    The model is initialized from ``Prng(cfg.seed)``; the same stream then
    drives the per-epoch shuffles. Steps are numbered from 1. Returns
    ``(model, history)``.
    """
    if not pairs:
        raise EmptyDataset("no training pairs")
    p = cfg.patch_size
    for x, y in pairs:
        if x.shape != (1, p, p) or y.shape != (3, p, p):
            raise ValueError(f"patch pair shapes {x.shape}, {y.shape} do not match patch_size {p}")

    prng = nn.Prng(cfg.seed)
    model = _init_model(prng)
    states = [(nn.AdamState.zeros_like(c.weights), nn.AdamState.zeros_like(c.bias))
              for c in model.convs]
    history = LossHistory()
    step = 0
    for _ in range(cfg.epochs):
        order = prng.shuffle(range(len(pairs)))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            step += 1
            loss_sum = 0.0
            acc = None
            for idx in batch:
                try:
                    with np.errstate(over="ignore", invalid="ignore"):
                        loss, grads, _ = loss_and_grads(model, *pairs[idx])
                except NonFiniteTensor:
                    raise NonFiniteLoss(step) from None
                loss_sum += loss
                if acc is None:
                    acc = [(gw.copy(), gb.copy()) for gw, gb in grads]
                else:
                    for (aw, ab), (gw, gb) in zip(acc, grads):
                        aw += gw
                        ab += gb
            n = len(batch)
            loss = loss_sum / n
            if not np.isfinite(loss):
                raise NonFiniteLoss(step)
            for i, (conv, (aw, ab)) in enumerate(zip(model.convs, acc)):
                sw, sb = states[i]
                conv.weights, sw = nn.adam_step(conv.weights, aw / n, sw, cfg.lr)
                conv.bias, sb = nn.adam_step(conv.bias, ab / n, sb, cfg.lr)
                states[i] = (sw, sb)
            history.per_step.append((step, loss))
            if on_step is not None:
                on_step(step, loss)
    return model, history


# --- inference --------------------------------------------------------------------

def colorize(model: ColorizerModel, img: GrayImage) -> RgbImage:
    """Predict RGB for a gray image of any size >= 2x2."""
    padded, dims = pad_reflect(img, ALIGN)
    out = forward(model, normalize(padded))
    return crop(denormalize(out), dims)


# --- checkpoints ------------------------------------------------------------------

def save_model(model: ColorizerModel) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(model.convs))]
    for conv in model.convs:
        parts.append(struct.pack("<4I", *conv.weights.shape))
        parts.append(conv.weights.astype("<f8").tobytes())
        parts.append(conv.bias.astype("<f8").tobytes())
    return b"".join(parts)


def load_model(data: bytes) -> ColorizerModel:
    if len(data) < len(MAGIC):
        raise TruncatedCheckpoint("checkpoint shorter than its magic")
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"bad checkpoint magic {bytes(data[:8])!r}")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedCheckpoint(f"checkpoint truncated at byte {len(data)}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    if count != len(CONV_SHAPES):
        raise ArchMismatch(f"checkpoint has {count} conv layers, expected {len(CONV_SHAPES)}")
    convs = []
    for expected in CONV_SHAPES:
        shape = struct.unpack("<4I", take(16))
        if shape != expected:
            raise ArchMismatch(f"conv shape {shape}, expected {expected}")
        n_w = int(np.prod(shape))
        weights = np.frombuffer(take(8 * n_w), dtype="<f8").astype(np.float64).reshape(shape)
        bias = np.frombuffer(take(8 * shape[0]), dtype="<f8").astype(np.float64)
        convs.append(nn.ConvParams(weights, bias))
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} unexpected trailing bytes")
    return ColorizerModel(convs)
