import math
import struct
from unittest import mock

import numpy as np
import pytest

from gradcheck import model_gradient_errors, near_target
from uwe import nn
from uwe.colorizer import (
    CONV_SHAPES,
    LAYERS,
    MAGIC,
    ColorizerModel,
    TrainConfig,
    build_model,
    colorize,
    forward,
    load_model,
    patch_tensors,
    save_model,
    train,
)
from uwe.errors import (
    ArchMismatch,
    BadMagic,
    CheckpointError,
    EmptyDataset,
    MisalignedDims,
    NonFiniteLoss,
    TruncatedCheckpoint,
)
from uwe.image import GrayImage, RgbImage
from uwe.metrics import mse


def test_layer_list():
    kinds = [spec[0] for spec in LAYERS]
    assert kinds == ["conv", "relu", "avgpool2", "conv", "relu", "avgpool2", "conv", "relu",
                     "upsample2", "conv", "relu", "upsample2", "conv", "relu", "conv", "sigmoid"]
    assert CONV_SHAPES == ((16, 1, 3, 3), (32, 16, 3, 3), (64, 32, 3, 3),
                           (32, 64, 3, 3), (16, 32, 3, 3), (3, 16, 3, 3))


def test_parameter_count():
    per_layer = [16 * 1 * 9 + 16, 32 * 16 * 9 + 32, 64 * 32 * 9 + 64,
                 32 * 64 * 9 + 32, 16 * 32 * 9 + 16, 3 * 16 * 9 + 3]
    assert per_layer == [160, 4640, 18496, 18464, 4624, 435]
    assert build_model(0).parameter_count() == sum(per_layer) == 46819


def test_build_model_deterministic_and_bounded():
    a, b = build_model(42), build_model(42)
    for ca, cb in zip(a.convs, b.convs):
        assert np.array_equal(ca.weights, cb.weights)
        bound = math.sqrt(6 / (ca.weights.shape[1] * 9))
        assert np.all(np.abs(ca.weights) < bound)
        assert np.all(ca.bias == 0)
    assert not np.array_equal(build_model(43).convs[0].weights, a.convs[0].weights)


def test_model_rejects_wrong_architecture():
    model = build_model(0)
    with pytest.raises(ArchMismatch):
        ColorizerModel(model.convs[:5])


def test_forward_shape_range_determinism(rng):
    model = build_model(1)
    x = rng.random((32, 32))
    out = forward(model, x)
    assert out.shape == (3, 32, 32)
    assert np.all((out > 0) & (out < 1))
    assert np.array_equal(out, forward(model, x))
    assert forward(model, rng.random((1, 12, 20))).shape == (3, 12, 20)


@pytest.mark.parametrize("shape", [(1, 30, 32), (1, 32, 6), (2, 32, 32)])
def test_forward_misaligned(shape):
    with pytest.raises(MisalignedDims):
        forward(build_model(1), np.zeros(shape))


@pytest.mark.parametrize("seed", range(6))
def test_full_model_gradients(seed):
    rng = np.random.default_rng(seed)
    model = build_model(seed)
    for conv in model.convs:
        conv.bias[:] = rng.normal(size=conv.bias.shape) * 0.05
    x = rng.random((1, 16, 16))
    target = near_target(model, x, rng)
    errors, _ = model_gradient_errors(model, x, target, 50, 20, rng)
    worst = max(errors, key=lambda e: e[-1])
    assert worst[-1] < 1e-6, worst


@pytest.mark.parametrize("target, broken", [
    ("uwe.nn.conv2d_backward", "conv4_weights"),
    ("uwe.nn.relu_backward", "leaky_gate"),
])
def test_gradient_check_catches_injected_bugs(target, broken):
    original = nn.conv2d_backward

    def conv4_weights(g, x, p):
        gx, gw, gb = original(g, x, p)
        if p.weights.shape[:2] == (32, 64):
            gw = gw * 1.001
        return gx, gw, gb

    def leaky_gate(g, x):
        return g * (x > 0) + 0.01 * g * (x <= 0)

    rng = np.random.default_rng(0)
    model = build_model(0)
    x = rng.random((1, 16, 16))
    t = near_target(model, x, rng)
    with mock.patch(target, {"conv4_weights": conv4_weights, "leaky_gate": leaky_gate}[broken]):
        errors, _ = model_gradient_errors(model, x, t, 50, 20, rng)
    assert max(e[-1] for e in errors) >= 1e-6


@pytest.mark.parametrize("h, w", [(33, 35), (2, 2), (4, 4), (5, 2), (17, 9)])
def test_colorize_preserves_dims(h, w, rng):
    model = build_model(2)
    img = GrayImage(rng.integers(0, 256, (h, w)))
    out = colorize(model, img)
    assert isinstance(out, RgbImage)
    assert (out.height, out.width) == (h, w)
    assert out == colorize(model, img)


def test_checkpoint_round_trip():
    model = build_model(3)
    data = save_model(model)
    back = load_model(data)
    for a, b in zip(model.convs, back.convs):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert a.bias.tobytes() == b.bias.tobytes()
    assert save_model(back) == data


def test_checkpoint_layout():
    model = build_model(4)
    data = save_model(model)
    assert data[:8] == b"UWCOLOR1"
    assert struct.unpack_from("<I", data, 8) == (6,)
    assert struct.unpack_from("<4I", data, 12) == (16, 1, 3, 3)
    first_w = struct.unpack_from("<144d", data, 28)
    assert list(first_w) == model.convs[0].weights.ravel().tolist()
    assert struct.unpack_from("<16d", data, 28 + 144 * 8) == tuple(model.convs[0].bias)
    assert len(data) == 12 + 6 * 16 + 8 * 46819


def test_checkpoint_errors():
    data = save_model(build_model(5))
    with pytest.raises(BadMagic):
        load_model(b"XWCOLOR1" + data[8:])
    with pytest.raises(TruncatedCheckpoint):
        load_model(data[:-1])
    with pytest.raises(TruncatedCheckpoint):
        load_model(data[:5])
    with pytest.raises(ArchMismatch):
        load_model(MAGIC + struct.pack("<I", 5) + data[12:])
    with pytest.raises(ArchMismatch):
        load_model(data[:12] + struct.pack("<4I", 8, 1, 3, 3) + data[28:])
    with pytest.raises(CheckpointError):
        load_model(data + b"\0")


def _tiny_pairs(n, size=8, seed=0):
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        g = GrayImage(rng.integers(0, 256, (size, size)))
        c = RgbImage(rng.integers(0, 256, (size, size, 3)))
        pairs.append(patch_tensors(g, c))
    return pairs


def test_train_is_deterministic():
    pairs = _tiny_pairs(5)
    cfg = TrainConfig(epochs=3, patch_size=8, batch_size=2, seed=11)
    m1, h1 = train(pairs, cfg)
    m2, h2 = train(pairs, cfg)
    assert save_model(m1) == save_model(m2)
    assert h1.per_step == h2.per_step
    # 5 samples in batches of 2 -> 3 steps per epoch
    assert [s for s, _ in h1.per_step] == list(range(1, 10))
    assert all(math.isfinite(l) and l >= 0 for l in h1.losses)


def test_train_reports_steps():
    seen = []
    train(_tiny_pairs(2), TrainConfig(epochs=2, patch_size=8), on_step=lambda s, l: seen.append(s))
    assert seen == [1, 2]


def test_train_errors():
    with pytest.raises(EmptyDataset):
        train([], TrainConfig(patch_size=8))
    with pytest.raises(ValueError):
        train(_tiny_pairs(1, size=8), TrainConfig(patch_size=16))
    with pytest.raises(ValueError):
        TrainConfig(patch_size=30)


def test_train_divergence_aborts():
    pairs = _tiny_pairs(2)
    pairs[1][1][0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLoss) as err:
        train(pairs, TrainConfig(epochs=1, patch_size=8, batch_size=1, seed=0))
    assert err.value.step in (1, 2)


# --- overfit experiment (session fixture, ~3 min) ---------------------------------

def _block_means(losses, width):
    return [float(np.mean(losses[i:i + width])) for i in range(0, len(losses), width)]


# Adam at lr 1e-3 spikes once the loss nears 3e-4 (step 1766 jumps to 5e-3),
# so 100-step means rise late in the run. Kept strict so a fix is noticed.
@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="100-step means rise after ~1200 steps (Adam spikes)")
def test_overfit_loss_nonincreasing_over_100_step_windows(overfit_run):
    blocks = _block_means(overfit_run["history"].losses, 100)
    assert all(b2 <= b1 for b1, b2 in zip(blocks, blocks[1:])), blocks


@pytest.mark.slow
def test_overfit_loss_trend(overfit_run):
    losses = overfit_run["history"].losses
    assert losses[499] < losses[0]
    blocks = _block_means(losses, 500)
    assert all(b2 <= b1 for b1, b2 in zip(blocks, blocks[1:])), blocks


@pytest.mark.slow
def test_overfit_colorize_reproduces_training_patches(overfit_run):
    model = overfit_run["model"]
    for gray, target in overfit_run["images"]:
        out = colorize(model, gray)
        for ch in range(3):
            err = mse(GrayImage(out.pixels[..., ch]), GrayImage(target.pixels[..., ch]))
            assert err < 0.005 * 255 ** 2
