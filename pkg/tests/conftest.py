import time

import numpy as np
import pytest

from uwe.colorizer import TrainConfig, patch_tensors, train
from uwe.dataset import synth_degrade, synth_scene
from uwe.histeq import equalize
from uwe.image import to_grayscale
from uwe.nn import Prng

OVERFIT_STEPS = 3000


def make_overfit_set(n: int = 8, size: int = 32, seed: int = 7):
    """``n`` (equalized degraded gray, original RGB) image pairs of ``size`` pixels."""
    prng = Prng(seed)
    images = []
    for _ in range(n):
        src = synth_scene(size, size, prng)
        images.append((equalize(to_grayscale(synth_degrade(src))), src))
    return images


@pytest.fixture(scope="session")
def overfit_run():
    """One default-config training run on 8 synthetic 32x32 pairs (one step per epoch)."""
    images = make_overfit_set()
    pairs = [patch_tensors(g, c) for g, c in images]
    cfg = TrainConfig(epochs=OVERFIT_STEPS, lr=1e-3, seed=42, patch_size=32, batch_size=8)
    start = time.perf_counter()
    model, history = train(pairs, cfg)
    elapsed = time.perf_counter() - start
    return {"images": images, "model": model, "history": history, "seconds": elapsed}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_RESULTS = {}


def record_criterion(number: int, title: str, ok: bool, detail: str = ""):
    ACCEPTANCE_RESULTS[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {title}: {detail}")
