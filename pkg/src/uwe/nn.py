"""Minimal float64 neural-network kernels with explicit forward/backward passes.

Tensors are plain ``numpy.float64`` arrays laid out ``[C, H, W]`` (one sample
at a time). Every layer is a pair of pure functions; callers chain them by hand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteTensor, OddDimension, ShapeMismatch

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Prng:
    """SplitMix64 generator; identical seeds give identical streams everywhere."""

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) / 9007199254740992.0  # 2**53

    def below(self, n: int) -> int:
        """Integer in ``[0, n)`` as ``floor(uniform() * n)``."""
        return min(int(self.uniform() * n), n - 1)

    def uniforms(self, n: int) -> np.ndarray:
        """The next ``n`` values of :meth:`uniform`, computed in one vectorized pass."""
        k = np.arange(1, n + 1, dtype=np.uint64)
        state = np.uint64(self.state) + k * np.uint64(GOLDEN_GAMMA)
        z = state.copy()
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GOLDEN_GAMMA) & MASK64
        return (z >> np.uint64(11)).astype(np.float64) / 9007199254740992.0

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle returning a new list."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out


def ensure_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NonFiniteTensor(f"{what} contains NaN or infinite values")
    return x


# --- convolution ---------------------------------------------------------------

@dataclass
class ConvParams:
    weights: np.ndarray  # [out_ch, in_ch, kh, kw]
    bias: np.ndarray  # [out_ch]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.weights.shape

    def copy(self) -> "ConvParams":
        return ConvParams(self.weights.copy(), self.bias.copy())


def he_init(shape: tuple[int, int, int, int], prng: Prng) -> ConvParams:
    """Uniform weights in (-b, b) with b = sqrt(6 / fan_in), zero bias."""
    out_ch, in_ch, kh, kw = shape
    bound = np.sqrt(6.0 / (in_ch * kh * kw))
    u = prng.uniforms(out_ch * in_ch * kh * kw)
    weights = ((2.0 * u - 1.0) * bound).reshape(shape)
    return ConvParams(weights, np.zeros(out_ch))


def _im2col(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    cols = np.empty((c, 3, 3, h, w))
    for dy in range(3):
        for dx in range(3):
            cols[:, dy, dx] = xp[:, dy:dy + h, dx:dx + w]
    return cols.reshape(c * 9, h * w)


def _check_conv(x: np.ndarray, params: ConvParams):
    if x.ndim != 3:
        raise ShapeMismatch(f"conv2d input must be [C, H, W], got {x.shape}")
    o, c, kh, kw = params.weights.shape
    if (kh, kw) != (3, 3):
        raise ShapeMismatch(f"only 3x3 kernels are supported, got {kh}x{kw}")
    if c != x.shape[0]:
        raise ShapeMismatch(f"input has {x.shape[0]} channels, kernel expects {c}")
    if params.bias.shape != (o,):
        raise ShapeMismatch(f"bias shape {params.bias.shape} != ({o},)")


def conv2d(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1: ``[C_in,H,W] -> [C_out,H,W]``."""
    _check_conv(x, params)
    _, h, w = x.shape
    o = params.weights.shape[0]
    out = params.weights.reshape(o, -1) @ _im2col(x) + params.bias[:, None]
    return ensure_finite(out.reshape(o, h, w), "conv2d output")


def conv2d_backward(grad_out: np.ndarray, x: np.ndarray, params: ConvParams):
    """Gradients of :func:`conv2d` w.r.t. input, weights and bias."""
    _check_conv(x, params)
    c, h, w = x.shape
    o = params.weights.shape[0]
    if grad_out.shape != (o, h, w):
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} != {(o, h, w)}")
    g = grad_out.reshape(o, h * w)
    grad_w = (g @ _im2col(x).T).reshape(params.weights.shape)
    grad_b = g.sum(axis=1)

    gcols = (params.weights.reshape(o, -1).T @ g).reshape(c, 3, 3, h, w)
    gxp = np.zeros((c, h + 2, w + 2))
    for dy in range(3):
        for dx in range(3):
            gxp[:, dy:dy + h, dx:dx + w] += gcols[:, dy, dx]
    return gxp[:, 1:-1, 1:-1].copy(), grad_w, grad_b


# --- activations ---------------------------------------------------------------

def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is taken as 0
    return grad_out * (x > 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_backward(grad_out: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Backward pass given the sigmoid *output* ``y``."""
    return grad_out * y * (1.0 - y)


# --- resampling ------------------------------------------------------------------

def avgpool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise OddDimension(f"avgpool2 needs even H and W, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def avgpool2_backward(grad_out: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(grad_out, 2, axis=1), 2, axis=2) * 0.25


def upsample2(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(grad_out: np.ndarray) -> np.ndarray:
    c, h, w = grad_out.shape
    if h % 2 or w % 2:
        raise OddDimension(f"upsample2 gradient must have even H and W, got {h}x{w}")
    return grad_out.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


# --- loss and optimizer ------------------------------------------------------------

def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params), np.zeros_like(params), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update. Returns ``(new_params, new_state)``; inputs are not mutated."""
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ShapeMismatch("params, grads and moment shapes must agree")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)
