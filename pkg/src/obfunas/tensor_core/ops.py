"""Dense NCHW float64 operators.

Every reduction here accumulates in a fixed sequential order (kernel position
row-major, then input channel ascending). Appending exactly-zero terms to such a
sum never changes its value, which is what makes the obfuscation rewrites
bit-exact rather than merely close.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Dyadic epsilon: 1 - EPS is exact in float32, so unit statistics survive the fp32 sidecar.
EPS = 2.0**-16


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _windows(x: np.ndarray, kernel, stride: int, padding, fill: float):
    """Yield (p, q, strided window view) for each kernel position."""
    k1, k2 = _pair(kernel)
    p1, p2 = _pair(padding)
    n, c, h, w = x.shape
    ho, wo = _out_size(h, k1, stride, p1), _out_size(w, k2, stride, p2)
    if ho <= 0 or wo <= 0:
        raise ValueError(f"kernel {k1}x{k2} with padding ({p1},{p2}) leaves no output for {h}x{w} input")
    if p1 or p2:
        x = np.pad(x, ((0, 0), (0, 0), (p1, p1), (p2, p2)), constant_values=fill)
    for p in range(k1):
        for q in range(k2):
            yield p, q, x[:, :, p : p + stride * (ho - 1) + 1 : stride, q : q + stride * (wo - 1) + 1 : stride]


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None, stride: int = 1, padding=0) -> np.ndarray:
    """Cross-correlation with weights laid out (k1, k2, in, out)."""
    k1, k2, c_in, c_out = weight.shape
    if x.shape[1] != c_in:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {c_in}")
    if k1 % 2 == 0 or k2 % 2 == 0:
        raise ValueError(f"kernel sizes must be odd, got {k1}x{k2}")
    out = None
    tmp = None
    for p, q, win in _windows(x, (k1, k2), stride, padding, 0.0):
        if out is None:
            out = np.zeros((x.shape[0], c_out, win.shape[2], win.shape[3]))
            tmp = np.empty_like(out)
        for t in range(c_in):
            wv = weight[p, q, t]
            if not wv.any():
                continue  # exact zeros contribute nothing
            np.multiply(wv[None, :, None, None], win[:, t : t + 1], out=tmp)
            out += tmp
    if bias is not None:
        out += bias[None, :, None, None]
    return out


def pool_coefficient(k1: int, k2: int) -> float:
    # Rounded through float32 so a conv replacement read back from the fp32 sidecar matches exactly.
    return float(np.float32(1.0 / (k1 * k2)))


def avg_pool(x: np.ndarray, kernel, stride: int = 1, padding=0) -> np.ndarray:
    """Window mean; padded cells count in the denominator."""
    k1, k2 = _pair(kernel)
    coef = pool_coefficient(k1, k2)
    out = None
    for _, _, win in _windows(x, (k1, k2), stride, padding, 0.0):
        term = coef * win
        out = term.copy() if out is None else out + term
    return out


def max_pool(x: np.ndarray, kernel, stride: int = 1, padding=0) -> np.ndarray:
    out = None
    for _, _, win in _windows(x, kernel, stride, padding, -np.inf):
        out = win.copy() if out is None else np.maximum(out, win)
    return out


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    return x.mean(axis=(2, 3), keepdims=True)


@dataclass(frozen=True)
class BatchNormRecord:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = EPS

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if np.any(np.asarray(self.var) < 0):
            raise ValueError("variance must be non-negative")

    @property
    def channels(self) -> int:
        return len(self.gamma)

    def scale_shift(self) -> tuple[np.ndarray, np.ndarray]:
        scale = self.gamma / np.sqrt(self.var + self.eps)
        return scale, self.beta - scale * self.mean


def batchnorm_inference(x: np.ndarray, record: BatchNormRecord) -> np.ndarray:
    if x.shape[1] != record.channels:
        raise ValueError(f"input has {x.shape[1]} channels, batchnorm has {record.channels}")
    scale, shift = record.scale_shift()
    return scale[None, :, None, None] * x + shift[None, :, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def swish(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # exp overflow gives the correct limit 0
        return x * (1.0 / (1.0 + np.exp(-x)))


def fake_swish(x: np.ndarray) -> np.ndarray:
    """Swish's operators arranged as an identity: x * (t / t) with t = 1 + exp(-x)."""
    t = 1.0 + np.exp(np.minimum(-x, 700.0))  # clamp keeps t finite, so t / t == 1 exactly
    return x * (t / t)


ACTIVATIONS = {
    "none": lambda x: x,
    "relu": relu,
    "swish": swish,
    "fake_swish": fake_swish,
}


def elementwise_sum(xs, gates=None) -> np.ndarray:
    if gates is None:
        gates = [1.0] * len(xs)
    if len(gates) != len(xs) or not xs:
        raise ValueError("need one gate per input and at least one input")
    shape = xs[0].shape
    for x in xs[1:]:
        if x.shape != shape:
            raise ValueError(f"cannot sum shapes {shape} and {x.shape}")
    acc = gates[0] * xs[0]
    for g, x in zip(gates[1:], xs[1:]):
        acc = acc + g * x
    return acc


def concat_channels(xs) -> np.ndarray:
    spatial = {x.shape[2:] for x in xs}
    batch = {x.shape[0] for x in xs}
    if len(spatial) != 1 or len(batch) != 1:
        raise ValueError("concat needs matching batch and spatial dims")
    return np.concatenate(xs, axis=1)


def identity_kernel(k: int | tuple[int, int], channels: int) -> np.ndarray:
    """Center tap 1 on the channel diagonal, zero elsewhere."""
    k1, k2 = _pair(k)
    if k1 % 2 == 0 or k2 % 2 == 0:
        raise ValueError("identity kernel needs odd sizes")
    w = np.zeros((k1, k2, channels, channels))
    idx = np.arange(channels)
    w[(k1 - 1) // 2, (k2 - 1) // 2, idx, idx] = 1.0
    return w
