"""Layers with explicit forward/backward passes, losses, SGD and the LR schedule.

Every forward function returns ``(output, cache)`` and the matching backward
function consumes that cache. Convolution is cross-correlation (no kernel
flip). Activations are batch-first: images ``B x C x H x W``, vectors ``B x D``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from adnet.errors import ConfigError, DimensionError, ValidationError
from adnet.tensor import DTYPE, Rng, rng_normal

Mode = Literal["train", "infer"]


@dataclass
class Conv2dLayer:
    weights: np.ndarray  # outC x inC x kH x kW
    bias: np.ndarray  # outC
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weights.ndim != 4 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"conv weights {self.weights.shape} / bias {self.bias.shape} inconsistent"
            )
        if self.stride < 1 or self.padding < 0:
            raise ConfigError(f"bad stride/padding {self.stride}/{self.padding}")

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.weights.shape[2:]
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        return oh, ow


@dataclass
class FcLayer:
    weights: np.ndarray  # out x in
    bias: np.ndarray  # out

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"fc weights {self.weights.shape} / bias {self.bias.shape} inconsistent"
            )


@dataclass
class DropoutLayer:
    p: float = 0.5
    mode: Mode = "train"

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ConfigError(f"dropout p must lie in [0, 1), got {self.p}")
        if self.mode not in ("train", "infer"):
            raise ConfigError(f"dropout mode must be 'train' or 'infer', got {self.mode!r}")


@dataclass(frozen=True)
class SgdConfig:
    batch_size: int = 200
    epochs: int = 100
    lr0: float = 0.001
    decay: float = 0.95
    decay_start_epoch: int = 50
    lr_floor: float = 0.00001

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError(f"decay must lie in (0, 1), got {self.decay}")
        if not 0.0 < self.lr_floor <= self.lr0:
            raise ConfigError(f"need 0 < lr_floor <= lr0, got {self.lr_floor}, {self.lr0}")


def he_normal(rng: Rng, shape: Sequence[int], fan_in: int) -> np.ndarray:
    return rng_normal(rng, shape, 0.0, float(np.sqrt(2.0 / fan_in)))


# -- convolution -------------------------------------------------------------


@dataclass
class _ConvCache:
    layer: Conv2dLayer
    x_shape: tuple
    cols: np.ndarray
    out_hw: tuple


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Columns matrix of shape ``(C*kh*kw) x (B*oh*ow)``; rows ordered (c, ki, kj)."""
    b, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (oh - 1) + 1 : stride, : stride * (ow - 1) + 1 : stride]
    return win.transpose(1, 4, 5, 0, 2, 3).reshape(c * kh * kw, b * oh * ow)


def conv2d_forward(layer: Conv2dLayer, x: np.ndarray):
    if x.ndim != 4:
        raise DimensionError(f"conv input must be B x C x H x W, got {x.shape}")
    out_c, in_c, kh, kw = layer.weights.shape
    if x.shape[1] != in_c:
        raise DimensionError(f"conv expects {in_c} input channels, got input {x.shape}")
    oh, ow = layer.output_size(x.shape[2], x.shape[3])
    if oh < 1 or ow < 1:
        raise DimensionError(f"conv output would be empty for input {x.shape}")
    p = layer.padding
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    cols = _im2col(xp, kh, kw, layer.stride, oh, ow)
    y = layer.weights.reshape(out_c, -1) @ cols
    y += layer.bias[:, None]
    y = y.reshape(out_c, x.shape[0], oh, ow).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(y), _ConvCache(layer, x.shape, cols, (oh, ow))


def conv2d_backward(cache: _ConvCache, dy: np.ndarray, need_dx: bool = True):
    """Returns ``(dx, dW, db)``; ``dx`` is None when ``need_dx`` is false."""
    layer = cache.layer
    out_c, in_c, kh, kw = layer.weights.shape
    b, _, h, w = cache.x_shape
    oh, ow = cache.out_hw
    if dy.shape != (b, out_c, oh, ow):
        raise DimensionError(f"conv backward expects dy {(b, out_c, oh, ow)}, got {dy.shape}")
    dy_mat = dy.transpose(1, 0, 2, 3).reshape(out_c, -1)
    dW = (dy_mat @ cache.cols.T).reshape(layer.weights.shape)
    db = dy.sum(axis=(0, 2, 3))
    if not need_dx:
        return None, dW, db
    dcols = (layer.weights.reshape(out_c, -1).T @ dy_mat).reshape(in_c, kh, kw, b, oh, ow)
    p, s = layer.padding, layer.stride
    dxp = np.zeros((in_c, b, h + 2 * p, w + 2 * p), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + s * (oh - 1) + 1 : s, j : j + s * (ow - 1) + 1 : s] += dcols[:, i, j]
    dx = dxp[:, :, p : p + h, p : p + w].transpose(1, 0, 2, 3)
    return np.ascontiguousarray(dx), dW, db


# -- pooling / activation ----------------------------------------------------


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2. Ties resolve to the first element in row-major order."""
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise DimensionError(f"maxpool2 needs B x C x H x W with even H, W; got {x.shape}")
    q = (x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2], x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2])
    y = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
    arg = np.full(y.shape, 3, dtype=np.uint8)
    for k in (2, 1, 0):
        arg[q[k] == y] = k
    return y, (x.shape, arg)


def maxpool2_backward(cache, dy: np.ndarray) -> np.ndarray:
    shape, arg = cache
    if dy.shape != arg.shape:
        raise DimensionError(f"maxpool2 backward expects dy {arg.shape}, got {dy.shape}")
    dx = np.zeros(shape, dtype=DTYPE)
    for k, (di, dj) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        dx[:, :, di::2, dj::2] = np.where(arg == k, dy, 0.0)
    return dx


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(cache, dy: np.ndarray) -> np.ndarray:
    return dy * cache


# -- fully connected / dropout -----------------------------------------------


def fc_forward(layer: FcLayer, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != layer.weights.shape[1]:
        raise DimensionError(f"fc expects B x {layer.weights.shape[1]}, got {x.shape}")
    return x @ layer.weights.T + layer.bias, (layer, x)


def fc_backward(cache, dy: np.ndarray):
    layer, x = cache
    if dy.shape != (x.shape[0], layer.weights.shape[0]):
        raise DimensionError(f"fc backward expects dy {(x.shape[0], layer.weights.shape[0])}, got {dy.shape}")
    return dy @ layer.weights, dy.T @ x, dy.sum(axis=0)


def dropout_forward(layer: DropoutLayer, x: np.ndarray, rng: Rng | None = None):
    """Inverted dropout. Infer mode (or p == 0) returns ``x`` itself."""
    if layer.mode == "infer" or layer.p == 0.0:
        return x, None
    if rng is None:
        raise ValidationError("train-mode dropout needs an Rng")
    keep = 1.0 - layer.p
    mask = (rng.uniform(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(cache, dy: np.ndarray) -> np.ndarray:
    return dy if cache is None else dy * cache


# -- losses ------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood over the batch and its gradient w.r.t. the logits."""
    if logits.shape != targets.shape or logits.ndim != 2:
        raise DimensionError(f"logits {logits.shape} and targets {targets.shape} must match (B x C)")
    if not (np.all((targets == 0) | (targets == 1)) and np.all(targets.sum(axis=1) == 1)):
        raise ValidationError("every target row must be one-hot")
    b = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float((targets * log_probs).sum()) / b
    return max(loss, 0.0), (np.exp(log_probs) - targets) / b


def l2_penalty(weights: Sequence[np.ndarray], lam: float) -> tuple[float, list[np.ndarray]]:
    """``lam * sum ||W||_F^2`` and the per-tensor gradients ``2 * lam * W``."""
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    value = lam * sum(float(np.sum(w * w)) for w in weights)
    return value, [2.0 * lam * w for w in weights]


# -- optimization ------------------------------------------------------------


def learning_rate(epoch: int, cfg: SgdConfig) -> float:
    """Constant ``lr0`` up to ``decay_start_epoch``, then geometric decay down to ``lr_floor``."""
    if epoch < 1:
        raise ValidationError(f"epochs are 1-based, got {epoch}")
    if epoch <= cfg.decay_start_epoch:
        return cfg.lr0
    return max(cfg.lr0 * cfg.decay ** (epoch - cfg.decay_start_epoch), cfg.lr_floor)


def sgd_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float) -> dict[str, np.ndarray]:
    """In-place ``p -= lr * g`` for every parameter; returns ``params``."""
    missing = [k for k in params if k not in grads]
    if missing:
        raise ValidationError(f"no gradient for parameter(s): {', '.join(missing)}")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        p -= lr * g
    return params
