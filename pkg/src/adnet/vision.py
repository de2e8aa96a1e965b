"""Visual branch preprocessing: keyframes, center crop, resize, normalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from adnet.errors import ConfigError, ValidationError
from adnet.signal import resize_bilinear
from adnet.tensor import DTYPE

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class Frame:
    """RGB frame stored as an ``H x W x 3`` uint8 array."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.uint8)
        if self.data.ndim != 3 or self.data.shape[2] != 3 or min(self.data.shape[:2]) < 1:
            raise ValidationError(f"frame must be H x W x 3 with H, W >= 1; got {self.data.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        return isinstance(other, Frame) and np.array_equal(self.data, other.data)


@dataclass(frozen=True)
class VisualConfig:
    keyframes: int = 3
    side: int = 112

    def __post_init__(self):
        if self.keyframes < 1:
            raise ConfigError(f"keyframes must be positive, got {self.keyframes}")
        if self.side < 8 or self.side % 8:
            raise ConfigError(f"side must be a positive multiple of 8, got {self.side}")

    @property
    def channels(self) -> int:
        return 3 * self.keyframes


def keyframe_indices(n_frames: int, k: int) -> list[int]:
    if n_frames < 1:
        raise ValidationError("shot has no frames")
    if n_frames < k:
        return list(range(n_frames)) + [n_frames - 1] * (k - n_frames)
    # floor((i + 0.5) * T / K) in exact integer arithmetic
    return [(2 * i + 1) * n_frames // (2 * k) for i in range(k)]


def select_keyframes(frames: Sequence[Frame], k: int) -> list[Frame]:
    """K frames sampled at the centers of K equal temporal slices."""
    return [frames[i] for i in keyframe_indices(len(frames), k)]


def center_crop_square(f: Frame) -> Frame:
    h, w = f.height, f.width
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    return Frame(f.data[top : top + side, left : left + side])


def frame_to_square(f: Frame, side: int) -> np.ndarray:
    """Center crop and bilinear resize; returns ``3 x side x side`` floats in [0, 255]."""
    crop = center_crop_square(f).data.transpose(2, 0, 1).astype(DTYPE)
    return resize_bilinear(crop, side, side)


def to_gray(rgb_chw: np.ndarray) -> np.ndarray:
    return np.tensordot(LUMA, rgb_chw, axes=(0, 0))


def make_visual_input(frames: Sequence[Frame], cfg: VisualConfig) -> np.ndarray:
    """``3K x S x S`` tensor of keyframes stacked on the channel axis, in [-0.5, 0.5]."""
    keys = select_keyframes(frames, cfg.keyframes)
    planes = [frame_to_square(f, cfg.side) / 255.0 - 0.5 for f in keys]
    return np.clip(np.concatenate(planes, axis=0), -0.5, 0.5)
