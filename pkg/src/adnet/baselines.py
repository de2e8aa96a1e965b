"""Hand-crafted baselines: HOG and LBP shot features with a linear SVM.

HOG variant: ``[-1, 0, 1]`` central differences with replicated borders,
unsigned orientation in [0, 180) split over 9 bins centred at 10, 30, ..., 170
degrees with linear (circular) interpolation between the two nearest centres,
8x8-pixel cells, 2x2-cell blocks at a stride of one cell, and block
normalization ``v / sqrt(||v||^2 + eps^2)``. Block vectors list cells in
row-major order, 9 bins each; blocks are concatenated row-major.

LBP variant: 3x3 neighbourhood read clockwise from the top-left neighbour;
neighbour ``i`` sets bit ``2**i`` when it is >= the centre pixel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from adnet.errors import ConfigError, DimensionError, ValidationError
from adnet.tensor import DTYPE, Rng
from adnet.vision import VisualConfig, frame_to_square, select_keyframes, to_gray

# (dy, dx) offsets: top-left, then clockwise
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


@dataclass(frozen=True)
class HogConfig:
    cell: int = 8
    bins: int = 9
    block: int = 2
    eps: float = 1e-6


@dataclass(frozen=True)
class LbpConfig:
    bins: int = 256


def image_gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gp = np.pad(gray, 1, mode="edge")
    gx = gp[1:-1, 2:] - gp[1:-1, :-2]
    gy = gp[2:, 1:-1] - gp[:-2, 1:-1]
    return gx, gy


def cell_histograms(gray: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Per-cell orientation histograms, shape ``cells_y x cells_x x bins``."""
    h, w = gray.shape
    gx, gy = image_gradients(gray)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    width = 180.0 / cfg.bins
    pos = ang / width - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    b0 = np.mod(lo, cfg.bins).astype(np.int64)
    b1 = np.mod(lo + 1, cfg.bins).astype(np.int64)
    ny, nx = h // cfg.cell, w // cfg.cell
    cell_id = (np.arange(h)[:, None] // cfg.cell) * nx + np.arange(w)[None, :] // cfg.cell
    size = ny * nx * cfg.bins
    hist = np.bincount((cell_id * cfg.bins + b0).ravel(), ((1.0 - frac) * mag).ravel(), size)
    hist += np.bincount((cell_id * cfg.bins + b1).ravel(), (frac * mag).ravel(), size)
    return hist.reshape(ny, nx, cfg.bins)


def hog(gray: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    gray = np.asarray(gray, dtype=DTYPE)
    if gray.ndim != 2:
        raise DimensionError(f"hog needs a 2-D image, got {gray.shape}")
    h, w = gray.shape
    if h % cfg.cell or w % cfg.cell or h // cfg.cell < cfg.block or w // cfg.cell < cfg.block:
        raise ConfigError(f"image {h}x{w} does not tile into {cfg.cell}px cells with {cfg.block}x{cfg.block} blocks")
    cells = cell_histograms(gray, cfg)
    ny, nx, _ = cells.shape
    nb_y, nb_x = ny - cfg.block + 1, nx - cfg.block + 1
    parts = [cells[i : i + nb_y, j : j + nb_x] for i in range(cfg.block) for j in range(cfg.block)]
    blocks = np.concatenate(parts, axis=2)  # nb_y x nb_x x (block^2 * bins)
    norm = np.sqrt(np.sum(blocks * blocks, axis=2, keepdims=True) + cfg.eps**2)
    return (blocks / norm).reshape(-1)


def lbp_codes(gray: np.ndarray) -> np.ndarray:
    gray = np.asarray(gray)
    if gray.ndim != 2 or min(gray.shape) < 3:
        raise ValidationError(f"lbp needs a 2-D image of at least 3x3, got {gray.shape}")
    h, w = gray.shape
    center = gray[1:-1, 1:-1]
    codes = np.zeros(center.shape, dtype=np.int64)
    for bit, (dy, dx) in enumerate(LBP_OFFSETS):
        codes |= (gray[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx] >= center).astype(np.int64) << bit
    return codes


def lbp_histogram(gray: np.ndarray, cfg: LbpConfig = LbpConfig()) -> np.ndarray:
    codes = lbp_codes(gray)
    hist = np.bincount(codes.ravel(), minlength=cfg.bins).astype(DTYPE)
    return hist / codes.size


def shot_baseline_features(
    frames: Sequence,
    kind: Literal["hog", "lbp"],
    visual_cfg: VisualConfig = VisualConfig(),
    hog_cfg: HogConfig = HogConfig(),
    lbp_cfg: LbpConfig = LbpConfig(),
) -> np.ndarray:
    """Mean per-keyframe feature over the shot's K keyframes (luma, S x S, in [0, 1])."""
    if kind not in ("hog", "lbp"):
        raise ConfigError(f"feature kind must be 'hog' or 'lbp', got {kind!r}")
    if not len(frames):
        raise ValidationError("shot has no frames")
    feats = []
    for f in select_keyframes(frames, visual_cfg.keyframes):
        gray = to_gray(frame_to_square(f, visual_cfg.side)) / 255.0
        feats.append(hog(gray, hog_cfg) if kind == "hog" else lbp_histogram(gray, lbp_cfg))
    return np.mean(feats, axis=0)


# -- linear SVM --------------------------------------------------------------


@dataclass
class LinearSvm:
    w: np.ndarray
    b: float
    lambda_svm: float = 1e-4
    epochs: int = 20

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=DTYPE)
        if X.shape[-1] != self.w.shape[0]:
            raise DimensionError(f"SVM trained on {self.w.shape[0]} features, got {X.shape[-1]}")
        return X @ self.w + self.b


def svm_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float) -> float:
    """``lam/2 ||w||^2 + mean(max(0, 1 - y (w.x + b)))``."""
    margins = y * (X @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.mean(np.maximum(0.0, 1.0 - margins)))


def svm_train(
    X: np.ndarray,
    y: np.ndarray,
    lambda_svm: float = 1e-4,
    epochs: int = 20,
    rng: Rng | None = None,
    history: list | None = None,
) -> LinearSvm:
    """Pegasos: stochastic sub-gradient steps of size ``1/(lambda t)`` on the hinge objective.

    The bias is not regularized. After each step the weight vector is
    projected onto the ball of radius ``1/sqrt(lambda)`` and the bias is
    clipped to ``|b| <= R/sqrt(lambda) + 1`` (``R`` the largest row norm), a
    box that always contains the optimum and stops the early huge steps from
    dominating the average. The returned model is
    the uniform average of every iterate since the start, which makes the
    per-epoch objective far smoother than the last iterate. If ``history`` is
    given, the objective of the running average is appended after each epoch.
    """
    X = np.asarray(X, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE)
    if X.ndim != 2 or X.shape[0] < 1 or y.shape != (X.shape[0],):
        raise DimensionError(f"need X of shape N x d and N labels, got {X.shape}, {y.shape}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("labels must be -1 or +1")
    if lambda_svm <= 0 or epochs < 1:
        raise ConfigError("lambda_svm must be positive and epochs >= 1")
    if np.unique(y).size < 2:
        warnings.warn("svm_train: only one class present in training labels", RuntimeWarning, stacklevel=2)
    rng = rng or Rng(0)
    n, d = X.shape
    w, b = np.zeros(d, dtype=DTYPE), 0.0
    radius = 1.0 / np.sqrt(lambda_svm)
    b_max = radius * float(np.max(np.linalg.norm(X, axis=1))) + 1.0
    t = 0
    w_sum, b_sum = np.zeros(d, dtype=DTYPE), 0.0
    for _ in range(epochs):
        for i in rng.shuffle_indices(n):
            t += 1
            eta = 1.0 / (lambda_svm * t)
            violated = y[i] * (X[i] @ w + b) < 1.0
            w = w * (1.0 - eta * lambda_svm)
            if violated:
                w = w + eta * y[i] * X[i]
                b = b + eta * y[i]
            norm = float(np.linalg.norm(w))
            if norm > radius:
                w = w * (radius / norm)
            b = min(max(b, -b_max), b_max)
            w_sum += w
            b_sum += b
        w_avg, b_avg = w_sum / t, b_sum / t
        if history is not None:
            history.append(svm_objective(w_avg, b_avg, X, y, lambda_svm))
    return LinearSvm(w_avg, float(b_avg), lambda_svm, epochs)


def svm_predict(model: LinearSvm, x: np.ndarray):
    """``(label, margin)`` for one vector, or arrays of both for a matrix; ties go to +1."""
    margin = model.decision(x)
    label = np.where(margin >= 0.0, 1, -1)
    if np.ndim(margin) == 0:
        return int(label), float(margin)
    return label, margin


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def baseline_features(manifest, split: str, kind: str, visual_cfg: VisualConfig = VisualConfig()):
    """Feature matrix and +-1 labels for every shot of a manifest split."""
    from adnet.data import read_shot

    paths = manifest.paths(split)
    if not paths:
        raise ValidationError(f"manifest has no {split!r} shots")
    rows, labels = [], []
    for p in paths:
        shot = read_shot(p)
        rows.append(shot_baseline_features(shot.frames, kind, visual_cfg))
        labels.append(1.0 if shot.is_commercial else -1.0)
    return np.stack(rows), np.asarray(labels)


@dataclass
class BaselineResult:
    kind: str
    train_accuracy: float
    test_accuracy: float
    model: LinearSvm
    scaler: Standardizer


def run_baseline(
    manifest,
    kind: Literal["hog", "lbp"],
    visual_cfg: VisualConfig = VisualConfig(),
    seed: int = 0,
    lambda_svm: float = 1e-4,
    epochs: int = 20,
) -> BaselineResult:
    """Train on the manifest's train split (standardized features) and score both splits."""
    X_tr, y_tr = baseline_features(manifest, "train", kind, visual_cfg)
    X_te, y_te = baseline_features(manifest, "test", kind, visual_cfg)
    scaler = Standardizer.fit(X_tr)
    model = svm_train(scaler(X_tr), y_tr, lambda_svm, epochs, Rng(seed))
    acc_tr = float(np.mean(svm_predict(model, scaler(X_tr))[0] == y_tr))
    acc_te = float(np.mean(svm_predict(model, scaler(X_te))[0] == y_te))
    return BaselineResult(kind, acc_tr, acc_te, model, scaler)
