"""The two-stream audio-visual network: assembly, losses, training, inference, model files.

Each branch is three ``conv -> relu -> maxpool2`` stages followed by
``fc1 -> relu -> dropout``. The two branch embeddings are concatenated,
passed through a fusion ``fc -> relu``, and read out by a 2-way detection
head and an optional C-way category head.

Parameter names (in file order)::

    {visual,audio}.conv{1,2,3}.{weight,bias}
    {visual,audio}.fc1.{weight,bias}
    fusion.{weight,bias}
    detect.{weight,bias}
    category.{weight,bias}     only when num_categories > 0
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from adnet import nn
from adnet.data import CATEGORIES, Dataset, ShotTensors, VideoShot, batch_indices
from adnet.errors import ConfigError, DimensionError, FormatError, ValidationError
from adnet.signal import SpectrogramConfig, make_audio_input
from adnet.tensor import DTYPE, Rng
from adnet.vision import VisualConfig, make_visual_input

log = logging.getLogger(__name__)

Modality = Literal["av", "visual", "audio"]
BRANCHES = ("visual", "audio")
MAGIC = b"ADNET001"


@dataclass(frozen=True)
class AdNetConfig:
    input_side: int = 112
    visual_channels: int = 9
    filters: tuple[int, int, int] = (16, 32, 64)
    kernels: tuple[int, int, int] = (5, 5, 3)
    branch_fc: int = 256
    fusion_fc: int = 128
    num_categories: int = 0
    dropout: float = 0.5

    def __post_init__(self):
        if self.input_side < 8 or self.input_side % 8:
            raise ConfigError(f"input_side must be a positive multiple of 8, got {self.input_side}")
        if len(self.filters) != 3 or len(self.kernels) != 3:
            raise ConfigError("exactly three conv stages are required")
        if any(k % 2 == 0 for k in self.kernels):
            raise ConfigError("same-padding needs odd kernel sizes")
        if self.num_categories == 1 or self.num_categories < 0:
            raise ConfigError("num_categories must be 0 (detection only) or >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")

    def branch_in_channels(self, branch: str) -> int:
        return self.visual_channels if branch == "visual" else 1

    @property
    def flat_dim(self) -> int:
        return self.filters[2] * (self.input_side // 8) ** 2

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for br in BRANCHES:
            c_in = self.branch_in_channels(br)
            for i, (c_out, k) in enumerate(zip(self.filters, self.kernels), 1):
                shapes[f"{br}.conv{i}.weight"] = (c_out, c_in, k, k)
                shapes[f"{br}.conv{i}.bias"] = (c_out,)
                c_in = c_out
            shapes[f"{br}.fc1.weight"] = (self.branch_fc, self.flat_dim)
            shapes[f"{br}.fc1.bias"] = (self.branch_fc,)
        shapes["fusion.weight"] = (self.fusion_fc, 2 * self.branch_fc)
        shapes["fusion.bias"] = (self.fusion_fc,)
        shapes["detect.weight"] = (2, self.fusion_fc)
        shapes["detect.bias"] = (2,)
        if self.num_categories:
            shapes["category.weight"] = (self.num_categories, self.fusion_fc)
            shapes["category.bias"] = (self.num_categories,)
        return shapes


@dataclass(frozen=True)
class TrainConfig:
    sgd: nn.SgdConfig = field(default_factory=nn.SgdConfig)
    lam: float = 0.0001
    lambda1: float = 0.0
    lambda2: float = 0.0
    modality: Modality = "av"
    seed: int = 0

    def __post_init__(self):
        if min(self.lam, self.lambda1, self.lambda2) < 0:
            raise ConfigError("regularization weights must be non-negative")
        if self.modality not in ("av", "visual", "audio"):
            raise ConfigError(f"modality must be av, visual or audio; got {self.modality!r}")


@dataclass
class Prediction:
    p_commercial: float
    category_probs: np.ndarray | None = None
    label: np.ndarray | None = None

    @property
    def is_commercial(self) -> bool:
        return self.p_commercial >= 0.5


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    test_acc: float


def init_params(cfg: AdNetConfig, rng: Rng) -> dict[str, np.ndarray]:
    """He-normal weights (std sqrt(2 / fan_in)), zero biases, in canonical order."""
    params = {}
    for name, shape in cfg.param_shapes().items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=DTYPE)
        else:
            params[name] = nn.he_normal(rng, shape, int(np.prod(shape[1:])))
    return params


def config_from_params(params: dict[str, np.ndarray], dropout: float = 0.5) -> AdNetConfig:
    """Recover the geometry a parameter set was built for."""
    try:
        filters = tuple(params[f"visual.conv{i}.weight"].shape[0] for i in (1, 2, 3))
        kernels = tuple(params[f"visual.conv{i}.weight"].shape[2] for i in (1, 2, 3))
        branch_fc, flat = params["visual.fc1.weight"].shape
        side = int(round(np.sqrt(flat / filters[2]))) * 8
        cfg = AdNetConfig(
            input_side=side,
            visual_channels=params["visual.conv1.weight"].shape[1],
            filters=filters,
            kernels=kernels,
            branch_fc=branch_fc,
            fusion_fc=params["fusion.weight"].shape[0],
            num_categories=params["category.weight"].shape[0] if "category.weight" in params else 0,
            dropout=dropout,
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"parameter set does not describe an AdNet ({exc})") from exc
    check_params(params, cfg)
    return cfg


def check_params(params: dict[str, np.ndarray], cfg: AdNetConfig) -> None:
    expected = cfg.param_shapes()
    if list(params) != list(expected):
        missing = [k for k in expected if k not in params]
        extra = [k for k in params if k not in expected]
        raise FormatError(f"parameter names do not match config (missing {missing}, extra {extra})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise FormatError(f"{name}: shape {params[name].shape} does not match config {shape}")


# -- forward / backward ------------------------------------------------------


def _branch_forward(params, cfg: AdNetConfig, br: str, x, mode: str, rng: Rng | None):
    caches = []
    h = x
    for i, k in enumerate(cfg.kernels, 1):
        layer = nn.Conv2dLayer(params[f"{br}.conv{i}.weight"], params[f"{br}.conv{i}.bias"], 1, k // 2)
        h, c_conv = nn.conv2d_forward(layer, h)
        h, c_relu = nn.relu(h)
        h, c_pool = nn.maxpool2_forward(h)
        caches.append((c_conv, c_relu, c_pool))
    pooled_shape = h.shape
    fc = nn.FcLayer(params[f"{br}.fc1.weight"], params[f"{br}.fc1.bias"])
    h, c_fc = nn.fc_forward(fc, h.reshape(h.shape[0], -1))
    h, c_relu = nn.relu(h)
    h, c_drop = nn.dropout_forward(nn.DropoutLayer(cfg.dropout, mode), h, rng)
    return h, (caches, pooled_shape, c_fc, c_relu, c_drop)


def _branch_backward(br: str, cache, dh, grads):
    caches, pooled_shape, c_fc, c_relu, c_drop = cache
    dh = nn.dropout_backward(c_drop, dh)
    dh = nn.relu_backward(c_relu, dh)
    dh, grads[f"{br}.fc1.weight"], grads[f"{br}.fc1.bias"] = nn.fc_backward(c_fc, dh)
    dh = dh.reshape(pooled_shape)
    for i in range(len(caches), 0, -1):
        c_conv, c_relu, c_pool = caches[i - 1]
        dh = nn.maxpool2_backward(c_pool, dh)
        dh = nn.relu_backward(c_relu, dh)
        dh, grads[f"{br}.conv{i}.weight"], grads[f"{br}.conv{i}.bias"] = nn.conv2d_backward(
            c_conv, dh, need_dx=i > 1
        )


def active_branches(modality: Modality) -> tuple[str, ...]:
    if modality == "av":
        return BRANCHES
    if modality in BRANCHES:
        return (modality,)
    raise ConfigError(f"modality must be av, visual or audio; got {modality!r}")


def forward(
    params: dict[str, np.ndarray],
    cfg: AdNetConfig,
    visual: np.ndarray | None,
    audio: np.ndarray | None,
    mode: nn.Mode = "infer",
    rng: Rng | None = None,
    modality: Modality = "av",
):
    """Run the network; returns ``(det_logits, cat_logits_or_None, cache)``.

    A branch disabled by ``modality`` contributes a zero embedding and is not
    evaluated, so its input may be ``None``.
    """
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    inputs = {"visual": visual, "audio": audio}
    s = cfg.input_side
    active = active_branches(modality)
    batch = None
    for br in active:
        x = inputs[br]
        want = (cfg.branch_in_channels(br), s, s)
        if x is None or x.ndim != 4 or x.shape[1:] != want:
            raise DimensionError(f"{br} input must be B x {want[0]} x {s} x {s}, got {None if x is None else x.shape}")
        if batch is not None and x.shape[0] != batch:
            raise DimensionError("visual and audio batch sizes differ")
        batch = x.shape[0]

    embeddings, branch_caches = [], {}
    for br in BRANCHES:
        if br in active:
            emb, branch_caches[br] = _branch_forward(params, cfg, br, inputs[br], mode, rng)
        else:
            emb = np.zeros((batch, cfg.branch_fc), dtype=DTYPE)
        embeddings.append(emb)
    fused = np.concatenate(embeddings, axis=1)
    h, c_fuse = nn.fc_forward(nn.FcLayer(params["fusion.weight"], params["fusion.bias"]), fused)
    h, c_fuse_relu = nn.relu(h)
    det, c_det = nn.fc_forward(nn.FcLayer(params["detect.weight"], params["detect.bias"]), h)
    cat, c_cat = None, None
    if cfg.num_categories:
        cat, c_cat = nn.fc_forward(nn.FcLayer(params["category.weight"], params["category.bias"]), h)
    cache = {
        "cfg": cfg, "modality": modality, "branches": branch_caches,
        "fusion": c_fuse, "fusion_relu": c_fuse_relu, "detect": c_det, "category": c_cat,
    }
    return det, cat, cache


def backward(cache, d_det: np.ndarray, d_cat: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Gradients for every parameter; disabled branches get exact zeros."""
    cfg: AdNetConfig = cache["cfg"]
    grads: dict[str, np.ndarray] = {}
    dh, grads["detect.weight"], grads["detect.bias"] = nn.fc_backward(cache["detect"], d_det)
    if cfg.num_categories:
        if d_cat is None:
            d_cat = np.zeros((d_det.shape[0], cfg.num_categories))
        dh2, grads["category.weight"], grads["category.bias"] = nn.fc_backward(cache["category"], d_cat)
        dh = dh + dh2
    dh = nn.relu_backward(cache["fusion_relu"], dh)
    dfused, grads["fusion.weight"], grads["fusion.bias"] = nn.fc_backward(cache["fusion"], dh)
    for i, br in enumerate(BRANCHES):
        if br in cache["branches"]:
            _branch_backward(br, cache["branches"][br], dfused[:, i * cfg.branch_fc : (i + 1) * cfg.branch_fc], grads)
    shapes = cfg.param_shapes()
    return {name: grads.get(name, np.zeros(shape, dtype=DTYPE)) for name, shape in shapes.items()}


# -- losses ------------------------------------------------------------------


def regularized_names(modality: Modality) -> list[str]:
    """The fc1 weight matrices the Frobenius penalty covers (active branches only)."""
    return [f"{br}.fc1.weight" for br in active_branches(modality)]


def frobenius_term(params, modality: Modality = "av") -> tuple[float, dict[str, np.ndarray]]:
    names = regularized_names(modality)
    value, grads = nn.l2_penalty([params[n] for n in names], 1.0)
    return value, dict(zip(names, grads))


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError(f"labels must lie in [0, {n_classes})")
    out = np.zeros((labels.size, n_classes), dtype=DTYPE)
    out[np.arange(labels.size), labels] = 1.0
    return out


def detection_loss(det_logits, targets, params, lam: float, cache):
    """Cross-entropy on the detection head plus ``lam`` times the fc1 Frobenius norms."""
    if lam < 0:
        raise ValidationError("lambda must be non-negative")
    ce, d_det = nn.softmax_cross_entropy(det_logits, targets)
    grads = backward(cache, d_det)
    reg, reg_grads = frobenius_term(params, cache["modality"])
    for name, g in reg_grads.items():
        grads[name] = grads[name] + lam * g
    return ce + lam * reg, grads


def multitask_loss(det_logits, cat_logits, det_targets, cat_targets, params, lambda1: float, lambda2: float, cache):
    """Detection CE + ``lambda1`` * category CE + ``lambda2`` * fc1 Frobenius norms.

    All-zero rows of ``cat_targets`` mark shots without a category (regular
    content); the category CE is the mean over the remaining rows.
    """
    if min(lambda1, lambda2) < 0:
        raise ValidationError("lambda1 and lambda2 must be non-negative")
    cfg: AdNetConfig = cache["cfg"]
    det_ce, d_det = nn.softmax_cross_entropy(det_logits, det_targets)
    loss, d_cat = det_ce, None
    if lambda1 > 0:
        if cfg.num_categories < 2 or cat_logits is None:
            raise ConfigError("category loss weight > 0 needs a category head (num_categories >= 2)")
        labelled = cat_targets.sum(axis=1) > 0
        d_cat = np.zeros_like(cat_logits)
        if labelled.any():
            cat_ce, d_rows = nn.softmax_cross_entropy(cat_logits[labelled], cat_targets[labelled])
            loss += lambda1 * cat_ce
            d_cat[labelled] = lambda1 * d_rows
    grads = backward(cache, d_det, d_cat)
    reg, reg_grads = frobenius_term(params, cache["modality"])
    for name, g in reg_grads.items():
        grads[name] = grads[name] + lambda2 * g
    return loss + lambda2 * reg, grads


# -- training / evaluation ---------------------------------------------------


def _batch_loss(params, cfg: AdNetConfig, tcfg: TrainConfig, data: ShotTensors, idx, rng: Rng):
    det, cat, cache = forward(params, cfg, data.visual[idx], data.audio[idx], "train", rng, tcfg.modality)
    det_t = one_hot(data.labels[idx], 2)
    if cfg.num_categories and tcfg.lambda1 > 0:
        cats = data.categories[idx]
        cat_t = np.zeros((len(idx), cfg.num_categories), dtype=DTYPE)
        cat_t[cats >= 0] = one_hot(cats[cats >= 0], cfg.num_categories)
        loss, grads = multitask_loss(det, cat, det_t, cat_t, params, tcfg.lambda1, tcfg.lambda2, cache)
    else:
        loss, grads = detection_loss(det, det_t, params, tcfg.lam, cache)
    return loss, grads, det


def predict_proba(params, cfg: AdNetConfig, data: ShotTensors, modality: Modality = "av", batch_size: int = 64) -> np.ndarray:
    """Commercial-class probability for every shot (infer mode)."""
    out = []
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        det, _, _ = forward(params, cfg, data.visual[sl], data.audio[sl], "infer", None, modality)
        out.append(nn.softmax(det)[:, 1])
    return np.concatenate(out) if out else np.zeros(0)


def accuracy(params, cfg: AdNetConfig, data: ShotTensors, modality: Modality = "av") -> float:
    pred = predict_proba(params, cfg, data, modality) >= 0.5
    return float(np.mean(pred == (data.labels == 1)))


def train(dataset: Dataset, tcfg: TrainConfig, cfg: AdNetConfig, max_steps: int | None = None):
    """Seeded mini-batch SGD; returns ``(params, curves)`` with one record per epoch.

    ``train_loss`` and ``train_acc`` are running averages over the epoch's
    train-mode batches (dropout active); ``test_acc`` is an infer-mode pass over
    the test split after the epoch. ``max_steps`` stops early, possibly
    mid-epoch.
    """
    if len(dataset.train) == 0 or len(dataset.test) == 0:
        raise ValidationError("train and test splits must be non-empty")
    master = Rng(tcfg.seed)
    params = init_params(cfg, master.spawn())
    shuffle_rng, dropout_rng = master.spawn(), master.spawn()
    curves: list[EpochRecord] = []
    steps = 0
    for epoch in range(1, tcfg.sgd.epochs + 1):
        lr = nn.learning_rate(epoch, tcfg.sgd)
        total, correct, seen = 0.0, 0, 0
        for idx in batch_indices(len(dataset.train), tcfg.sgd.batch_size, shuffle_rng):
            loss, grads, det = _batch_loss(params, cfg, tcfg, dataset.train, idx, dropout_rng)
            nn.sgd_step(params, grads, lr)
            total += loss * len(idx)
            correct += int(np.sum((det[:, 1] >= det[:, 0]) == (dataset.train.labels[idx] == 1)))
            seen += len(idx)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        rec = EpochRecord(epoch, lr, total / seen, correct / seen, accuracy(params, cfg, dataset.test, tcfg.modality))
        curves.append(rec)
        log.info("epoch %d lr %.6g loss %.4f train %.3f test %.3f", *vars(rec).values())
        if max_steps is not None and steps >= max_steps:
            break
    return params, curves


def predict_shot(
    params,
    cfg: AdNetConfig,
    shot: VideoShot,
    visual_cfg: VisualConfig | None = None,
    spec_cfg: SpectrogramConfig | None = None,
    modality: Modality = "av",
) -> Prediction:
    k = cfg.visual_channels // 3
    visual_cfg = visual_cfg or VisualConfig(keyframes=k, side=cfg.input_side)
    spec_cfg = spec_cfg or SpectrogramConfig(output_side=cfg.input_side)
    v = make_visual_input(shot.frames, visual_cfg)[None]
    a = make_audio_input(shot.audio, spec_cfg)[None]
    det, cat, _ = forward(params, cfg, v, a, "infer", None, modality)
    probs = nn.softmax(det)[0]
    cat_probs = nn.softmax(cat)[0] if cat is not None else None
    label = one_hot([int(shot.is_commercial)], 2)[0] if shot.label is not None else None
    return Prediction(float(probs[1]), cat_probs, label)


# -- model files -------------------------------------------------------------


def save_params(params: dict[str, np.ndarray], path) -> None:
    """Little-endian binary: magic, then per tensor name, dims and float32 values."""
    chunks = [MAGIC]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path, cfg: AdNetConfig | None = None) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read model ({exc})") from exc
    if buf[:8] != MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:8]!r}")
    pos, params, name = 8, {}, "<header>"

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"{path}: truncated while reading tensor {name!r}")
        out = buf[pos : pos + n]
        pos += n
        return out

    while pos < len(buf):
        name = "<name>"
        (n_name,) = struct.unpack("<I", take(4))
        try:
            name = take(n_name).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: tensor name is not UTF-8") from exc
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(dims)) if ndim else 1
        values = np.frombuffer(take(4 * count), dtype="<f4")
        params[name] = values.astype(DTYPE).reshape(dims)
    if cfg is not None:
        check_params(params, cfg)
    return params


def truncate_f32(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: v.astype(np.float32).astype(DTYPE) for k, v in params.items()}


def category_names() -> tuple[str, ...]:
    return CATEGORIES
