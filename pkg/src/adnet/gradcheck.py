"""Finite-difference verification of every backward pass.

Central differences with ``h = 1e-5`` in float64. Errors are reported per
tensor as ``||analytic - numeric|| / max(||analytic||, ||numeric||)``.
Coordinates whose +-h probe flips a ReLU mask or a max-pool argmax are
skipped: the loss is not differentiable there and the numeric estimate is
meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from adnet import model as M
from adnet import nn
from adnet.tensor import Rng, rng_normal

H = 1e-5
TOLERANCE = 1e-4


@dataclass
class GradcheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tol: float = TOLERANCE) -> bool:
        return self.max_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric)) / denom


def numeric_gradient(f, x: np.ndarray, h: float = H, signature=None):
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbed in place.

    With ``signature`` (a callable returning a hashable description of the
    active piecewise-linear region) coordinates whose probes leave the
    region are returned in a boolean mask and zeroed in the gradient.
    """
    grad = np.zeros_like(x)
    skip = np.zeros(x.shape, dtype=bool)
    flat, gflat, sflat = x.reshape(-1), grad.reshape(-1), skip.reshape(-1)
    base = signature() if signature else None
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        sp = signature() if signature else None
        flat[i] = old - h
        fm = f()
        sm = signature() if signature else None
        flat[i] = old
        if signature and (sp != base or sm != base):
            sflat[i] = True
            continue
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad, skip


def _masked_error(analytic, numeric, skip) -> float:
    keep = ~skip
    return relative_error(analytic[keep], numeric[keep])


# -- individual layers -------------------------------------------------------


def layer_checks(seed: int = 0) -> GradcheckReport:
    rng = Rng(seed)
    rep = GradcheckReport()

    def record(name, analytic, numeric, skip=None):
        skip = np.zeros(analytic.shape, dtype=bool) if skip is None else skip
        rep.errors[name] = _masked_error(analytic, numeric, skip)
        rep.skipped[name] = int(skip.sum())

    # convolution, same padding and a strided variant
    for tag, stride, pad in (("conv2d", 1, 1), ("conv2d_stride2", 2, 0)):
        x = rng_normal(rng, (2, 2, 5, 5))
        layer = nn.Conv2dLayer(rng_normal(rng, (3, 2, 3, 3)), rng_normal(rng, (3,)), stride, pad)
        y, cache = nn.conv2d_forward(layer, x)
        r = rng_normal(rng, y.shape)
        dx, dW, db = nn.conv2d_backward(cache, r)
        f = lambda: float(np.sum(nn.conv2d_forward(layer, x)[0] * r))
        record(f"{tag}.dx", dx, numeric_gradient(f, x)[0])
        record(f"{tag}.dW", dW, numeric_gradient(f, layer.weights)[0])
        record(f"{tag}.db", db, numeric_gradient(f, layer.bias)[0])

    x = rng_normal(rng, (2, 3, 4, 6))
    y, cache = nn.maxpool2_forward(x)
    r = rng_normal(rng, y.shape)
    sig = lambda: nn.maxpool2_forward(x)[1][1].tobytes()
    num, skip = numeric_gradient(lambda: float(np.sum(nn.maxpool2_forward(x)[0] * r)), x, signature=sig)
    record("maxpool2.dx", nn.maxpool2_backward(cache, r), num, skip)

    x = rng_normal(rng, (3, 7))
    y, cache = nn.relu(x)
    r = rng_normal(rng, y.shape)
    sig = lambda: (x > 0).tobytes()
    num, skip = numeric_gradient(lambda: float(np.sum(nn.relu(x)[0] * r)), x, signature=sig)
    record("relu.dx", nn.relu_backward(cache, r), num, skip)

    x = rng_normal(rng, (3, 4))
    layer = nn.FcLayer(rng_normal(rng, (5, 4)), rng_normal(rng, (5,)))
    y, cache = nn.fc_forward(layer, x)
    r = rng_normal(rng, y.shape)
    dx, dW, db = nn.fc_backward(cache, r)
    f = lambda: float(np.sum(nn.fc_forward(layer, x)[0] * r))
    record("fc.dx", dx, numeric_gradient(f, x)[0])
    record("fc.dW", dW, numeric_gradient(f, layer.weights)[0])
    record("fc.db", db, numeric_gradient(f, layer.bias)[0])

    x = rng_normal(rng, (4, 6))
    drop = nn.DropoutLayer(0.5, "train")
    mask_seed = int(rng.next_u64(1)[0])
    y, cache = nn.dropout_forward(drop, x, Rng(mask_seed))
    r = rng_normal(rng, y.shape)
    f = lambda: float(np.sum(nn.dropout_forward(drop, x, Rng(mask_seed))[0] * r))
    record("dropout.dx", nn.dropout_backward(cache, r), numeric_gradient(f, x)[0])

    logits = rng_normal(rng, (4, 3))
    targets = M.one_hot([0, 2, 1, 2], 3)
    _, dlogits = nn.softmax_cross_entropy(logits, targets)
    f = lambda: nn.softmax_cross_entropy(logits, targets)[0]
    record("softmax_cross_entropy.dlogits", dlogits, numeric_gradient(f, logits)[0])

    ws = [rng_normal(rng, (3, 4)), rng_normal(rng, (2,))]
    _, grads = nn.l2_penalty(ws, 0.37)
    for k, w in enumerate(ws):
        f = lambda: nn.l2_penalty(ws, 0.37)[0]
        record(f"l2_penalty.dW{k}", grads[k], numeric_gradient(f, w)[0])
    return rep


# -- whole network -----------------------------------------------------------

REDUCED = M.AdNetConfig(
    input_side=16, visual_channels=9, filters=(2, 2, 2), kernels=(5, 5, 3),
    branch_fc=8, fusion_fc=4, num_categories=3, dropout=0.5,
)


def _region_signature(cache) -> bytes:
    parts = []
    for br in M.BRANCHES:
        if br not in cache["branches"]:
            continue
        stages, _, _, fc_relu, _ = cache["branches"][br]
        for _, relu_mask, (_, arg) in stages:
            parts += [np.packbits(relu_mask).tobytes(), arg.tobytes()]
        parts.append(np.packbits(fc_relu).tobytes())
    parts.append(np.packbits(cache["fusion_relu"]).tobytes())
    return b"|".join(parts)


def end_to_end_checks(seed: int = 0, modality: M.Modality = "av") -> GradcheckReport:
    """Detection loss and multi-task loss gradients for every parameter at reduced geometry."""
    cfg = REDUCED
    rng = Rng(seed)
    params = M.init_params(cfg, rng.spawn())
    for name in params:
        if name.endswith(".bias"):
            params[name] = 0.1 * rng_normal(rng, params[name].shape)
    visual = rng.uniform((2, cfg.visual_channels, 16, 16)) - 0.5
    audio = rng.uniform((2, 1, 16, 16))
    det_t = M.one_hot([0, 1], 2)
    cat_t = M.one_hot([2, 0], 3)
    drop_seed = int(rng.next_u64(1)[0])
    rep = GradcheckReport()

    def run(kind):
        det, cat, cache = M.forward(params, cfg, visual, audio, "train", Rng(drop_seed), modality)
        if kind == "detection":
            loss, grads = M.detection_loss(det, det_t, params, 1e-4, cache)
        else:
            loss, grads = M.multitask_loss(det, cat, det_t, cat_t, params, 0.5, 1e-4, cache)
        return loss, grads, cache

    for kind in ("detection", "multitask"):
        _, grads, _ = run(kind)
        f = lambda: run(kind)[0]
        sig = lambda: _region_signature(run(kind)[2])
        for name, p in params.items():
            num, skip = numeric_gradient(f, p, signature=sig)
            rep.errors[f"{kind}/{name}"] = _masked_error(grads[name], num, skip)
            rep.skipped[f"{kind}/{name}"] = int(skip.sum())
    return rep


def run_gradcheck(seed: int = 0) -> GradcheckReport:
    rep = layer_checks(seed)
    e2e = end_to_end_checks(seed)
    rep.errors.update(e2e.errors)
    rep.skipped.update(e2e.skipped)
    return rep
