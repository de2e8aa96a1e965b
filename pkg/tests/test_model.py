import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adnet import model as M
from adnet import nn
from adnet.data import Dataset, SynthConfig, preprocess_shots, synth_shot
from adnet.errors import ConfigError, DimensionError, FormatError, ValidationError
from adnet.signal import SpectrogramConfig
from adnet.tensor import Rng, rng_normal
from adnet.vision import VisualConfig

SMALL = M.AdNetConfig(input_side=16, filters=(2, 3, 4), branch_fc=8, fusion_fc=4)
SMALL_CAT = M.AdNetConfig(input_side=16, filters=(2, 3, 4), branch_fc=8, fusion_fc=4, num_categories=4)


def inputs(cfg, b, seed=0):
    r = Rng(seed)
    s = cfg.input_side
    return r.uniform((b, cfg.visual_channels, s, s)), r.uniform((b, 1, s, s))


def small_shots(n, seed=0, categories=False):
    cfg = SynthConfig(n_shots=max(n, 2), seed=seed, categories=categories)
    master = Rng(seed)
    return [synth_shot(cfg, master.spawn(), f"s{i}", i % 2 == 0) for i in range(n)]


def small_dataset(n_train=6, n_test=4, side=16):
    shots = small_shots(n_train + n_test)
    t = preprocess_shots(shots, VisualConfig(side=side), SpectrogramConfig(output_side=side))
    return Dataset(t.subset(range(n_train)), t.subset(range(n_train, n_train + n_test)))


# -- geometry ----------------------------------------------------------------


def test_param_shapes_default():
    shapes = M.AdNetConfig().param_shapes()
    assert shapes["visual.conv1.weight"] == (16, 9, 5, 5)
    assert shapes["visual.conv2.weight"] == (32, 16, 5, 5)
    assert shapes["visual.conv3.weight"] == (64, 32, 3, 3)
    assert shapes["audio.conv1.weight"] == (16, 1, 5, 5)
    assert shapes["visual.fc1.weight"] == (256, 64 * 14 * 14)
    assert shapes["audio.fc1.weight"] == (256, 64 * 14 * 14)
    assert shapes["fusion.weight"] == (128, 512)
    assert shapes["detect.weight"] == (2, 128)
    assert "category.weight" not in shapes
    assert M.AdNetConfig(num_categories=4).param_shapes()["category.weight"] == (4, 128)


@pytest.mark.parametrize("kw", [dict(input_side=20), dict(kernels=(5, 4, 3)), dict(num_categories=1), dict(dropout=1.0)])
def test_config_rejects_bad_geometry(kw):
    with pytest.raises(ConfigError):
        M.AdNetConfig(**kw)


def test_init_params_he_and_zero_bias():
    params = M.init_params(M.AdNetConfig(), Rng(0))
    assert list(params) == list(M.AdNetConfig().param_shapes())
    w = params["visual.fc1.weight"]
    assert abs(w.std() - math.sqrt(2 / w.shape[1])) < 0.01 * math.sqrt(2 / w.shape[1])
    assert all(not np.any(v) for k, v in params.items() if k.endswith(".bias"))


def test_config_from_params_round_trip():
    for cfg in (SMALL, SMALL_CAT, M.AdNetConfig()):
        assert M.config_from_params(M.init_params(cfg, Rng(1))) == cfg


# -- forward -----------------------------------------------------------------


def test_forward_default_batch_of_four():
    cfg = M.AdNetConfig()
    params = M.init_params(cfg, Rng(0))
    v, a = inputs(cfg, 4)
    det, cat, _ = M.forward(params, cfg, v, a)
    assert det.shape == (4, 2) and cat is None
    assert np.all(np.isfinite(det))


def test_forward_infer_is_deterministic():
    params = M.init_params(SMALL_CAT, Rng(3))
    v, a = inputs(SMALL_CAT, 3)
    d1, c1, _ = M.forward(params, SMALL_CAT, v, a)
    d2, c2, _ = M.forward(params, SMALL_CAT, v.copy(), a.copy())
    assert np.array_equal(d1, d2) and np.array_equal(c1, c2)
    assert c1.shape == (3, 4)


@given(st.integers(0, 2**32), st.sampled_from(["av", "visual", "audio"]))
def test_forward_finite_and_pure(seed, modality):
    params = M.init_params(SMALL, Rng(seed))
    v, a = inputs(SMALL, 2, seed)
    out1 = M.forward(params, SMALL, v, a, modality=modality)[0]
    out2 = M.forward(params, SMALL, v, a, modality=modality)[0]
    assert np.all(np.isfinite(out1)) and np.array_equal(out1, out2)


def test_forward_shape_errors():
    params = M.init_params(SMALL, Rng(0))
    v, a = inputs(SMALL, 2)
    with pytest.raises(DimensionError):
        M.forward(params, SMALL, v[:, :3], a)
    with pytest.raises(DimensionError):
        M.forward(params, SMALL, v, a[:1])
    with pytest.raises(DimensionError):
        M.forward(params, SMALL, v, None)
    with pytest.raises(ConfigError):
        M.forward(params, SMALL, v, a, mode="eval")


def test_disabled_branch_gets_zero_gradient():
    params = M.init_params(SMALL, Rng(5))
    v, a = inputs(SMALL, 3)
    targets = M.one_hot([0, 1, 1], 2)
    for modality, off in (("visual", "audio"), ("audio", "visual")):
        det, _, cache = M.forward(params, SMALL, v, a, "train", Rng(1), modality)
        # disabled input is never read
        det_none, _, _ = M.forward(params, SMALL, v if off == "audio" else None, a if off == "visual" else None,
                                   "train", Rng(1), modality)
        assert np.array_equal(det, det_none)
        _, grads = M.detection_loss(det, targets, params, 1e-4, cache)
        for name, g in grads.items():
            if name.startswith(off + "."):
                assert not np.any(g), name
        on = "visual" if off == "audio" else "audio"
        assert np.any(grads[f"{on}.conv1.weight"])


def test_disabled_branch_embedding_is_zero():
    params = M.init_params(SMALL, Rng(2))
    v, a = inputs(SMALL, 2)
    det, _, cache = M.forward(params, SMALL, v, a, modality="visual")
    _, fused = cache["fusion"]
    assert np.any(fused[:, : SMALL.branch_fc])
    assert not np.any(fused[:, SMALL.branch_fc :])


# -- losses ------------------------------------------------------------------


def test_detection_loss_value():
    params = M.init_params(SMALL, Rng(0))
    for br in M.BRANCHES:
        params[f"{br}.fc1.weight"][:] = 0.0
    v, a = inputs(SMALL, 4)
    det, _, cache = M.forward(params, SMALL, v, a)
    assert np.array_equal(det, np.zeros((4, 2)))
    loss, _ = M.detection_loss(det, M.one_hot([0, 1, 1, 0], 2), params, 1e-4, cache)
    assert loss == pytest.approx(math.log(2), abs=1e-15)

    params = M.init_params(SMALL, Rng(1))
    det, _, cache = M.forward(params, SMALL, v, a)
    t = M.one_hot([0, 1, 1, 0], 2)
    ce = nn.softmax_cross_entropy(det, t)[0]
    frob = sum(float(np.sum(params[f"{br}.fc1.weight"] ** 2)) for br in M.BRANCHES)
    assert M.detection_loss(det, t, params, 0.37, cache)[0] == pytest.approx(ce + 0.37 * frob, rel=1e-12)
    assert M.TrainConfig().lam == 0.0001


def test_detection_loss_penalizes_active_branches_only():
    params = M.init_params(SMALL, Rng(1))
    v, a = inputs(SMALL, 2)
    det, _, cache = M.forward(params, SMALL, v, a, modality="audio")
    t = M.one_hot([0, 1], 2)
    ce = nn.softmax_cross_entropy(det, t)[0]
    frob = float(np.sum(params["audio.fc1.weight"] ** 2))
    assert M.detection_loss(det, t, params, 0.1, cache)[0] == pytest.approx(ce + 0.1 * frob, rel=1e-12)


def test_multitask_loss_value():
    params = M.init_params(SMALL_CAT, Rng(4))
    v, a = inputs(SMALL_CAT, 4)
    det, cat, cache = M.forward(params, SMALL_CAT, v, a)
    dt, ct = M.one_hot([0, 1, 1, 0], 2), M.one_hot([3, 0, 2, 1], 4)
    bare = nn.softmax_cross_entropy(det, dt)[0]
    assert M.multitask_loss(det, cat, dt, ct, params, 0.0, 0.0, cache)[0] == bare
    det_loss, det_grads = M.detection_loss(det, dt, params, 1e-4, cache)
    mt_loss, mt_grads = M.multitask_loss(det, cat, dt, ct, params, 0.0, 1e-4, cache)
    assert mt_loss == det_loss
    assert all(np.array_equal(det_grads[k], mt_grads[k]) for k in det_grads)
    cat_ce = nn.softmax_cross_entropy(cat, ct)[0]
    frob = sum(float(np.sum(params[f"{br}.fc1.weight"] ** 2)) for br in M.BRANCHES)
    got = M.multitask_loss(det, cat, dt, ct, params, 0.5, 1e-3, cache)[0]
    assert got == pytest.approx(bare + 0.5 * cat_ce + 1e-3 * frob, rel=1e-12)


def test_multitask_needs_category_head():
    params = M.init_params(SMALL, Rng(0))
    v, a = inputs(SMALL, 2)
    det, cat, cache = M.forward(params, SMALL, v, a)
    with pytest.raises(ConfigError):
        M.multitask_loss(det, cat, M.one_hot([0, 1], 2), M.one_hot([0, 1], 2), params, 0.5, 0.0, cache)


def test_negative_weights_rejected():
    with pytest.raises(ConfigError):
        M.TrainConfig(lam=-1.0)
    with pytest.raises(ConfigError):
        M.TrainConfig(modality="both")


# -- training ----------------------------------------------------------------


def test_train_is_deterministic(tmp_path):
    data = small_dataset()
    tcfg = M.TrainConfig(nn.SgdConfig(batch_size=4, epochs=2), seed=9)
    p1, c1 = M.train(data, tcfg, SMALL)
    p2, c2 = M.train(data, tcfg, SMALL)
    assert c1 == c2
    M.save_params(p1, tmp_path / "a.bin")
    M.save_params(p2, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    assert [r.epoch for r in c1] == [1, 2]
    assert [r.lr for r in c1] == [nn.learning_rate(e, tcfg.sgd) for e in (1, 2)]


def test_train_max_steps_and_empty_split():
    data = small_dataset()
    _, curves = M.train(data, M.TrainConfig(nn.SgdConfig(batch_size=2, epochs=5)), SMALL, max_steps=4)
    assert len(curves) == 2
    empty = Dataset(data.train, data.test.subset([]))
    with pytest.raises(ValidationError):
        M.train(empty, M.TrainConfig(), SMALL)


def test_train_multitask_runs():
    shots = small_shots(8, categories=True)
    t = preprocess_shots(shots, VisualConfig(side=16), SpectrogramConfig(output_side=16))
    assert np.all((t.categories >= 0) == (t.labels == 1))
    data = Dataset(t.subset(range(6)), t.subset(range(6, 8)))
    tcfg = M.TrainConfig(nn.SgdConfig(batch_size=4, epochs=1), lambda1=0.5, lambda2=1e-4)
    _, curves = M.train(data, tcfg, SMALL_CAT)
    assert np.isfinite(curves[0].train_loss)


def test_multitask_skips_rows_without_category():
    params = M.init_params(SMALL_CAT, Rng(4))
    v, a = inputs(SMALL_CAT, 4)
    det, cat, cache = M.forward(params, SMALL_CAT, v, a)
    dt = M.one_hot([1, 0, 1, 0], 2)
    ct = np.zeros((4, 4))
    ct[[0, 2], [3, 1]] = 1.0
    bare = nn.softmax_cross_entropy(det, dt)[0]
    cat_ce = nn.softmax_cross_entropy(cat[[0, 2]], ct[[0, 2]])[0]
    loss, grads = M.multitask_loss(det, cat, dt, ct, params, 0.5, 0.0, cache)
    assert loss == pytest.approx(bare + 0.5 * cat_ce, rel=1e-12)
    none = M.multitask_loss(det, cat, dt, np.zeros((4, 4)), params, 0.5, 0.0, cache)
    assert none[0] == bare
    assert not np.any(none[1]["category.weight"])


# -- prediction --------------------------------------------------------------


def test_predict_shot_probabilities():
    params = M.init_params(SMALL_CAT, Rng(6))
    for name in params:
        params[name] = params[name] + 0.05 * rng_normal(Rng(7), params[name].shape)
    shot = small_shots(1)[0]
    p1 = M.predict_shot(params, SMALL_CAT, shot)
    p2 = M.predict_shot(params, SMALL_CAT, shot)
    assert 0.0 <= p1.p_commercial <= 1.0
    assert abs(p1.category_probs.sum() - 1.0) < 1e-9
    assert p1.p_commercial == p2.p_commercial
    assert np.array_equal(p1.category_probs, p2.category_probs)
    assert p1.label.tolist() == [0.0, 1.0]
    assert p1.is_commercial == (p1.p_commercial >= 0.5)


# -- model files -------------------------------------------------------------


def test_save_load_save_identical(tmp_path):
    params = M.init_params(SMALL_CAT, Rng(8))
    M.save_params(params, tmp_path / "m1")
    loaded = M.load_params(tmp_path / "m1", SMALL_CAT)
    M.save_params(loaded, tmp_path / "m2")
    raw = (tmp_path / "m1").read_bytes()
    assert raw == (tmp_path / "m2").read_bytes()
    assert raw[:8] == b"ADNET001"
    name = b"visual.conv1.weight"
    assert raw[8:12] == len(name).to_bytes(4, "little") and raw[12 : 12 + len(name)] == name
    assert raw[12 + len(name) : 16 + len(name)] == (4).to_bytes(4, "little")


def test_f32_truncation_matches_file(tmp_path):
    params = M.init_params(SMALL, Rng(9))
    M.save_params(params, tmp_path / "m")
    v, a = inputs(SMALL, 3)
    from_file = M.forward(M.load_params(tmp_path / "m"), SMALL, v, a)[0]
    in_memory = M.forward(M.truncate_f32(params), SMALL, v, a)[0]
    assert np.array_equal(from_file, in_memory)


def test_load_errors(tmp_path):
    params = M.init_params(SMALL, Rng(0))
    path = tmp_path / "m"
    M.save_params(params, path)
    raw = path.read_bytes()
    (tmp_path / "magic").write_bytes(b"ADNET002" + raw[8:])
    with pytest.raises(FormatError, match="magic"):
        M.load_params(tmp_path / "magic")
    (tmp_path / "short").write_bytes(raw[:-3])
    with pytest.raises(FormatError, match="detect.bias"):
        M.load_params(tmp_path / "short")
    with pytest.raises(FormatError, match="visual.conv2.weight"):
        M.load_params(path, M.AdNetConfig(input_side=16, filters=(2, 5, 4), branch_fc=8, fusion_fc=4))
    with pytest.raises(FormatError):
        M.load_params(tmp_path / "missing")
