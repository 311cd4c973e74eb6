from __future__ import annotations

import copy

import numpy as np
import pytest
import torch

from _oracles import finite_difference
from gazescreen.dataset import DatasetManifest, ManifestEntry
from gazescreen.errors import (
    CorruptFile,
    DivergedLoss,
    EmptyTrainSet,
    InvalidConfig,
    MissingTensor,
    ShapeMismatch,
    UnsupportedDepth,
    VersionMismatch,
)
from gazescreen.gaze_io import GroupLabel
from gazescreen.model import (
    MAGIC,
    ModelConfig,
    TrainConfig,
    build_model,
    fit,
    grad_check,
    load_backbone,
    load_model,
    predict,
    predict_inputs,
    save_model,
    to_input,
    train,
)
from gazescreen.render import save_png

TINY = dict(depth=8, input_size=32, width_multiplier=0.125)


def tiny(classes=("control", "depressive"), **kw) -> ModelConfig:
    return ModelConfig(**{**TINY, **kw}, classes=classes)


def toy_data(n=16, size=32, seed=0):
    # class 0: bright left half, class 1: bright right half
    rng = np.random.default_rng(seed)
    x = rng.random((n, 3, size, size)) * 0.2
    y = np.arange(n) % 2
    x[y == 0, :, :, : size // 2] += 0.8
    x[y == 1, :, :, size // 2 :] += 0.8
    return x, y.astype(np.int64)


@pytest.mark.parametrize("depth,blocks", [(8, [1, 1, 1, 1]), (18, [2, 2, 2, 2]), (34, [3, 4, 6, 3]), (50, [3, 4, 6, 3])])
def test_stage_plans(depth, blocks):
    m = build_model(ModelConfig(depth=depth, input_size=32, width_multiplier=0.125, classes=("control", "depressive")))
    assert [len(s) for s in m.stages] == blocks
    out = m.eval()(torch.zeros(2, 3, 32, 32))
    assert out.shape == (2, 2)


def test_bottleneck_head_width():
    m = build_model(ModelConfig(depth=50, input_size=32, width_multiplier=0.125))
    assert m.fc.in_features == 8 * 8 * 4
    assert m.fc.out_features == 3


def test_config_validation():
    with pytest.raises(UnsupportedDepth):
        ModelConfig(depth=20)
    with pytest.raises(InvalidConfig):
        ModelConfig(input_size=8)
    with pytest.raises(InvalidConfig):
        TrainConfig(epochs=0)
    with pytest.raises(InvalidConfig):
        TrainConfig(train_transforms="heavy")
    cfg = ModelConfig(classes=["depressive", "control"])
    assert cfg.class_labels == (GroupLabel.CONTROL, GroupLabel.DEPRESSIVE) and cfg.n_classes == 2
    assert ModelConfig.from_json(cfg.to_json()) == cfg


def test_build_is_seeded():
    a = build_model(tiny(), seed=3)
    b = build_model(tiny(), seed=3)
    c = build_model(tiny(), seed=4)
    for (n, p), (_, q) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(p, q), n
    assert not torch.equal(a.fc.weight, c.fc.weight)
    z = build_model(tiny(), zero_head=True)
    assert float(z.fc.weight.detach().abs().sum()) == 0.0


def test_to_input_composites_and_resizes():
    img = np.zeros((64, 64, 4), np.uint8)
    img[..., 0] = 255
    img[..., 3] = 255
    x = to_input(img, tiny())
    assert x.shape == (3, 32, 32)
    np.testing.assert_allclose(x[0], 1.0)
    np.testing.assert_allclose(x[1:], 0.0)
    clear = np.zeros((32, 32, 4), np.uint8)
    np.testing.assert_allclose(to_input(clear, tiny(background=(255, 255, 255))), 1.0)


def test_fit_is_deterministic():
    x, y = toy_data()
    cfg = TrainConfig(epochs=3, batch_size=8, learning_rate=0.05, seed=2)
    a, b = build_model(tiny(), 1), build_model(tiny(), 1)
    ha, hb = fit(a, x, y, cfg), fit(b, x, y, cfg)
    assert ha.loss == hb.loss
    for p, q in zip(a.parameters(), b.parameters()):
        assert torch.equal(p, q)


def test_zero_learning_rate_keeps_parameters():
    x, y = toy_data()
    m = build_model(tiny(), 0)
    before = copy.deepcopy(list(m.parameters()))
    fit(m, x, y, TrainConfig(epochs=2, batch_size=16, learning_rate=0.0, weight_decay=0.0))
    for p, q in zip(before, m.parameters()):
        assert torch.equal(p, q)


def test_head_only_phase_freezes_backbone(tmp_path):
    src = build_model(tiny(), 5)
    path = save_model(src, tmp_path / "src.rcm")
    m = build_model(tiny(), 9)
    head_before = m.fc.weight.detach().clone()
    load_backbone(m, path)
    assert torch.equal(m.fc.weight, head_before)
    assert torch.equal(m.stem[0].weight, src.stem[0].weight)
    bn_mean = m.stem[1].running_mean.clone()
    x, y = toy_data()
    h = fit(m, x, y, TrainConfig(epochs=2, head_only_epochs=2, learning_rate=0.1))
    assert h.phase == ["head", "head"]
    assert torch.equal(m.stem[0].weight, src.stem[0].weight)
    assert torch.equal(m.stem[1].running_mean, bn_mean)
    assert not torch.equal(m.fc.weight, head_before)
    h = fit(m, x, y, TrainConfig(epochs=3, head_only_epochs=1, learning_rate=0.1))
    assert h.phase == ["head", "full", "full"]
    assert not torch.equal(m.stem[0].weight, src.stem[0].weight)


def test_backbone_head_may_differ(tmp_path):
    src = build_model(tiny(classes=("anxious", "control", "depressive")), 5)
    path = save_model(src, tmp_path / "three.rcm")
    m = load_backbone(build_model(tiny(), 1), path)
    assert m.fc.out_features == 2 and m.backbone_loaded


def test_learns_toy_task():
    x, y = toy_data(n=32)
    m = build_model(tiny(), 0)
    h = fit(m, x, y, TrainConfig(epochs=15, batch_size=8, learning_rate=0.05))
    assert h.accuracy[-1] == 1.0
    assert (predict_inputs(m, x).argmax(1) == y).all()


def test_diverged_loss():
    x, y = toy_data()
    x[0, 0, 0, 0] = np.nan
    with pytest.raises(DivergedLoss):
        fit(build_model(tiny()), x, y, TrainConfig(epochs=1))
    with pytest.raises(EmptyTrainSet):
        fit(build_model(tiny()), x[:0], y[:0], TrainConfig(epochs=1))


def test_train_from_manifest(tmp_path):
    x, y = toy_data(n=8)
    entries = []
    for i in range(8):
        img = np.zeros((32, 32, 4), np.uint8)
        img[..., :3] = (x[i].transpose(1, 2, 0) * 255).clip(0, 255).astype(np.uint8)
        img[..., 3] = 255
        group = "control" if y[i] == 0 else "depressive"
        save_png(img, tmp_path / f"{group}-{i}__overlay.png")
        entries.append(ManifestEntry(f"{group}-{i}__overlay", f"{group}-{i}__overlay.png", f"{group}-{i}", group, f"{group}-{i}__overlay"))
    man = DatasetManifest(tuple(entries), {"root": str(tmp_path)})
    m, hist = train(build_model(tiny()), man, TrainConfig(epochs=2, batch_size=4))
    assert len(hist.loss) == 2
    probs = predict(m, np.zeros((32, 32, 4), np.uint8))
    assert probs.shape == (2,) and probs.sum() == pytest.approx(1.0)
    with pytest.raises(EmptyTrainSet):
        train(build_model(tiny()), DatasetManifest(()), TrainConfig(epochs=1))


def test_grad_check_small():
    m = build_model(tiny(), 0)
    x, _ = toy_data(n=1)
    assert grad_check(m, x[0], 1, n_params=40) < 1e-3
    with pytest.raises(InvalidConfig):
        grad_check(m, x[0], 1, epsilon=0.1)


def test_grad_check_detects_wrong_gradient():
    # a loss whose autograd path is wrong must be caught
    m = build_model(tiny(), 0)
    x, _ = toy_data(n=1)

    class Broken(torch.autograd.Function):
        @staticmethod
        def forward(ctx, t):
            return t * 1.0

        @staticmethod
        def backward(ctx, g):
            return g * 2.0

    class BrokenHead(torch.nn.Module):
        def __init__(self, inner):
            super().__init__()
            self.inner = inner

        def forward(self, t):
            return self.inner(Broken.apply(t))

    m.fc = BrokenHead(m.fc)
    assert grad_check(m, x[0], 1, n_params=60) > 0.1


def test_finite_difference_oracle_agrees_with_autograd_on_scalar():
    f = lambda v: float(np.sin(v) * v**2)
    v = 0.7
    exact = np.cos(v) * v**2 + 2 * v * np.sin(v)
    assert finite_difference(f, v, 1e-5) == pytest.approx(exact, rel=1e-8)


def test_weight_file_roundtrip_bitwise(tmp_path):
    m = build_model(tiny(), 7)
    fit(m, *toy_data(), TrainConfig(epochs=1))
    path = save_model(m, tmp_path / "m.rcm")
    assert path.read_bytes()[:4] == MAGIC
    back = load_model(path)
    x, _ = toy_data(n=4)
    np.testing.assert_array_equal(predict_inputs(m, x), predict_inputs(back, x))
    for (n, p), (_, q) in zip(m.state_dict().items(), back.state_dict().items()):
        assert torch.equal(p, q), n
    assert save_model(back, tmp_path / "again.rcm").read_bytes() == path.read_bytes()


def test_double_precision_roundtrip(tmp_path):
    m = build_model(tiny(), 7).double()
    back = load_model(save_model(m, tmp_path / "d.rcm"))
    assert back.fc.weight.dtype == torch.float64
    assert torch.equal(back.fc.weight, m.fc.weight)


def test_weight_file_errors(tmp_path):
    m = build_model(tiny(), 0)
    path = save_model(m, tmp_path / "m.rcm")
    data = path.read_bytes()
    (tmp_path / "bad.rcm").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CorruptFile):
        load_model(tmp_path / "bad.rcm")
    (tmp_path / "short.rcm").write_bytes(data[:-100])
    with pytest.raises(CorruptFile):
        load_model(tmp_path / "short.rcm")
    with pytest.raises(VersionMismatch):
        load_model(path, expect=ModelConfig(depth=18))
    wide = save_model(build_model(tiny(width_multiplier=0.25)), tmp_path / "wide.rcm")
    with pytest.raises(ShapeMismatch):
        load_backbone(build_model(tiny()), wide)
    deep = save_model(build_model(tiny(depth=18)), tmp_path / "deep.rcm")
    with pytest.raises(MissingTensor):
        load_backbone(build_model(ModelConfig(depth=34, input_size=32, width_multiplier=0.125)), deep)
