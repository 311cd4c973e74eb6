"""Residual CNN classifiers: build, train, predict, gradient-check, serialize.

Depths 18/34/50/101/152 follow the standard residual stage plans; depth 8 is
a one-block-per-stage variant for desk-scale runs and gradient checks.
"""
from __future__ import annotations

import copy
import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from gazescreen.dataset import DatasetManifest
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
from gazescreen.gaze_io import GroupLabel, canonical_order
from gazescreen.render import composite, load_png, resize

STAGE_PLANS = {
    8: ("basic", (1, 1, 1, 1)),
    18: ("basic", (2, 2, 2, 2)),
    34: ("basic", (3, 4, 6, 3)),
    50: ("bottleneck", (3, 4, 6, 3)),
    101: ("bottleneck", (3, 4, 23, 3)),
    152: ("bottleneck", (3, 8, 36, 3)),
}
HEAD_PREFIX = "fc."
MAGIC = b"RCM\x89"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    depth: int = 18
    n_classes: int = 3
    input_size: int = 224
    width_multiplier: float = 1.0
    channels_in: int = 3
    background: tuple[int, int, int] = (0, 0, 0)
    classes: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.classes is not None:
            order = tuple(g.value for g in canonical_order(self.classes))
            object.__setattr__(self, "classes", order)
            object.__setattr__(self, "n_classes", len(order))
        object.__setattr__(self, "background", tuple(int(v) for v in self.background))
        self.validate()

    def validate(self) -> None:
        if self.depth not in STAGE_PLANS:
            raise UnsupportedDepth(f"depth {self.depth} not in {sorted(STAGE_PLANS)}")
        if self.n_classes < 2:
            raise InvalidConfig("need at least two classes")
        if self.input_size < 16:
            raise InvalidConfig("input_size must be at least 16")
        if not self.width_multiplier > 0:
            raise InvalidConfig("width_multiplier must be positive")
        if self.channels_in != 3:
            raise InvalidConfig("RGBA inputs are flattened to 3 channels")

    @property
    def class_labels(self) -> tuple[GroupLabel, ...]:
        if self.classes is None:
            return tuple(GroupLabel)[: self.n_classes]
        return tuple(GroupLabel.parse(c) for c in self.classes)

    def to_json(self) -> dict:
        d = asdict(self)
        d["background"] = list(self.background)
        d["classes"] = list(self.classes) if self.classes is not None else None
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown model keys: {sorted(unknown)}")
        if d.get("classes") is not None:
            d["classes"] = tuple(d["classes"])
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    head_only_epochs: int = 3
    seed: int = 0
    train_transforms: str = "none"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be >= 1")
        if not self.learning_rate >= 0 or self.momentum < 0 or self.weight_decay < 0 or self.head_only_epochs < 0:
            raise InvalidConfig("learning_rate, momentum, weight_decay, head_only_epochs must be non-negative")
        if self.train_transforms not in ("none", "light"):
            raise InvalidConfig("train_transforms must be 'none' or 'light'")

    @classmethod
    def from_json(cls, d: dict | None) -> "TrainConfig":
        d = dict(d or {})
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown train keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class History:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    phase: list[str] = field(default_factory=list)


# ---------------------------------------------------------------- network


def _conv(cin, cout, k, stride=1):
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, bias=False)


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, cin, width, stride=1):
        super().__init__()
        cout = width * self.expansion
        self.conv1 = _conv(cin, width, 3, stride)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = _conv(width, cout, 3)
        self.bn2 = nn.BatchNorm2d(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(_conv(cin, cout, 1, stride), nn.BatchNorm2d(cout))

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        skip = x if self.shortcut is None else self.shortcut(x)
        return F.relu(out + skip)


class Bottleneck(nn.Module):
    expansion = 4

    def __init__(self, cin, width, stride=1):
        super().__init__()
        cout = width * self.expansion
        self.conv1 = _conv(cin, width, 1)
        self.bn1 = nn.BatchNorm2d(width)
        self.conv2 = _conv(width, width, 3, stride)
        self.bn2 = nn.BatchNorm2d(width)
        self.conv3 = _conv(width, cout, 1)
        self.bn3 = nn.BatchNorm2d(cout)
        self.shortcut = None
        if stride != 1 or cin != cout:
            self.shortcut = nn.Sequential(_conv(cin, cout, 1, stride), nn.BatchNorm2d(cout))

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = F.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        skip = x if self.shortcut is None else self.shortcut(x)
        return F.relu(out + skip)


class ResidualClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        kind, plan = STAGE_PLANS[cfg.depth]
        block = BasicBlock if kind == "basic" else Bottleneck
        self.stage_plan = plan
        self.block_kind = kind
        base = max(1, round(64 * cfg.width_multiplier))
        self.stem = nn.Sequential(_conv(cfg.channels_in, base, 7, 2), nn.BatchNorm2d(base), nn.ReLU())
        stages, cin = [], base
        for i, n_blocks in enumerate(plan):
            width = base * 2**i
            blocks = []
            for b in range(n_blocks):
                blocks.append(block(cin, width, 2 if (b == 0 and i > 0) else 1))
                cin = width * block.expansion
            stages.append(nn.Sequential(*blocks))
        self.stages = nn.Sequential(*stages)
        self.fc = nn.Linear(cin, cfg.n_classes)
        self.backbone_loaded = False

    @property
    def classes(self) -> tuple[GroupLabel, ...]:
        return self.config.class_labels

    def features(self, x):
        x = self.stem(x)
        x = F.max_pool2d(x, 3, 2, 1)
        x = self.stages(x)
        return torch.flatten(F.adaptive_avg_pool2d(x, 1), 1)

    def forward(self, x):
        return self.fc(self.features(x))

    def backbone_parameters(self):
        return [p for n, p in self.named_parameters() if not n.startswith(HEAD_PREFIX)]


def init_head(model: ResidualClassifier, seed: int, zero: bool = False) -> None:
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        if zero:
            model.fc.weight.zero_()
            model.fc.bias.zero_()
            return
        bound = 1.0 / math.sqrt(model.fc.in_features)
        nn.init.uniform_(model.fc.weight, -bound, bound, generator=g)
        nn.init.uniform_(model.fc.bias, -bound, bound, generator=g)


def build_model(cfg: ModelConfig, seed: int = 0, zero_head: bool = False) -> ResidualClassifier:
    """Fresh classifier: Kaiming-uniform convolutions, unit/zero batch norm, uniform head."""
    cfg.validate()
    model = ResidualClassifier(cfg)
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_uniform_(m.weight, a=0.0, nonlinearity="relu", generator=g)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
    init_head(model, int(seed) + 1, zero=zero_head)
    return model


# ---------------------------------------------------------------- inputs


def to_input(img: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """RGBA uint8 image -> (3, S, S) float array in [0, 1] on the configured background."""
    if img.shape[:2] != (cfg.input_size, cfg.input_size):
        img = resize(img, cfg.input_size)
    return np.ascontiguousarray(composite(img, cfg.background).transpose(2, 0, 1))


def _dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def _batch(arrs, model) -> torch.Tensor:
    return torch.from_numpy(np.stack(arrs)).to(_dtype(model))


def load_manifest_images(manifest: DatasetManifest, cfg: ModelConfig, root=None) -> tuple[np.ndarray, np.ndarray]:
    """Model inputs and class indices (in ``cfg`` class order) for every entry."""
    root = root if root is not None else manifest.header.get("root")
    order = {g: i for i, g in enumerate(cfg.class_labels)}
    xs, ys = [], []
    for e in manifest.entries:
        if e.group not in order:
            raise InvalidConfig(f"{e.image_id}: class {e.group.value} not handled by this model")
        xs.append(to_input(load_png(manifest.resolve(e, root)), cfg))
        ys.append(order[e.group])
    return np.stack(xs) if xs else np.empty((0, 3, cfg.input_size, cfg.input_size)), np.array(ys, dtype=np.int64)


def _light(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random horizontal flip and integer shift of up to 4 px (zero fill)."""
    out = np.empty_like(x)
    for i in range(len(x)):
        img = x[i, :, :, ::-1] if rng.random() < 0.5 else x[i]
        dy, dx = rng.integers(-4, 5, size=2)
        shifted = np.zeros_like(img)
        h, w = img.shape[1:]
        shifted[:, max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)] = img[
            :, max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)
        ]
        out[i] = shifted
    return out


# ---------------------------------------------------------------- training


def fit(model: ResidualClassifier, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> History:
    """SGD with momentum on mean cross-entropy; deterministic for a given seed.

    When a backbone was loaded, the first ``head_only_epochs`` epochs update
    only the head with the backbone frozen (and its batch norm in eval mode),
    then everything is unfrozen.
    """
    cfg.validate()
    if len(x) == 0:
        raise EmptyTrainSet("no training images")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    hist = History()
    n_head = min(cfg.head_only_epochs, cfg.epochs) if model.backbone_loaded else 0
    opt = None
    for epoch in range(cfg.epochs):
        head_only = epoch < n_head
        if opt is None or epoch == n_head:
            params = list(model.fc.parameters()) if head_only else list(model.parameters())
            for p in model.parameters():
                p.requires_grad_(not head_only)
            for p in model.fc.parameters():
                p.requires_grad_(True)
            opt = torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
        model.train()
        if head_only:
            model.stem.eval()
            model.stages.eval()
        order = rng.permutation(len(x))
        tot_loss, correct = 0.0, 0
        for b0 in range(0, len(x), cfg.batch_size):
            idx = order[b0 : b0 + cfg.batch_size]
            xb = x[idx]
            if cfg.train_transforms == "light":
                xb = _light(xb, rng)
            xb = torch.from_numpy(np.ascontiguousarray(xb)).to(_dtype(model))
            yb = torch.from_numpy(y[idx])
            logits = model(xb)
            loss = F.cross_entropy(logits, yb)
            if not torch.isfinite(loss):
                raise DivergedLoss(epoch)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            tot_loss += loss.item() * len(idx)
            correct += int((logits.argmax(dim=1) == yb).sum())
        hist.loss.append(tot_loss / len(x))
        hist.accuracy.append(correct / len(x))
        hist.phase.append("head" if head_only else "full")
    for p in model.parameters():
        p.requires_grad_(True)
    model.eval()
    return hist


def train(model: ResidualClassifier, manifest: DatasetManifest, cfg: TrainConfig, root=None):
    if len(manifest) == 0:
        raise EmptyTrainSet("training manifest is empty")
    x, y = load_manifest_images(manifest, model.config, root)
    return model, fit(model, x, y, cfg)


# ---------------------------------------------------------------- inference


def predict_inputs(model: ResidualClassifier, x: np.ndarray) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(np.ascontiguousarray(x)).to(_dtype(model)))
        return torch.softmax(logits.double(), dim=1).numpy()


def predict(model: ResidualClassifier, img: np.ndarray) -> np.ndarray:
    """Class probabilities (canonical class order) for one RGBA image."""
    return predict_inputs(model, to_input(img, model.config)[None])[0]


# ---------------------------------------------------------------- gradient check


def grad_check(
    model: ResidualClassifier,
    img: np.ndarray,
    label: int,
    epsilon: float = 1e-4,
    n_params: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central finite differences.

    Works on a float64 copy in eval mode, so batch norm uses its running
    statistics and the loss is a plain function of the parameters. ``img``
    may be an RGBA uint8 image or an already prepared (3, S, S) array.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise InvalidConfig("epsilon must lie in [1e-6, 1e-3]")
    m = copy.deepcopy(model).double().eval()
    x = img if img.dtype != np.uint8 else to_input(img, m.config)
    xb = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float64))[None]
    yb = torch.tensor([int(label)])

    def loss_fn():
        return F.cross_entropy(m(xb), yb)

    params = [p for p in m.parameters()]
    m.zero_grad()
    loss_fn().backward()
    sizes = np.array([p.numel() for p in params])
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    rng = np.random.default_rng(seed)
    picks = rng.choice(offsets[-1], size=min(n_params, int(offsets[-1])), replace=False)
    worst = 0.0
    with torch.no_grad():
        for flat in np.sort(picks):
            t = int(np.searchsorted(offsets, flat, side="right") - 1)
            p = params[t].view(-1)
            j = int(flat - offsets[t])
            analytic = float(params[t].grad.view(-1)[j])
            orig = float(p[j])
            p[j] = orig + epsilon
            up = float(loss_fn())
            p[j] = orig - epsilon
            down = float(loss_fn())
            p[j] = orig
            numeric = (up - down) / (2 * epsilon)
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# ---------------------------------------------------------------- serialization


def _tensors(model: nn.Module) -> dict[str, torch.Tensor]:
    return {k: v.detach().cpu().contiguous() for k, v in model.state_dict().items()}


_DTYPES = {torch.float32: "<f4", torch.float64: "<f8", torch.int64: "<i8"}


def save_model(model: ResidualClassifier, path: str | Path) -> Path:
    """Write the ``.rcm`` interchange file: magic, header length, JSON header, raw blob."""
    entries, blobs, offset = [], [], 0
    for name, t in _tensors(model).items():
        dt = _DTYPES[t.dtype]
        raw = t.numpy().astype(dt, copy=False).tobytes()
        entries.append({"name": name, "shape": list(t.shape), "dtype": dt, "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": model.config.to_json(), "tensors": entries},
        sort_keys=True,
    ).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    return path


def read_weight_file(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise CorruptFile(f"{path}: bad magic bytes")
    (hlen,) = struct.unpack("<Q", data[4:12])
    try:
        header = json.loads(data[12 : 12 + hlen])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: unreadable header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {header.get('format_version')} != {FORMAT_VERSION}")
    blob = memoryview(data)[12 + hlen :]
    arrays = {}
    for e in header["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64)) * np.dtype(e["dtype"]).itemsize
        nbytes = min(int(e["nbytes"]), n)
        if e["offset"] + e["nbytes"] > len(blob):
            raise CorruptFile(f"{path}: tensor {e['name']} runs past end of file")
        raw = np.frombuffer(blob[e["offset"] : e["offset"] + nbytes], dtype=e["dtype"])
        arrays[e["name"]] = (raw, tuple(e["shape"]))
    return header, arrays


def _assign(model: nn.Module, arrays: dict, skip_head: bool) -> None:
    state = model.state_dict()
    with torch.no_grad():
        for name, t in state.items():
            if skip_head and name.startswith(HEAD_PREFIX):
                continue
            if name not in arrays:
                raise MissingTensor(f"weight file lacks tensor {name!r}")
            raw, shape = arrays[name]
            if tuple(shape) != tuple(t.shape) or raw.size != t.numel():
                got = shape if tuple(shape) != tuple(t.shape) else (raw.size,)
                raise ShapeMismatch(name, t.shape, got)
            t.copy_(torch.from_numpy(raw.reshape(shape).astype(raw.dtype.newbyteorder("="))).to(t.dtype))


def load_model(path: str | Path, expect: ModelConfig | None = None) -> ResidualClassifier:
    header, arrays = read_weight_file(path)
    cfg = ModelConfig.from_json(header["config"])
    if expect is not None and (expect.depth, expect.width_multiplier) != (cfg.depth, cfg.width_multiplier):
        raise VersionMismatch(f"{path}: file holds depth {cfg.depth}, expected depth {expect.depth}")
    model = ResidualClassifier(cfg)
    if any(raw.dtype == np.dtype("<f8") for raw, _ in arrays.values()):
        model.double()
    _assign(model, arrays, skip_head=False)
    model.eval()
    return model


def load_weights(model: ResidualClassifier, path: str | Path) -> ResidualClassifier:
    _, arrays = read_weight_file(path)
    _assign(model, arrays, skip_head=False)
    return model


def load_backbone(model: ResidualClassifier, weight_file: str | Path) -> ResidualClassifier:
    """Overwrite every non-head tensor from ``weight_file``; the head keeps its init."""
    _, arrays = read_weight_file(weight_file)
    _assign(model, arrays, skip_head=True)
    model.backbone_loaded = True
    return model
