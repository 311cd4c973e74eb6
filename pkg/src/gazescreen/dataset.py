"""Labelled image manifests and stratified, leakage-safe train/test splits."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from gazescreen.augment import AugmentOp
from gazescreen.errors import (
    ClassTooSmall,
    DuplicateImageId,
    EmptyResult,
    InvalidParameter,
    UnlabeledImage,
    ValidationError,
)
from gazescreen.gaze_io import GroupLabel, canonical_order

TAGS = ("A1", "A2", "B", "synthetic")
UNITS = ("participant", "image")


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    image_path: str
    participant_id: str
    group: GroupLabel
    base_id: str
    augment_op: str | None = None
    dataset_tag: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "group", GroupLabel.parse(self.group))
        if (self.augment_op is not None) != (self.base_id != self.image_id):
            raise ValidationError(f"{self.image_id}: augment_op must be set exactly when base_id differs from the image id")

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "image_path": self.image_path,
            "participant_id": self.participant_id,
            "group": self.group.value,
            "base_id": self.base_id,
            "augment_op": self.augment_op,
            "dataset_tag": self.dataset_tag,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ManifestEntry":
        return cls(**d)


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...] = ()
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def class_counts(self) -> dict[GroupLabel, int]:
        counts = {g: 0 for g in GroupLabel}
        for e in self.entries:
            counts[e.group] += 1
        return counts

    @property
    def classes(self) -> tuple[GroupLabel, ...]:
        return canonical_order(e.group for e in self.entries)

    def resolve(self, entry: ManifestEntry, root: str | Path | None = None) -> Path:
        p = Path(entry.image_path)
        if p.is_absolute() or root is None:
            return p
        return Path(root) / p

    def to_json(self) -> str:
        body = {"header": self.header, "entries": [e.to_json() for e in self.entries]}
        return json.dumps(body, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        body = json.loads(text)
        if isinstance(body, list):
            return cls(tuple(ManifestEntry.from_json(e) for e in body))
        return cls(tuple(ManifestEntry.from_json(e) for e in body["entries"]), body.get("header", {}))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text())


def _group_from_participant(pid: str) -> GroupLabel | None:
    prefix = pid.rsplit("-", 1)[0] if "-" in pid else pid
    try:
        return GroupLabel.parse(prefix)
    except ValidationError:
        return None


def _is_op_name(token: str) -> bool:
    try:
        return AugmentOp.parse(token).name == token
    except (InvalidParameter, ValueError):
        return False


def entry_for(path: Path, root: Path, tag: str) -> ManifestEntry:
    """Label an image from its ``<stem>.json`` sidecar, else from its file name.

    Name convention: ``<participant_id>__<style>[__<opname>].png`` with
    participant ids of the form ``<group>-NNN``.
    """
    stem = path.stem
    rel = str(path.relative_to(root))
    side = path.with_suffix(".json")
    parts = stem.split("__")
    info: dict = {}
    if side.exists():
        info = json.loads(side.read_text())
    pid = info.get("participant_id", parts[0])
    op = info.get("augment_op")
    if op is None and len(parts) >= 2 and _is_op_name(parts[-1]):
        op = parts[-1]
    base = info.get("base_id", "__".join(parts[:-1]) if op is not None else stem)
    group = info.get("group")
    group = GroupLabel.parse(group) if group is not None else _group_from_participant(pid)
    if group is None:
        raise UnlabeledImage(f"{path}: no sidecar label and no group prefix in {pid!r}")
    return ManifestEntry(stem, rel, pid, group, base, op, tag)


def build_manifest(directory: str | Path, tag: str = "synthetic") -> DatasetManifest:
    if tag not in TAGS:
        raise ValidationError(f"dataset tag must be one of {TAGS}")
    root = Path(directory)
    entries, seen = [], {}
    for path in sorted(root.rglob("*.png")):
        e = entry_for(path, root, tag)
        if e.image_id in seen:
            raise DuplicateImageId(f"{e.image_id}: {seen[e.image_id]} and {path}")
        seen[e.image_id] = path
        entries.append(e)
    return DatasetManifest(tuple(entries), {"tag": tag, "root": str(root)})


def split(
    m: DatasetManifest,
    train_fraction: float = 0.8,
    seed: int = 0,
    unit: str = "participant",
) -> tuple[DatasetManifest, DatasetManifest]:
    """Stratified split: each class sends ``floor(fraction * n_units)`` units to train.

    Units are participants (all their images, augmented twins included, land
    in one fold) or single images. Units of a class are sorted, then shuffled
    with numpy's PCG64 generator seeded by ``seed``, classes in canonical order.
    """
    if not 0 < train_fraction < 1:
        raise InvalidParameter("train_fraction must lie strictly between 0 and 1")
    if unit not in UNITS:
        raise InvalidParameter(f"unit must be one of {UNITS}")
    key = (lambda e: e.participant_id) if unit == "participant" else (lambda e: e.image_id)
    rng = np.random.default_rng(seed)
    train_units: set[str] = set()
    for g in m.classes:
        units = sorted({key(e) for e in m.entries if e.group == g})
        if len(units) < 2:
            raise ClassTooSmall(f"class {g.value} has {len(units)} {unit} unit(s); need at least 2")
        k = math.floor(train_fraction * len(units) + 1e-9)
        perm = rng.permutation(len(units))
        train_units.update(units[i] for i in perm[:k])
    header = dict(m.header, seed=int(seed), fraction=float(train_fraction), unit=unit)
    train = tuple(e for e in m.entries if key(e) in train_units)
    test = tuple(e for e in m.entries if key(e) not in train_units)
    return DatasetManifest(train, dict(header, fold="train")), DatasetManifest(test, dict(header, fold="test"))


def subset(m: DatasetManifest, classes) -> DatasetManifest:
    keep = set(canonical_order(classes))
    if not keep:
        raise EmptyResult("subset needs at least one class")
    if keep >= set(m.classes) and m.entries:
        return m
    entries = tuple(e for e in m.entries if e.group in keep)
    if not entries:
        raise EmptyResult(f"no entries for classes {sorted(g.value for g in keep)}")
    return DatasetManifest(entries, dict(m.header, classes=[g.value for g in canonical_order(keep)]))


def with_root(m: DatasetManifest, root: str | Path) -> DatasetManifest:
    return replace(m, header=dict(m.header, root=str(root)))
