from __future__ import annotations

import json

import numpy as np
import pytest

from gazescreen.dataset import DatasetManifest, ManifestEntry, build_manifest, split, subset
from gazescreen.errors import ClassTooSmall, DuplicateImageId, EmptyResult, InvalidParameter, UnlabeledImage, ValidationError
from gazescreen.gaze_io import GroupLabel
from gazescreen.render import save_png


def manifest(counts: dict[str, int], ops=()) -> DatasetManifest:
    entries = []
    for group, n in counts.items():
        for k in range(n):
            pid = f"{group}-{k:03d}"
            base = f"{pid}__overlay"
            entries.append(ManifestEntry(base, base + ".png", pid, group, base))
            for op in ops:
                entries.append(ManifestEntry(f"{base}__{op}", f"{base}__{op}.png", pid, group, base, op))
    return DatasetManifest(tuple(entries), {"tag": "synthetic"})


def _counts(m):
    return {g.value: n for g, n in m.class_counts.items() if n}


def test_sixty_split_48_12():
    m = manifest({"anxious": 20, "control": 20, "depressive": 20})
    tr, te = split(m, 0.8, seed=3)
    assert (len(tr), len(te)) == (48, 12)
    assert _counts(tr) == {"anxious": 16, "control": 16, "depressive": 16}
    assert _counts(te) == {"anxious": 4, "control": 4, "depressive": 4}


def test_fifty_nine_split_46_13():
    m = manifest({"anxious": 24, "control": 18, "depressive": 17})
    tr, te = split(m, 0.8, seed=11)
    assert (len(tr), len(te)) == (46, 13)
    assert _counts(tr) == {"anxious": 19, "control": 14, "depressive": 13}


def test_split_is_deterministic_and_seed_sensitive():
    m = manifest({"control": 20, "depressive": 20})
    a = split(m, 0.8, seed=5)
    b = split(m, 0.8, seed=5)
    c = split(m, 0.8, seed=6)
    assert a[0].entries == b[0].entries and a[1].entries == b[1].entries
    assert a[1].entries != c[1].entries


def test_participant_split_keeps_augmented_twins_together():
    m = manifest({"control": 10, "depressive": 10}, ops=("negate", "posterize2"))
    tr, te = split(m, 0.8, seed=0)
    assert not ({e.participant_id for e in tr.entries} & {e.participant_id for e in te.entries})
    assert len(tr) == 16 * 3 and len(te) == 4 * 3


def test_image_unit_split():
    m = manifest({"control": 10, "depressive": 10}, ops=("negate",))
    tr, te = split(m, 0.5, seed=0, unit="image")
    assert (len(tr), len(te)) == (20, 20)
    assert tr.header["unit"] == "image" and te.header["fold"] == "test"


def test_split_errors():
    with pytest.raises(ClassTooSmall):
        split(manifest({"control": 1, "depressive": 5}), 0.8, 0)
    with pytest.raises(InvalidParameter):
        split(manifest({"control": 5}), 1.0, 0)
    with pytest.raises(InvalidParameter):
        split(manifest({"control": 5}), 0.8, 0, unit="session")


def test_subset():
    m = manifest({"anxious": 3, "control": 3, "depressive": 3})
    s = subset(m, ["depressive", "control"])
    assert s.classes == (GroupLabel.CONTROL, GroupLabel.DEPRESSIVE) and len(s) == 6
    assert subset(m, ["anxious", "control", "depressive"]) is m
    with pytest.raises(EmptyResult):
        subset(manifest({"control": 3}), ["anxious"])


def test_entry_invariant():
    with pytest.raises(ValidationError):
        ManifestEntry("a__negate", "a.png", "control-1", "control", "a")  # op missing
    with pytest.raises(ValidationError):
        ManifestEntry("a", "a.png", "control-1", "control", "a", "negate")


def test_json_roundtrip(tmp_path):
    m = manifest({"control": 2, "depressive": 2}, ops=("paint3",))
    path = m.save(tmp_path / "m.json")
    back = DatasetManifest.load(path)
    assert back == m
    # a bare JSON array of entries is accepted too
    bare = json.dumps([e.to_json() for e in m.entries])
    assert DatasetManifest.from_json(bare).entries == m.entries


def test_build_from_names_and_sidecars(tmp_path):
    img = np.zeros((8, 8, 4), np.uint8)
    save_png(img, tmp_path / "control-000__overlay.png")
    save_png(img, tmp_path / "control-000__overlay__modulate140.png")
    save_png(img, tmp_path / "sub" / "p17__overlay.png")
    (tmp_path / "sub" / "p17__overlay.json").write_text(json.dumps({"participant_id": "p17", "group": "depressive"}))
    m = build_manifest(tmp_path, "B")
    by_id = {e.image_id: e for e in m.entries}
    aug = by_id["control-000__overlay__modulate140"]
    assert aug.augment_op == "modulate140" and aug.base_id == "control-000__overlay"
    assert by_id["p17__overlay"].group is GroupLabel.DEPRESSIVE
    assert by_id["p17__overlay"].image_path == "sub/p17__overlay.png"
    assert all(e.dataset_tag == "B" for e in m.entries)


def test_build_errors(tmp_path):
    img = np.zeros((8, 8, 4), np.uint8)
    save_png(img, tmp_path / "a" / "mystery__overlay.png")
    with pytest.raises(UnlabeledImage):
        build_manifest(tmp_path / "a")
    save_png(img, tmp_path / "b" / "x" / "control-1__overlay.png")
    save_png(img, tmp_path / "b" / "y" / "control-1__overlay.png")
    with pytest.raises(DuplicateImageId):
        build_manifest(tmp_path / "b")
    with pytest.raises(ValidationError):
        build_manifest(tmp_path / "b", "C")
