"""Confusion matrices, accuracy and one-line result rows."""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from gazescreen.dataset import DatasetManifest
from gazescreen.errors import EmptyMatrix, EmptyTestSet, ValidationError
from gazescreen.gaze_io import GroupLabel, canonical_order


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted, both in canonical order."""

    classes: tuple[GroupLabel, ...]
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(GroupLabel.parse(c) for c in self.classes))
        counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.classes)
        if counts.shape != (n, n):
            raise ValidationError(f"counts must be {n}x{n}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValidationError("negative count")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(cls, classes, true_idx, pred_idx) -> "ConfusionMatrix":
        n = len(classes)
        counts = np.zeros((n, n), dtype=np.int64)
        np.add.at(counts, (np.asarray(true_idx, dtype=np.int64), np.asarray(pred_idx, dtype=np.int64)), 1)
        return cls(tuple(classes), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and np.array_equal(self.counts, other.counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyMatrix("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def format_accuracy(acc: float) -> str:
    return f"{100.0 * acc:.1f}%"


def argmax_lowest(probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax; exact ties resolve to the lower class index."""
    return np.argmax(np.atleast_2d(probs), axis=1)


def evaluate(model, test_manifest: DatasetManifest, root=None) -> ConfusionMatrix:
    from gazescreen.model import load_manifest_images, predict_inputs

    if len(test_manifest) == 0:
        raise EmptyTestSet("test manifest is empty")
    x, y = load_manifest_images(test_manifest, model.config, root)
    pred = argmax_lowest(predict_inputs(model, x))
    return ConfusionMatrix.from_labels(model.classes, y, pred)


def class_letters(classes) -> str:
    return ", ".join(g.letter for g in canonical_order(classes))


def table_row(depth: int, tag: str, classes, acc: float) -> str:
    """``ResNet-18,(Dataset B) C, D,85.7%``"""
    return f"ResNet-{depth},(Dataset {tag}) {class_letters(classes)},{format_accuracy(acc)}"


def matrix_csv(cm: ConfusionMatrix) -> str:
    names = [g.value for g in cm.classes]
    lines = ["true\\pred," + ",".join(names)]
    for name, row in zip(names, cm.counts.tolist()):
        lines.append(name + "," + ",".join(str(v) for v in row))
    lines.append(f"# accuracy,{accuracy(cm)!r}" if cm.total else "# accuracy,nan")
    return "\n".join(lines) + "\n"


def heatmap_png(cm: ConfusionMatrix, cell: int = 64) -> bytes:
    """Deterministic grayscale heatmap, row-normalised, counts printed in each cell."""
    n = len(cm.classes)
    margin = 24
    img = Image.new("RGB", (margin + n * cell, margin + n * cell), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    rows = cm.counts.sum(axis=1, keepdims=True)
    frac = np.divide(cm.counts, rows, out=np.zeros(cm.counts.shape), where=rows > 0)
    for i, g in enumerate(cm.classes):
        draw.text((margin + i * cell + cell // 2 - 3, 6), g.letter, fill=(0, 0, 0), font=font)
        draw.text((6, margin + i * cell + cell // 2 - 6), g.letter, fill=(0, 0, 0), font=font)
        for j in range(n):
            shade = int(round(255 * (1.0 - frac[i, j])))
            x0, y0 = margin + j * cell, margin + i * cell
            draw.rectangle([x0, y0, x0 + cell - 1, y0 + cell - 1], fill=(shade, shade, 255), outline=(0, 0, 0))
            ink = (255, 255, 255) if shade < 128 else (0, 0, 0)
            draw.text((x0 + cell // 2 - 6, y0 + cell // 2 - 6), str(int(cm.counts[i, j])), fill=ink, font=font)
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def report(cm: ConfusionMatrix, run_metadata: dict, out_dir: str | Path | None = None, heatmap: bool = False) -> dict:
    """Text row, matrix CSV and optional heatmap; written to ``out_dir`` when given."""
    row = table_row(run_metadata.get("depth", 18), run_metadata.get("tag", "synthetic"), cm.classes, accuracy(cm))
    text = "Architecture,Classes,Accuracy\n" + row + "\n"
    out = {"text": text, "row": row, "csv": matrix_csv(cm)}
    if heatmap:
        out["png"] = heatmap_png(cm)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.txt").write_text(text)
        (d / "confusion.csv").write_text(out["csv"])
        if heatmap:
            (d / "confusion.png").write_bytes(out["png"])
    return out
