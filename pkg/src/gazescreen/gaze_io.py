"""Gaze-recording wire format: ``t_ms,x_px,y_px,valid`` CSV plus a JSON sidecar."""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from gazescreen.errors import EmptyRecording, MalformedHeader, NonMonotonicTimestamp, RateMismatch, ValidationError

COLUMNS = ("t_ms", "x_px", "y_px", "valid")
META_KEYS = ("cesd_score", "lsas_score", "age", "sex")


class GroupLabel(enum.Enum):
    """Diagnostic group. Definition order is the canonical class order."""

    ANXIOUS = "anxious"
    CONTROL = "control"
    DEPRESSIVE = "depressive"

    @property
    def index(self) -> int:
        return list(GroupLabel).index(self)

    @property
    def letter(self) -> str:
        return self.value[0].upper()

    @classmethod
    def parse(cls, value: "str | GroupLabel") -> "GroupLabel":
        if isinstance(value, GroupLabel):
            return value
        v = str(value).strip().lower()
        for g in cls:
            if v in (g.value, g.name.lower(), g.letter.lower()):
                return g
        raise ValidationError(f"unknown group {value!r}")

    def __lt__(self, other: "GroupLabel") -> bool:
        return self.index < other.index


def canonical_order(groups) -> tuple[GroupLabel, ...]:
    return tuple(sorted({GroupLabel.parse(g) for g in groups}, key=lambda g: g.index))


@dataclass(frozen=True)
class GazeSample:
    t_ms: int
    x_px: float
    y_px: float
    valid: bool = True


@dataclass(eq=False)
class GazeRecording:
    """One participant's sample stream, stored column-wise."""

    participant_id: str
    group: GroupLabel | None
    t_ms: np.ndarray
    x_px: np.ndarray
    y_px: np.ndarray
    valid: np.ndarray
    rate_hz: float = 120.0
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.t_ms = np.asarray(self.t_ms, dtype=np.int64)
        self.x_px = np.asarray(self.x_px, dtype=np.float64)
        self.y_px = np.asarray(self.y_px, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.group is not None:
            self.group = GroupLabel.parse(self.group)
        n = len(self.t_ms)
        if not (len(self.x_px) == len(self.y_px) == len(self.valid) == n):
            raise ValidationError("sample columns differ in length")

    @classmethod
    def from_samples(cls, participant_id, group, samples, rate_hz=120.0, meta=None) -> "GazeRecording":
        samples = list(samples)
        return cls(
            participant_id,
            group,
            [s.t_ms for s in samples],
            [s.x_px for s in samples],
            [s.y_px for s in samples],
            [s.valid for s in samples],
            rate_hz=rate_hz,
            meta=dict(meta or {}),
        )

    def __len__(self) -> int:
        return len(self.t_ms)

    @property
    def samples(self) -> list[GazeSample]:
        return list(self.iter_samples())

    def iter_samples(self) -> Iterator[GazeSample]:
        for t, x, y, v in zip(self.t_ms.tolist(), self.x_px.tolist(), self.y_px.tolist(), self.valid.tolist()):
            yield GazeSample(t, x, y, v)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GazeRecording):
            return NotImplemented
        return (
            self.participant_id == other.participant_id
            and self.group == other.group
            and float(self.rate_hz) == float(other.rate_hz)
            and self.meta == other.meta
            and np.array_equal(self.t_ms, other.t_ms)
            and np.array_equal(self.x_px, other.x_px)
            and np.array_equal(self.y_px, other.y_px)
            and np.array_equal(self.valid, other.valid)
        )

    def validate(self, screen_px: tuple[int, int] | None = None) -> None:
        """Check the recording invariants, raising on the first violation."""
        if len(self) == 0:
            raise EmptyRecording(f"recording {self.participant_id!r} has no samples")
        dt = np.diff(self.t_ms)
        bad = np.flatnonzero(dt <= 0)
        if bad.size:
            # header is line 1, sample k is on line k + 2
            raise NonMonotonicTimestamp(int(bad[0]) + 3)
        if self.t_ms[0] < 0:
            raise ValidationError("negative timestamp")
        if len(dt):
            period = 1000.0 / self.rate_hz
            med = float(np.median(dt))
            if abs(med - period) > 0.2 * period:
                raise RateMismatch(f"median interval {med:g} ms does not match {self.rate_hz:g} Hz")
        if screen_px is not None:
            w, h = screen_px
            v = self.valid
            x, y = self.x_px[v], self.y_px[v]
            if np.any((x < 0) | (x >= w) | (y < 0) | (y >= h)):
                raise ValidationError("valid sample outside the screen")

    def metadata_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "participant_id": self.participant_id,
            "group": self.group.value if self.group is not None else None,
            "rate_hz": self.rate_hz,
        }
        for k in META_KEYS:
            if k in self.meta:
                d[k] = self.meta[k]
        return d


def _parse_valid(tok: str, line: int) -> bool:
    tok = tok.strip()
    if tok == "1":
        return True
    if tok == "0":
        return False
    raise ValidationError(f"line {line}: valid must be 0 or 1, got {tok!r}")


def parse_gaze_csv(data: bytes | str, meta: dict[str, Any] | None = None) -> GazeRecording:
    """Parse a gaze CSV (and optional sidecar dict) into a validated recording.

    Invalid rows are kept with ``valid=False``; the detector decides how to
    bridge them.
    """
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    if text.startswith("﻿"):
        text = text[1:]
    rows = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(rows)]
    except StopIteration:
        raise MalformedHeader("empty input, expected header t_ms,x_px,y_px,valid") from None
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise MalformedHeader(f"missing required columns: {', '.join(missing)}")
    cols = [header.index(c) for c in COLUMNS]

    t, x, y, v = [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            ti, xi, yi, vi = (row[i] for i in cols)
            t.append(int(ti))
            x.append(float(xi))
            y.append(float(yi))
        except (IndexError, ValueError) as exc:
            raise ValidationError(f"line {lineno}: cannot parse row {row!r}") from exc
        v.append(_parse_valid(vi, lineno))
        if len(t) > 1 and t[-1] <= t[-2]:
            raise NonMonotonicTimestamp(lineno)
    if not t:
        raise EmptyRecording("gaze CSV has a header but no sample rows")

    meta = dict(meta or {})
    rec = GazeRecording(
        participant_id=str(meta.get("participant_id", "")),
        group=meta.get("group"),
        t_ms=t,
        x_px=x,
        y_px=y,
        valid=v,
        rate_hz=float(meta.get("rate_hz", 120.0)),
        meta={k: meta[k] for k in META_KEYS if k in meta},
    )
    rec.validate()
    return rec


def write_gaze_csv(rec: GazeRecording) -> bytes:
    out = io.StringIO()
    out.write(",".join(COLUMNS) + "\n")
    for t, x, y, v in zip(rec.t_ms.tolist(), rec.x_px.tolist(), rec.y_px.tolist(), rec.valid.tolist()):
        # repr() gives the shortest string that round-trips the double
        out.write(f"{t},{x!r},{y!r},{int(v)}\n")
    return out.getvalue().encode("utf-8")


def parse_meta_json(data: bytes | str) -> dict[str, Any]:
    meta = json.loads(data)
    if not isinstance(meta, dict):
        raise ValidationError("metadata sidecar must be a JSON object")
    for key in ("participant_id", "group"):
        if key not in meta:
            raise ValidationError(f"metadata sidecar lacks required key {key!r}")
    meta["group"] = GroupLabel.parse(meta["group"])
    return meta


def write_meta_json(rec: GazeRecording) -> bytes:
    return (json.dumps(rec.metadata_dict(), sort_keys=True) + "\n").encode("utf-8")


def sidecar_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def read_recording(csv_path: str | Path) -> GazeRecording:
    csv_path = Path(csv_path)
    side = sidecar_path(csv_path)
    meta = parse_meta_json(side.read_bytes()) if side.exists() else None
    return parse_gaze_csv(csv_path.read_bytes(), meta)


def save_recording(rec: GazeRecording, directory: str | Path, stem: str | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{stem or rec.participant_id}.csv"
    path.write_bytes(write_gaze_csv(rec))
    sidecar_path(path).write_bytes(write_meta_json(rec))
    return path
