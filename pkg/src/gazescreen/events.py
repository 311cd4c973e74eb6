"""Dispersion-threshold (I-DT) fixation detection, saccades and scan paths."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from gazescreen import _kernels
from gazescreen.errors import EmptyRecording, InvalidParameter
from gazescreen.gaze_io import GazeRecording, GroupLabel
from gazescreen.geometry import DEFAULT_GEOMETRY, ViewingGeometry, degrees_to_pixels, pixels_to_degrees

OVERLONG_POLICIES = ("drop", "truncate")


@dataclass(frozen=True)
class DetectionParams:
    dispersion_threshold_deg: float = 1.0
    min_duration_ms: float = 80.0
    fixation_duration_min_ms: float = 80.0
    fixation_duration_max_ms: float = 1200.0
    max_saccade_amplitude_deg: float = 10.0
    max_gap_ms: float = 75.0
    overlong: str = "drop"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            if f.name == "overlong":
                continue
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidParameter(f"{f.name} must be a positive number, got {v!r}")
        if self.fixation_duration_min_ms > self.fixation_duration_max_ms:
            raise InvalidParameter("fixation_duration_min_ms exceeds fixation_duration_max_ms")
        if self.overlong not in OVERLONG_POLICIES:
            raise InvalidParameter(f"overlong must be one of {OVERLONG_POLICIES}, got {self.overlong!r}")

    @classmethod
    def from_config(cls, block: dict | None) -> "DetectionParams":
        block = dict(block or {})
        known = {f.name for f in fields(cls)}
        unknown = set(block) - known
        if unknown:
            raise InvalidParameter(f"unknown detection keys: {sorted(unknown)}")
        return cls(**block)

    def to_config(self) -> dict:
        return asdict(self)

    def window_samples(self, rate_hz: float) -> int:
        """Number of samples the bootstrap window must hold to span ``min_duration_ms``."""
        # guard against 80 * 120 / 1000 landing a hair above an integer
        return max(1, math.ceil(self.min_duration_ms * rate_hz / 1000.0 - 1e-9))


@dataclass(frozen=True)
class Fixation:
    start_ms: float
    end_ms: float
    centroid_x_px: float
    centroid_y_px: float
    n_samples: int

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class Saccade:
    from_fixation_index: int
    to_fixation_index: int
    amplitude_deg: float
    passes_filter: bool


@dataclass
class ScanPath:
    participant_id: str
    group: GroupLabel | None
    fixations: list[Fixation] = field(default_factory=list)
    saccades: list[Saccade] = field(default_factory=list)
    raw_polyline: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    def __post_init__(self):
        self.raw_polyline = np.asarray(self.raw_polyline, dtype=np.float64).reshape(-1, 2)


def _segments(t_valid: np.ndarray, max_gap_ms: float) -> tuple[np.ndarray, np.ndarray]:
    """Split the valid-sample stream where consecutive valid samples are too far apart."""
    n = len(t_valid)
    if n == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    cuts = np.flatnonzero(np.diff(t_valid) > max_gap_ms) + 1
    starts = np.concatenate(([0], cuts)).astype(np.int64)
    ends = np.concatenate((cuts, [n])).astype(np.int64)
    return starts, ends


def detect_fixations(
    rec: GazeRecording,
    params: DetectionParams = DetectionParams(),
    geom: ViewingGeometry = DEFAULT_GEOMETRY,
) -> list[Fixation]:
    """Salvucci-Goldberg I-DT.

    A window of ``params.window_samples(rate)`` valid samples is tested against
    the dispersion threshold (converted to pixels); an accepted window grows one
    sample at a time until the next sample would break the threshold, and
    detection resumes right after it. A rejected window slides by one sample.
    Invalid samples are skipped; a run of them is bridged when the surrounding
    valid samples are at most ``max_gap_ms`` apart, otherwise it closes the
    window. Bridged gaps count towards duration but not the centroid.
    """
    if len(rec) == 0:
        raise EmptyRecording(f"recording {rec.participant_id!r} has no samples")
    vidx = np.flatnonzero(rec.valid)
    x = np.ascontiguousarray(rec.x_px[vidx])
    y = np.ascontiguousarray(rec.y_px[vidx])
    t = rec.t_ms[vidx]
    starts, ends = _segments(t, params.max_gap_ms)
    thr = degrees_to_pixels(params.dispersion_threshold_deg, geom)
    win = params.window_samples(rec.rate_hz)
    spans = _kernels.idt_windows(x, y, starts, ends, win, thr)
    return [
        Fixation(
            start_ms=float(t[i]),
            end_ms=float(t[j - 1]),
            centroid_x_px=float(np.mean(x[i:j])),
            centroid_y_px=float(np.mean(y[i:j])),
            n_samples=int(j - i),
        )
        for i, j in spans.tolist()
    ]


def filter_durations(
    fixations: list[Fixation],
    params: DetectionParams = DetectionParams(),
    rec: GazeRecording | None = None,
) -> list[Fixation]:
    """Keep fixations whose duration lies in the analysis band.

    Under ``overlong="truncate"`` an over-long fixation is cut back to the
    longest member prefix that fits; that needs the source recording to
    recompute the centroid.
    """
    lo, hi = params.fixation_duration_min_ms, params.fixation_duration_max_ms
    kept = []
    for f in fixations:
        d = f.duration_ms
        if d > hi and params.overlong == "truncate":
            if rec is None:
                raise InvalidParameter("truncating over-long fixations needs the recording")
            f = _truncate(f, rec, hi)
            d = f.duration_ms
        if lo <= d <= hi:
            kept.append(f)
    return kept


def _truncate(f: Fixation, rec: GazeRecording, max_ms: float) -> Fixation:
    sel = rec.valid & (rec.t_ms >= f.start_ms) & (rec.t_ms <= f.start_ms + max_ms)
    t = rec.t_ms[sel]
    return Fixation(
        start_ms=float(t[0]),
        end_ms=float(t[-1]),
        centroid_x_px=float(np.mean(rec.x_px[sel])),
        centroid_y_px=float(np.mean(rec.y_px[sel])),
        n_samples=int(sel.sum()),
    )


def derive_saccades(
    fixations: list[Fixation],
    geom: ViewingGeometry = DEFAULT_GEOMETRY,
    params: DetectionParams = DetectionParams(),
) -> list[Saccade]:
    out = []
    for k in range(len(fixations) - 1):
        a, b = fixations[k], fixations[k + 1]
        dist = math.hypot(b.centroid_x_px - a.centroid_x_px, b.centroid_y_px - a.centroid_y_px)
        amp = pixels_to_degrees(dist, geom)
        out.append(Saccade(k, k + 1, amp, amp < params.max_saccade_amplitude_deg))
    return out


def build_scanpath(
    rec: GazeRecording,
    params: DetectionParams = DetectionParams(),
    geom: ViewingGeometry = DEFAULT_GEOMETRY,
) -> ScanPath:
    """Detect, band-filter, link. Saccades failing the amplitude test stay listed."""
    fixations = filter_durations(detect_fixations(rec, params, geom), params, rec)
    return ScanPath(
        participant_id=rec.participant_id,
        group=rec.group,
        fixations=fixations,
        saccades=derive_saccades(fixations, geom, params),
        raw_polyline=np.column_stack([rec.x_px[rec.valid], rec.y_px[rec.valid]]),
    )


def scanpath_length(sp: ScanPath, geom: ViewingGeometry = DEFAULT_GEOMETRY) -> float:
    """Summed amplitude (degrees) of the saccades that pass the amplitude filter."""
    return float(sum(s.amplitude_deg for s in sp.saccades if s.passes_filter))


def fixations_csv(fixations: list[Fixation]) -> str:
    lines = ["start_ms,end_ms,cx,cy,n"]
    lines += [f"{f.start_ms!r},{f.end_ms!r},{f.centroid_x_px!r},{f.centroid_y_px!r},{f.n_samples}" for f in fixations]
    return "\n".join(lines) + "\n"


def saccades_csv(saccades: list[Saccade]) -> str:
    lines = ["from,to,amplitude_deg,pass"]
    lines += [f"{s.from_fixation_index},{s.to_fixation_index},{s.amplitude_deg!r},{int(s.passes_filter)}" for s in saccades]
    return "\n".join(lines) + "\n"
