"""Synthetic free-viewing gaze over a 2x2 emotional-face slide.

Presets encode the qualitative bias directions reported in the eye-tracking
literature on depression and social anxiety. Every magnitude here is
synthetic; nothing produced by this module is clinical data.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from gazescreen.errors import InvalidProfile
from gazescreen.gaze_io import GazeRecording, GroupLabel

EMOTIONS = ("neutral", "sad", "angry", "happy")
CANVAS = (1680, 1050)
AOI_SIZE = (700, 420)
TARGET_SCATTER_PX = 40.0
DWELL_CLAMP_MS = (90.0, 1100.0)


@dataclass(frozen=True)
class AOI:
    emotion: str
    x0: float
    y0: float
    width: float
    height: float

    @property
    def center(self) -> tuple[float, float]:
        return (self.x0 + self.width / 2.0, self.y0 + self.height / 2.0)

    def contains(self, x, y):
        return (x >= self.x0) & (x < self.x0 + self.width) & (y >= self.y0) & (y < self.y0 + self.height)


@dataclass(frozen=True)
class SlideLayout:
    canvas: tuple[int, int]
    aois: tuple[AOI, ...]

    def aoi(self, emotion: str) -> AOI:
        for a in self.aois:
            if a.emotion == emotion:
                return a
        raise KeyError(emotion)

    def validate(self) -> None:
        w, h = self.canvas
        if sorted(a.emotion for a in self.aois) != sorted(EMOTIONS):
            raise InvalidProfile("layout must carry each emotion exactly once")
        for a in self.aois:
            if a.x0 < 0 or a.y0 < 0 or a.x0 + a.width > w or a.y0 + a.height > h:
                raise InvalidProfile(f"AOI {a.emotion} leaves the canvas")
        for i, a in enumerate(self.aois):
            for b in self.aois[i + 1 :]:
                if a.x0 < b.x0 + b.width and b.x0 < a.x0 + a.width and a.y0 < b.y0 + b.height and b.y0 < a.y0 + a.height:
                    raise InvalidProfile(f"AOIs {a.emotion} and {b.emotion} overlap")


def default_layout(seed: int | None = None) -> SlideLayout:
    """Four 700x420 AOIs centred in the quadrants of the 1680x1050 canvas.

    Fixed assignment, reading order: neutral, sad / angry, happy. A seed
    permutes the emotion tags over the same rectangles.
    """
    w, h = CANVAS
    aw, ah = AOI_SIZE
    tags = list(EMOTIONS)
    if seed is not None:
        tags = [tags[i] for i in np.random.default_rng(seed).permutation(4)]
    aois = []
    for q, tag in enumerate(tags):
        cx = (q % 2) * (w // 2) + (w // 2) / 2.0
        cy = (q // 2) * (h / 2.0) + (h / 2.0) / 2.0
        aois.append(AOI(tag, float(math.floor(cx - aw / 2)), float(math.floor(cy - ah / 2)), float(aw), float(ah)))
    layout = SlideLayout(CANVAS, tuple(aois))
    layout.validate()
    return layout


@dataclass(frozen=True)
class BiasProfile:
    name: str
    dwell_weights: dict[str, float]
    fixation_mean_ms: dict[str, float] = field(default_factory=lambda: {e: 300.0 for e in EMOTIONS})
    fixation_sd_ms: dict[str, float] = field(default_factory=lambda: {e: 100.0 for e in EMOTIONS})
    sad_disengage_bonus_ms: float = 0.0
    hyperscan_rate: float = 1.0
    jitter_px: float = 2.0
    transition_ms: float = 30.0
    group: GroupLabel | None = None

    def validate(self) -> None:
        for key in ("dwell_weights", "fixation_mean_ms", "fixation_sd_ms"):
            d = getattr(self, key)
            if set(d) != set(EMOTIONS):
                raise InvalidProfile(f"{self.name}: {key} must cover {EMOTIONS}")
            if any(not math.isfinite(v) or v < 0 for v in d.values()):
                raise InvalidProfile(f"{self.name}: {key} entries must be finite and non-negative")
        if sum(self.dwell_weights.values()) <= 0:
            raise InvalidProfile(f"{self.name}: dwell weights sum to zero")
        if self.hyperscan_rate < 1.0:
            raise InvalidProfile(f"{self.name}: hyperscan_rate must be >= 1")
        if self.sad_disengage_bonus_ms < 0 or self.jitter_px < 0 or self.transition_ms < 0:
            raise InvalidProfile(f"{self.name}: bonus, jitter and transition must be non-negative")

    def selection_probabilities(self) -> dict[str, float]:
        total = sum(self.dwell_weights.values())
        return {e: self.dwell_weights[e] / total for e in EMOTIONS}

    def refixation_probability(self) -> float:
        """Chance that the next fixation stays in the current AOI (hyperscanning)."""
        return 1.0 - 1.0 / self.hyperscan_rate

    def to_json(self) -> dict:
        d = asdict(self)
        d["group"] = self.group.value if self.group else None
        return d

    @classmethod
    def from_json(cls, d: dict) -> "BiasProfile":
        d = dict(d)
        if d.get("group") is not None:
            d["group"] = GroupLabel.parse(d["group"])
        elif d.get("name") in {g.value for g in GroupLabel}:
            d["group"] = GroupLabel.parse(d["name"])
        try:
            prof = cls(**d)
        except TypeError as exc:
            raise InvalidProfile(str(exc)) from exc
        prof.validate()
        return prof


def preset_profiles() -> dict[str, BiasProfile]:
    return {
        "control": BiasProfile(
            "control",
            {"happy": 1.4, "neutral": 1.0, "sad": 0.8, "angry": 0.8},
            group=GroupLabel.CONTROL,
        ),
        "depressive": BiasProfile(
            "depressive",
            {"happy": 0.7, "neutral": 1.0, "sad": 1.8, "angry": 1.2},
            sad_disengage_bonus_ms=150.0,
            group=GroupLabel.DEPRESSIVE,
        ),
        "anxious": BiasProfile(
            "anxious",
            {"happy": 0.9, "neutral": 1.0, "sad": 1.0, "angry": 1.6},
            hyperscan_rate=1.6,
            group=GroupLabel.ANXIOUS,
        ),
    }


def load_profile(spec: str | Path) -> BiasProfile:
    """Preset name or path to a JSON profile (fields of ``BiasProfile``)."""
    presets = preset_profiles()
    if str(spec) in presets:
        return presets[str(spec)]
    path = Path(spec)
    if not path.exists():
        raise InvalidProfile(f"no preset or profile file named {spec!r}")
    try:
        return BiasProfile.from_json(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise InvalidProfile(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Episode:
    """Ground truth for one injected fixation."""

    start_ms: float
    end_ms: float
    emotion: str
    target_x: float
    target_y: float


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def simulate_with_truth(
    profile: BiasProfile,
    layout: SlideLayout | None = None,
    duration_ms: float = 10000.0,
    rate_hz: float = 120.0,
    seed=0,
    participant_id: str | None = None,
) -> tuple[GazeRecording, list[Episode]]:
    """Like ``simulate_recording`` but also returns the injected fixation episodes."""
    layout = layout or default_layout()
    profile.validate()
    layout.validate()
    if not (duration_ms > 0 and rate_hz > 0):
        raise InvalidProfile("duration and rate must be positive")
    rng = _as_rng(seed)
    probs = profile.selection_probabilities()
    p_vec = np.array([probs[e] for e in EMOTIONS])
    p_refix = profile.refixation_probability()

    # episode timeline: fixation, transition, fixation, ...
    episodes: list[Episode] = []
    t = 0.0
    emotion = None
    while t < duration_ms:
        if emotion is None or rng.random() >= p_refix:
            emotion = EMOTIONS[rng.choice(4, p=p_vec)]
        aoi = layout.aoi(emotion)
        cx, cy = aoi.center
        tx = float(np.clip(cx + rng.normal(0.0, TARGET_SCATTER_PX), aoi.x0, aoi.x0 + aoi.width - 1))
        ty = float(np.clip(cy + rng.normal(0.0, TARGET_SCATTER_PX), aoi.y0, aoi.y0 + aoi.height - 1))
        dwell = rng.normal(profile.fixation_mean_ms[emotion], profile.fixation_sd_ms[emotion])
        dwell = float(np.clip(dwell, *DWELL_CLAMP_MS))
        if emotion == "sad":
            dwell += profile.sad_disengage_bonus_ms
        dwell /= profile.hyperscan_rate
        start = t if not episodes else t + profile.transition_ms
        episodes.append(Episode(start, start + dwell, emotion, tx, ty))
        t = start + dwell

    n = int(round(duration_ms * rate_hz / 1000.0))
    t_ms = np.round(np.arange(n) * (1000.0 / rate_hz)).astype(np.int64)
    gx = np.empty(n)
    gy = np.empty(n)
    starts = np.array([e.start_ms for e in episodes])
    ends = np.array([e.end_ms for e in episodes])
    tx = np.array([e.target_x for e in episodes])
    ty = np.array([e.target_y for e in episodes])
    i = np.searchsorted(starts, t_ms, side="right") - 1
    nxt = np.minimum(i + 1, len(episodes) - 1)
    flying = (t_ms > ends[i]) & (nxt > i)
    gap = np.maximum(starts[nxt] - ends[i], 1e-9)
    a = np.where(flying, (t_ms - ends[i]) / gap, 0.0)
    gx = tx[i] + a * (tx[nxt] - tx[i])
    gy = ty[i] + a * (ty[nxt] - ty[i])
    gx += rng.normal(0.0, profile.jitter_px, n)
    gy += rng.normal(0.0, profile.jitter_px, n)
    w, h = layout.canvas
    gx = np.round(np.clip(gx, 0.0, w - 1), 2)
    gy = np.round(np.clip(gy, 0.0, h - 1), 2)

    rec = GazeRecording(
        participant_id=participant_id or profile.name,
        group=profile.group,
        t_ms=t_ms,
        x_px=gx,
        y_px=gy,
        valid=np.ones(n, dtype=bool),
        rate_hz=float(rate_hz),
    )
    return rec, [e for e in episodes if e.start_ms < duration_ms]


def simulate_recording(
    profile: BiasProfile,
    layout: SlideLayout | None = None,
    duration_ms: float = 10000.0,
    rate_hz: float = 120.0,
    seed=0,
    participant_id: str | None = None,
) -> GazeRecording:
    return simulate_with_truth(profile, layout, duration_ms, rate_hz, seed, participant_id)[0]


def cohort_seeds(profile_name: str, n: int, seed: int) -> list[np.random.SeedSequence]:
    # mixing in the profile name keeps same-seed cohorts of different presets independent
    root = np.random.SeedSequence([int(seed), zlib.crc32(profile_name.encode())])
    return root.spawn(n)


def simulate_cohort(
    profile: BiasProfile,
    n: int,
    seed: int,
    layout: SlideLayout | None = None,
    duration_ms: float = 10000.0,
    rate_hz: float = 120.0,
) -> list[GazeRecording]:
    if n < 1:
        raise InvalidProfile("cohort size must be at least 1")
    return [
        simulate_recording(profile, layout, duration_ms, rate_hz, np.random.default_rng(ss), f"{profile.name}-{k:03d}")
        for k, ss in enumerate(cohort_seeds(profile.name, n, seed))
    ]


def with_overrides(profile: BiasProfile, **overrides) -> BiasProfile:
    prof = replace(profile, **overrides)
    prof.validate()
    return prof
