"""Pixel <-> visual-angle conversion and I-DT point-set dispersion."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gazescreen.errors import EmptyPointSet, InvalidGeometry


@dataclass(frozen=True)
class ViewingGeometry:
    """Screen and viewer placement.

    Physical panel size defaults to a 22-inch 16:10 display (0.282 mm pixel
    pitch) at 1680x1050, viewed from 60 cm.
    """

    screen_width_px: int = 1680
    screen_height_px: int = 1050
    screen_width_mm: float = 473.76
    screen_height_mm: float = 296.1
    viewing_distance_mm: float = 600.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        vals = (
            self.screen_width_px,
            self.screen_height_px,
            self.screen_width_mm,
            self.screen_height_mm,
            self.viewing_distance_mm,
        )
        if not all(isinstance(v, (int, float)) and math.isfinite(v) and v > 0 for v in vals):
            raise InvalidGeometry(f"all geometry fields must be positive, got {vals}")
        pw = self.screen_width_mm / self.screen_width_px
        ph = self.screen_height_mm / self.screen_height_px
        if abs(pw - ph) > 0.02 * max(pw, ph):
            raise InvalidGeometry(f"non-square pixels: pitch {pw:.4f} mm vs {ph:.4f} mm")

    @property
    def px_pitch_mm(self) -> float:
        return self.screen_width_mm / self.screen_width_px

    @classmethod
    def from_config(cls, block: dict | None) -> "ViewingGeometry":
        """Build from a config block with keys ``screen_px``, ``screen_mm``, ``distance_mm``."""
        if not block:
            return cls()
        try:
            kw = {}
            if "screen_px" in block:
                kw["screen_width_px"], kw["screen_height_px"] = (int(v) for v in block["screen_px"])
            if "screen_mm" in block:
                kw["screen_width_mm"], kw["screen_height_mm"] = (float(v) for v in block["screen_mm"])
            if "distance_mm" in block:
                kw["viewing_distance_mm"] = float(block["distance_mm"])
        except (TypeError, ValueError) as exc:
            raise InvalidGeometry(f"bad geometry block: {block!r}") from exc
        unknown = set(block) - {"screen_px", "screen_mm", "distance_mm"}
        if unknown:
            raise InvalidGeometry(f"unknown geometry keys: {sorted(unknown)}")
        return cls(**kw)

    def to_config(self) -> dict:
        return {
            "screen_px": [self.screen_width_px, self.screen_height_px],
            "screen_mm": [self.screen_width_mm, self.screen_height_mm],
            "distance_mm": self.viewing_distance_mm,
        }


DEFAULT_GEOMETRY = ViewingGeometry()


def degrees_to_pixels(angle_deg, geom: ViewingGeometry = DEFAULT_GEOMETRY):
    """On-screen extent in pixels of a visual angle centred on the line of sight.

    Uses exact ``tan``; the small-angle approximation drifts near 10 degrees.
    Accepts scalars or arrays.
    """
    geom.validate()
    a = np.asarray(angle_deg, dtype=np.float64)
    if np.any(a < 0):
        raise ValueError("angle must be non-negative")
    px = 2.0 * geom.viewing_distance_mm * np.tan(np.radians(a) / 2.0) / geom.px_pitch_mm
    return float(px) if px.ndim == 0 else px


def pixels_to_degrees(dist_px, geom: ViewingGeometry = DEFAULT_GEOMETRY):
    geom.validate()
    d = np.asarray(dist_px, dtype=np.float64)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    deg = np.degrees(2.0 * np.arctan(d * geom.px_pitch_mm / (2.0 * geom.viewing_distance_mm)))
    return float(deg) if deg.ndim == 0 else deg


def dispersion(points) -> float:
    """Salvucci-Goldberg dispersion ``(max x - min x) + (max y - min y)``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise EmptyPointSet("dispersion of an empty point set")
    pts = pts.reshape(-1, 2)
    return float(np.ptp(pts[:, 0]) + np.ptp(pts[:, 1]))
