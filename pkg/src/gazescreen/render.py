"""Rasterize scan paths into RGBA images.

Two styles: ``overlay`` (fixation discs joined by passing saccades, 224 px
default) and ``polyline`` (the raw sample trace, 448 px default). Drawing
happens at stimulus resolution in premultiplied float RGBA, then the canvas
is letterboxed onto the square output with a triangle (bilinear) filter.
"""
from __future__ import annotations

import io
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from PIL import Image

from gazescreen import _kernels
from gazescreen.errors import InvalidConfig
from gazescreen.events import ScanPath

STYLES = ("overlay", "polyline")
DEFAULT_OUTPUT = {"overlay": 224, "polyline": 448}


@dataclass(frozen=True)
class RenderConfig:
    style: str = "overlay"
    source_canvas: tuple[int, int] = (1680, 1050)
    output_size: int | None = None
    background: tuple[int, int, int] | None = None  # None = transparent
    stroke_rgba: tuple[int, int, int, int] = (220, 30, 30, 200)
    stroke_width_px: float = 4.0
    r_min: float = 4.0
    k: float = 0.02
    circle_alpha: int = 128

    def __post_init__(self):
        object.__setattr__(self, "source_canvas", tuple(int(v) for v in self.source_canvas))
        object.__setattr__(self, "stroke_rgba", tuple(int(v) for v in self.stroke_rgba))
        if self.background is not None:
            object.__setattr__(self, "background", tuple(int(v) for v in self.background))
        self.validate()

    @property
    def size(self) -> int:
        return self.output_size if self.output_size is not None else DEFAULT_OUTPUT[self.style]

    def validate(self) -> None:
        if self.style not in STYLES:
            raise InvalidConfig(f"style must be one of {STYLES}, got {self.style!r}")
        if self.size < 32:
            raise InvalidConfig("output_size must be at least 32")
        if len(self.source_canvas) != 2 or min(self.source_canvas) < 1:
            raise InvalidConfig("source_canvas must be two positive ints")
        if self.r_min <= 0 or self.k < 0 or self.stroke_width_px <= 0:
            raise InvalidConfig("need r_min > 0, k >= 0, stroke_width_px > 0")
        if len(self.stroke_rgba) != 4 or not all(0 <= v <= 255 for v in self.stroke_rgba):
            raise InvalidConfig("stroke_rgba must be four values in [0, 255]")
        if not 0 <= self.circle_alpha <= 255:
            raise InvalidConfig("circle_alpha must be in [0, 255]")
        if self.background is not None and (len(self.background) != 3 or not all(0 <= v <= 255 for v in self.background)):
            raise InvalidConfig("background must be None or an RGB triple")

    def radius(self, duration_ms: float) -> float:
        return self.r_min + self.k * duration_ms

    @classmethod
    def from_config(cls, block: dict | None) -> "RenderConfig":
        block = dict(block or {})
        unknown = set(block) - {f.name for f in fields(cls)}
        if unknown:
            raise InvalidConfig(f"unknown render keys: {sorted(unknown)}")
        try:
            return cls(**block)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc

    def to_config(self) -> dict:
        d = asdict(self)
        d["source_canvas"] = list(self.source_canvas)
        d["stroke_rgba"] = list(self.stroke_rgba)
        d["background"] = list(self.background) if self.background is not None else None
        return d


# ------------------------------------------------------------- compositing


def _blank(w: int, h: int, background) -> tuple[np.ndarray, np.ndarray]:
    premul = np.zeros((h, w, 3))
    alpha = np.zeros((h, w))
    if background is not None:
        premul[:] = np.asarray(background, dtype=np.float64) / 255.0
        alpha[:] = 1.0
    return premul, alpha


def _over(premul, alpha, rgb, a, mask, box=(slice(None), slice(None))):
    """Composite a flat colour with opacity ``a`` where ``mask`` is set."""
    cov = mask * a
    p = premul[box]
    p *= 1.0 - cov[..., None]
    p += cov[..., None] * (np.asarray(rgb, dtype=np.float64) / 255.0)
    al = alpha[box]
    al *= 1.0 - cov
    al += cov


def _disc(premul, alpha, cx, cy, r, rgb, a):
    h, w = alpha.shape
    c0, c1 = max(int(np.floor(cx - r)), 0), min(int(np.ceil(cx + r)), w - 1)
    r0, r1 = max(int(np.floor(cy - r)), 0), min(int(np.ceil(cy + r)), h - 1)
    if c0 > c1 or r0 > r1:
        return
    px = np.arange(c0, c1 + 1) + 0.5 - cx
    py = np.arange(r0, r1 + 1)[:, None] + 0.5 - cy
    mask = (px * px + py * py <= r * r).astype(np.float64)
    _over(premul, alpha, rgb, a, mask, (slice(r0, r1 + 1), slice(c0, c1 + 1)))


def _strokes(shape, segs: np.ndarray, width: float) -> np.ndarray:
    mask = np.zeros(shape, dtype=np.bool_)
    if len(segs):
        segs = np.ascontiguousarray(segs, dtype=np.float64)
        _kernels.stroke_segments(mask, segs[:, 0].copy(), segs[:, 1].copy(), segs[:, 2].copy(), segs[:, 3].copy(), width / 2.0)
    return mask


# ------------------------------------------------------------- resampling


def _filter_taps(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Triangle-filter taps mapping ``n_in`` samples onto ``n_out``.

    The filter widens with the downscale factor so thin strokes keep their
    mass. Taps outside the source clamp to the edge sample.
    """
    scale = n_out / n_in
    support = max(1.0, 1.0 / scale)
    centers = (np.arange(n_out) + 0.5) / scale - 0.5
    lo = np.floor(centers - support).astype(np.int64)
    ntaps = int(np.ceil(2 * support)) + 2
    idx = lo[:, None] + np.arange(ntaps)[None, :]
    wts = np.maximum(0.0, 1.0 - np.abs(idx - centers[:, None]) / support)
    wts /= wts.sum(axis=1, keepdims=True)
    return np.clip(idx, 0, n_in - 1), wts


def _resample_axis(a: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    idx, wts = _filter_taps(a.shape[axis], n_out)
    a = np.moveaxis(a, axis, 0)
    out = np.zeros((n_out,) + a.shape[1:])
    extra = (slice(None),) + (None,) * (a.ndim - 1)
    for k in range(idx.shape[1]):
        out += wts[:, k][extra] * a[idx[:, k]]
    return np.moveaxis(out, 0, axis)


def _fit(premul, alpha, target: int, background) -> tuple[np.ndarray, np.ndarray]:
    h, w = alpha.shape
    if (h, w) == (target, target):
        return premul, alpha
    s = target / max(w, h)
    nw, nh = max(1, round(w * s)), max(1, round(h * s))
    stack = np.concatenate([premul, alpha[..., None]], axis=2)
    if nh != h:
        stack = _resample_axis(stack, nh, 0)
    if nw != w:
        stack = _resample_axis(stack, nw, 1)
    out_p, out_a = _blank(target, target, background)
    y0, x0 = (target - nh) // 2, (target - nw) // 2
    out_p[y0 : y0 + nh, x0 : x0 + nw] = stack[..., :3]
    out_a[y0 : y0 + nh, x0 : x0 + nw] = stack[..., 3]
    return out_p, out_a


def _to_uint8(premul, alpha) -> np.ndarray:
    rgb = np.divide(premul, alpha[..., None], out=np.zeros_like(premul), where=alpha[..., None] > 0)
    out = np.empty(alpha.shape + (4,), dtype=np.uint8)
    out[..., :3] = np.clip(np.floor(rgb * 255.0 + 0.5), 0, 255)
    out[..., 3] = np.clip(np.floor(alpha * 255.0 + 0.5), 0, 255)
    return out


def _from_uint8(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    alpha = img[..., 3].astype(np.float64) / 255.0
    return img[..., :3].astype(np.float64) / 255.0 * alpha[..., None], alpha


def resize(img: np.ndarray, target: int) -> np.ndarray:
    """Letterbox an RGBA image onto a ``target`` x ``target`` square.

    Resampling is done on premultiplied colour so transparent pixels do not
    bleed black into strokes; padding is transparent.
    """
    check_image(img)
    if target < 1:
        raise InvalidConfig("resize target must be >= 1")
    if img.shape[:2] == (target, target):
        return img.copy()
    return _to_uint8(*_fit(*_from_uint8(img), target, None))


# ------------------------------------------------------------- public


def check_image(img: np.ndarray) -> None:
    if not (isinstance(img, np.ndarray) and img.dtype == np.uint8 and img.ndim == 3 and img.shape[2] == 4):
        raise InvalidConfig("expected an (H, W, 4) uint8 RGBA array")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidConfig("empty image")


def render_scanpath(sp: ScanPath, cfg: RenderConfig = RenderConfig()) -> np.ndarray:
    """Draw ``sp`` in the configured style and return an (N, N, 4) uint8 image."""
    cfg.validate()
    w, h = cfg.source_canvas
    premul, alpha = _blank(w, h, cfg.background)
    rgb, a = cfg.stroke_rgba[:3], cfg.stroke_rgba[3] / 255.0

    if cfg.style == "overlay":
        fx = np.array([[f.centroid_x_px, f.centroid_y_px] for f in sp.fixations]).reshape(-1, 2)
        segs = np.array(
            [np.r_[fx[s.from_fixation_index], fx[s.to_fixation_index]] for s in sp.saccades if s.passes_filter]
        ).reshape(-1, 4)
        _over(premul, alpha, rgb, a, _strokes((h, w), segs, cfg.stroke_width_px).astype(np.float64))
        for f in sp.fixations:
            _disc(premul, alpha, f.centroid_x_px, f.centroid_y_px, cfg.radius(f.duration_ms), rgb, cfg.circle_alpha / 255.0)
    else:
        pts = sp.raw_polyline
        segs = np.column_stack([pts[:-1], pts[1:]]) if len(pts) > 1 else np.empty((0, 4))
        if len(pts) == 1:
            segs = np.column_stack([pts, pts])
        _over(premul, alpha, rgb, a, _strokes((h, w), segs, cfg.stroke_width_px).astype(np.float64))

    return _to_uint8(*_fit(premul, alpha, cfg.size, cfg.background))


def composite(img: np.ndarray, background=(0, 0, 0)) -> np.ndarray:
    """Flatten RGBA onto an opaque background; returns (H, W, 3) float in [0, 1]."""
    premul, alpha = _from_uint8(img)
    bg = np.asarray(background, dtype=np.float64) / 255.0
    return premul + (1.0 - alpha[..., None]) * bg


def encode_png(img: np.ndarray) -> bytes:
    check_image(img)
    buf = io.BytesIO()
    Image.fromarray(img, "RGBA").save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def save_png(img: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png(img))
    return path


def load_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("RGBA"), dtype=np.uint8)


def image_filename(participant_id: str, style: str) -> str:
    return f"{participant_id}__{style}.png"
