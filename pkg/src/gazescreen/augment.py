"""Nine-filter augmentation bank with explicit, toolkit-independent semantics.

Every op works on (H, W, 4) uint8 RGBA and leaves alpha untouched, except
Canny, which returns an opaque white-on-black edge map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from gazescreen import _kernels
from gazescreen.errors import InvalidParameter
from gazescreen.render import check_image, load_png, save_png

KINDS = ("negate", "canny", "posterize", "paint", "gamma", "modulate")
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentOp:
    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown augmentation {self.kind!r}")
        p = self.param
        if self.kind == "negate":
            if p is not None:
                raise InvalidParameter("negate takes no parameter")
            return
        if p is None or not math.isfinite(p):
            raise InvalidParameter(f"{self.kind} needs a finite parameter")
        if self.kind == "posterize" and (p != int(p) or p < 2):
            raise InvalidParameter("posterize levels must be an integer >= 2")
        if self.kind == "paint" and (p != int(p) or p < 1):
            raise InvalidParameter("paint radius must be an integer >= 1")
        if self.kind in ("gamma", "modulate", "canny") and p <= 0:
            raise InvalidParameter(f"{self.kind} parameter must be > 0")

    @property
    def name(self) -> str:
        if self.param is None:
            return self.kind
        p = int(self.param) if self.param == int(self.param) else self.param
        return f"{self.kind}{p}"

    @classmethod
    def parse(cls, text: str) -> "AugmentOp":
        """Parse ``"posterize 4"``, ``"posterize4"`` or ``"negate"``."""
        t = text.strip().lower().replace(" ", "")
        for kind in KINDS:
            if t.startswith(kind):
                rest = t[len(kind):]
                return cls(kind, float(rest) if rest else None)
        raise InvalidParameter(f"cannot parse augmentation {text!r}")


BANK = tuple(
    AugmentOp.parse(s)
    for s in ("negate", "canny 10", "posterize 2", "posterize 4", "paint 1", "paint 3", "gamma 100", "modulate 140", "modulate 160")
)


def _round(a: np.ndarray) -> np.ndarray:
    """Round half up, then clamp to the 8-bit range."""
    return np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)


def _with_rgb(img: np.ndarray, rgb: np.ndarray) -> np.ndarray:
    out = img.copy()
    out[..., :3] = rgb
    return out


def negate(img: np.ndarray) -> np.ndarray:
    return _with_rgb(img, 255 - img[..., :3])


def posterize(img: np.ndarray, levels: int) -> np.ndarray:
    n1 = levels - 1
    c = img[..., :3].astype(np.float64)
    return _with_rgb(img, _round(np.floor(c * n1 / 255.0 + 0.5) * 255.0 / n1))


def gamma(img: np.ndarray, g: float) -> np.ndarray:
    lut = _round(255.0 * (np.arange(256) / 255.0) ** (1.0 / g))
    return _with_rgb(img, lut[img[..., :3]])


def rgb_to_hsl(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = np.moveaxis(rgb, -1, 0)
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    d = mx - mn
    light = (mx + mn) / 2.0
    denom = 1.0 - np.abs(2.0 * light - 1.0)
    sat = np.divide(d, denom, out=np.zeros_like(d), where=(d > 0) & (denom > 0))
    safe = np.where(d > 0, d, 1.0)
    hue = np.select(
        [d == 0, mx == r, mx == g],
        [0.0, ((g - b) / safe) % 6.0, (b - r) / safe + 2.0],
        (r - g) / safe + 4.0,
    )
    return hue * 60.0, sat, light


def hsl_to_rgb(hue: np.ndarray, sat: np.ndarray, light: np.ndarray) -> np.ndarray:
    c = (1.0 - np.abs(2.0 * light - 1.0)) * sat
    hp = hue / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    z = np.zeros_like(c)
    sector = np.floor(hp).astype(np.int64) % 6
    r = np.choose(sector, [c, x, z, z, x, c])
    g = np.choose(sector, [x, c, c, x, z, z])
    b = np.choose(sector, [z, z, x, c, c, x])
    m = light - c / 2.0
    return np.stack([r + m, g + m, b + m], axis=-1)


def modulate(img: np.ndarray, brightness_pct: float) -> np.ndarray:
    """Scale HSL lightness by ``brightness_pct / 100``; hue and saturation kept."""
    h, s, l = rgb_to_hsl(img[..., :3].astype(np.float64) / 255.0)
    l = np.clip(l * brightness_pct / 100.0, 0.0, 1.0)
    return _with_rgb(img, _round(hsl_to_rgb(h, s, l) * 255.0))


def paint(img: np.ndarray, radius: int) -> np.ndarray:
    """Modal colour of each (2r+1)^2 neighbourhood; ties go to the lowest packed RGB."""
    rgb = img[..., :3].astype(np.uint32)
    packed = np.ascontiguousarray((rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2])
    m = _kernels.mode_filter(packed, int(radius))
    out = np.stack([(m >> 16) & 255, (m >> 8) & 255, m & 255], axis=-1).astype(np.uint8)
    return _with_rgb(img, out)


def _convolve_sep(a: np.ndarray, k_rows: np.ndarray, k_cols: np.ndarray) -> np.ndarray:
    """Separable correlation with edge clamping."""
    rr, rc = len(k_rows) // 2, len(k_cols) // 2
    p = np.pad(a, ((rr, rr), (0, 0)), mode="edge")
    tmp = sum(k_rows[i] * p[i : i + a.shape[0]] for i in range(len(k_rows)))
    p = np.pad(tmp, ((0, 0), (rc, rc)), mode="edge")
    return sum(k_cols[j] * p[:, j : j + a.shape[1]] for j in range(len(k_cols)))


def gaussian_kernel(sigma: float = 1.0) -> np.ndarray:
    r = int(math.ceil(3 * sigma))
    k = np.exp(-(np.arange(-r, r + 1) ** 2) / (2 * sigma * sigma))
    return k / k.sum()


def canny_edges(img: np.ndarray, threshold_pct: float, sigma: float = 1.0) -> np.ndarray:
    """Boolean edge map: luma, Gaussian blur, Sobel, NMS, hysteresis at (t%, 3t%) of max magnitude."""
    gray = img[..., :3].astype(np.float64) @ LUMA
    g = gaussian_kernel(sigma)
    blurred = _convolve_sep(gray, g, g)
    gx = _convolve_sep(blurred, np.array([1.0, 2.0, 1.0]), np.array([-1.0, 0.0, 1.0]))
    gy = _convolve_sep(blurred, np.array([-1.0, 0.0, 1.0]), np.array([1.0, 2.0, 1.0]))
    mag = np.hypot(gx, gy)
    peak = float(mag.max())
    nms = _kernels.canny_nms(np.ascontiguousarray(mag), np.ascontiguousarray(gx), np.ascontiguousarray(gy))
    return _kernels.hysteresis(nms, peak * threshold_pct / 100.0, peak * 3.0 * threshold_pct / 100.0)


def canny(img: np.ndarray, threshold_pct: float) -> np.ndarray:
    edges = canny_edges(img, threshold_pct)
    out = np.zeros(img.shape, dtype=np.uint8)
    out[edges, :3] = 255
    out[..., 3] = 255
    return out


def apply(op: AugmentOp, img: np.ndarray) -> np.ndarray:
    check_image(img)
    if op.kind == "negate":
        return negate(img)
    if op.kind == "posterize":
        return posterize(img, int(op.param))
    if op.kind == "gamma":
        return gamma(img, op.param)
    if op.kind == "modulate":
        return modulate(img, op.param)
    if op.kind == "paint":
        return paint(img, int(op.param))
    return canny(img, op.param)


def augment_all(img: np.ndarray) -> list[np.ndarray]:
    """The nine bank variants, in bank order."""
    return [apply(op, img) for op in BANK]


def augment_dir(src: str | Path, dst: str | Path) -> list[Path]:
    """Write ``<stem>__<opname>.png`` for every PNG in ``src`` (sources are not copied)."""
    src, dst = Path(src), Path(dst)
    written = []
    for path in sorted(src.glob("*.png")):
        img = load_png(path)
        for op, out in zip(BANK, augment_all(img)):
            written.append(save_png(out, dst / f"{path.stem}__{op.name}.png"))
    return written
