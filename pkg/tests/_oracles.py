"""Slow, obviously-correct reference implementations used as test oracles.

They share no code with the package: plain Python loops over the
definitions, written from the textbook descriptions.
"""
from __future__ import annotations

import math


def visual_angle_px(deg, screen_w_px=1680, screen_w_mm=473.76, distance_mm=600.0):
    pitch = screen_w_mm / screen_w_px
    return 2.0 * distance_mm * math.tan(math.radians(deg) / 2.0) / pitch


def idt(t, x, y, valid, thr_px, min_ms=80.0, rate_hz=120.0, max_gap_ms=75.0):
    """Brute-force I-DT. Returns (start_ms, end_ms, cx, cy, n) tuples."""
    win = math.ceil(round(min_ms * rate_hz / 1000.0, 9))
    keep = [k for k in range(len(t)) if valid[k]]
    segments, cur = [], []
    for k in keep:
        if cur and t[k] - t[cur[-1]] > max_gap_ms:
            segments.append(cur)
            cur = []
        cur.append(k)
    if cur:
        segments.append(cur)

    out = []
    for seg in segments:
        i = 0
        while i + win <= len(seg):
            xs = [x[k] for k in seg[i : i + win]]
            ys = [y[k] for k in seg[i : i + win]]
            if (max(xs) - min(xs)) + (max(ys) - min(ys)) > thr_px:
                i += 1
                continue
            lo_x, hi_x, lo_y, hi_y = min(xs), max(xs), min(ys), max(ys)
            j = i + win
            while j < len(seg):
                k = seg[j]
                nx0, nx1 = min(lo_x, x[k]), max(hi_x, x[k])
                ny0, ny1 = min(lo_y, y[k]), max(hi_y, y[k])
                if (nx1 - nx0) + (ny1 - ny0) > thr_px:
                    break
                lo_x, hi_x, lo_y, hi_y = nx0, nx1, ny0, ny1
                j += 1
            members = seg[i:j]
            out.append((
                float(t[members[0]]),
                float(t[members[-1]]),
                math.fsum(x[k] for k in members) / len(members),
                math.fsum(y[k] for k in members) / len(members),
                len(members),
            ))
            i = j
    return out


def mode_filter(img_rgb, radius):
    """Per-pixel modal colour with edge clamping; ties to the lowest packed RGB."""
    h, w = len(img_rgb), len(img_rgb[0])
    out = [[None] * w for _ in range(h)]
    for r in range(h):
        for c in range(w):
            counts = {}
            for dr in range(-radius, radius + 1):
                for dc in range(-radius, radius + 1):
                    rr = min(max(r + dr, 0), h - 1)
                    cc = min(max(c + dc, 0), w - 1)
                    p = tuple(img_rgb[rr][cc])
                    counts[p] = counts.get(p, 0) + 1
            best = max(counts.values())
            out[r][c] = min((p for p, n in counts.items() if n == best), key=lambda p: (p[0] << 16) | (p[1] << 8) | p[2])
    return out


def segment_distance(px, py, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    l2 = dx * dx + dy * dy
    u = 0.0 if l2 == 0 else max(0.0, min(1.0, ((px - x0) * dx + (py - y0) * dy) / l2))
    return math.hypot(px - (x0 + u * dx), py - (y0 + u * dy))


def finite_difference(f, x, eps):
    return (f(x + eps) - f(x - eps)) / (2 * eps)
