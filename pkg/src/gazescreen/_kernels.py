"""Hot inner loops, each in a numba flavour and a vectorized numpy flavour.

The public names at the bottom (``idt_windows``, ``stroke_segments`` ...)
dispatch on ``GAZESCREEN_BACKEND``. Both flavours perform the same floating
point operations in the same order, so their outputs are bit-identical.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gazescreen._accel import njit, pick

# ---------------------------------------------------------------- I-DT


@njit
def idt_windows_numba(x, y, seg_start, seg_end, win, thr):
    out = np.empty((x.shape[0] + 1, 2), dtype=np.int64)
    k = 0
    for s in range(seg_start.shape[0]):
        i = seg_start[s]
        e = seg_end[s]
        while i + win <= e:
            xmin = x[i]
            xmax = x[i]
            ymin = y[i]
            ymax = y[i]
            for j in range(i + 1, i + win):
                xmin = min(xmin, x[j])
                xmax = max(xmax, x[j])
                ymin = min(ymin, y[j])
                ymax = max(ymax, y[j])
            if (xmax - xmin) + (ymax - ymin) <= thr:
                j = i + win
                while j < e:
                    nxmin = min(xmin, x[j])
                    nxmax = max(xmax, x[j])
                    nymin = min(ymin, y[j])
                    nymax = max(ymax, y[j])
                    if (nxmax - nxmin) + (nymax - nymin) > thr:
                        break
                    xmin, xmax, ymin, ymax = nxmin, nxmax, nymin, nymax
                    j += 1
                out[k, 0] = i
                out[k, 1] = j
                k += 1
                i = j
            else:
                i += 1
    return out[:k].copy()


def idt_windows_numpy(x, y, seg_start, seg_end, win, thr):
    spans = []
    for s, e in zip(seg_start.tolist(), seg_end.tolist()):
        if e - s < win:
            continue
        xs, ys = x[s:e], y[s:e]
        wx = sliding_window_view(xs, win)
        wy = sliding_window_view(ys, win)
        win_disp = (wx.max(axis=1) - wx.min(axis=1)) + (wy.max(axis=1) - wy.min(axis=1))
        ok = np.flatnonzero(win_disp <= thr)
        i = 0
        while True:
            ok = ok[ok >= i]
            if ok.size == 0:
                break
            i = int(ok[0])
            cx_max = np.maximum.accumulate(xs[i:])
            cx_min = np.minimum.accumulate(xs[i:])
            cy_max = np.maximum.accumulate(ys[i:])
            cy_min = np.minimum.accumulate(ys[i:])
            grow = (cx_max - cx_min) + (cy_max - cy_min)
            over = np.flatnonzero(grow[win:] > thr)
            j = i + win + int(over[0]) if over.size else len(xs)
            spans.append((s + i, s + j))
            i = j
    return np.array(spans, dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------- strokes


@njit
def stroke_segments_numba(mask, x0s, y0s, x1s, y1s, half_w):
    h, w = mask.shape
    r2 = half_w * half_w
    for s in range(x0s.shape[0]):
        x0 = x0s[s]
        y0 = y0s[s]
        dx = x1s[s] - x0
        dy = y1s[s] - y0
        l2 = dx * dx + dy * dy
        c_lo = max(int(np.floor(min(x0, x0 + dx) - half_w)), 0)
        c_hi = min(int(np.ceil(max(x0, x0 + dx) + half_w)), w - 1)
        r_lo = max(int(np.floor(min(y0, y0 + dy) - half_w)), 0)
        r_hi = min(int(np.ceil(max(y0, y0 + dy) + half_w)), h - 1)
        for r in range(r_lo, r_hi + 1):
            py = r + 0.5
            for c in range(c_lo, c_hi + 1):
                px = c + 0.5
                if l2 > 0.0:
                    t = ((px - x0) * dx + (py - y0) * dy) / l2
                    t = min(max(t, 0.0), 1.0)
                else:
                    t = 0.0
                ex = px - (x0 + t * dx)
                ey = py - (y0 + t * dy)
                if ex * ex + ey * ey <= r2:
                    mask[r, c] = True


def stroke_segments_numpy(mask, x0s, y0s, x1s, y1s, half_w):
    h, w = mask.shape
    r2 = half_w * half_w
    for x0, y0, x1, y1 in zip(x0s.tolist(), y0s.tolist(), x1s.tolist(), y1s.tolist()):
        dx = x1 - x0
        dy = y1 - y0
        l2 = dx * dx + dy * dy
        c_lo = max(int(np.floor(min(x0, x0 + dx) - half_w)), 0)
        c_hi = min(int(np.ceil(max(x0, x0 + dx) + half_w)), w - 1)
        r_lo = max(int(np.floor(min(y0, y0 + dy) - half_w)), 0)
        r_hi = min(int(np.ceil(max(y0, y0 + dy) + half_w)), h - 1)
        if c_lo > c_hi or r_lo > r_hi:
            continue
        px = np.arange(c_lo, c_hi + 1, dtype=np.float64)[None, :] + 0.5
        py = np.arange(r_lo, r_hi + 1, dtype=np.float64)[:, None] + 0.5
        if l2 > 0.0:
            t = np.clip(((px - x0) * dx + (py - y0) * dy) / l2, 0.0, 1.0)
        else:
            t = np.zeros((py.shape[0], px.shape[1]))
        ex = px - (x0 + t * dx)
        ey = py - (y0 + t * dy)
        mask[r_lo : r_hi + 1, c_lo : c_hi + 1] |= ex * ex + ey * ey <= r2


# ---------------------------------------------------------------- paint (mode filter)


@njit
def mode_filter_numba(packed, radius):
    h, w = packed.shape
    k = (2 * radius + 1) * (2 * radius + 1)
    out = np.empty_like(packed)
    buf = np.empty(k, dtype=packed.dtype)
    for r in range(h):
        for c in range(w):
            n = 0
            for dr in range(-radius, radius + 1):
                rr = min(max(r + dr, 0), h - 1)
                for dc in range(-radius, radius + 1):
                    cc = min(max(c + dc, 0), w - 1)
                    buf[n] = packed[rr, cc]
                    n += 1
            buf.sort()
            best = buf[0]
            best_n = 0
            run = 0
            for i in range(k):
                if i > 0 and buf[i] == buf[i - 1]:
                    run += 1
                else:
                    run = 1
                # strict '>' keeps the lowest value on count ties
                if run > best_n:
                    best_n = run
                    best = buf[i]
            out[r, c] = best
    return out


def mode_filter_numpy(packed, radius, chunk_rows=16):
    h, w = packed.shape
    padded = np.pad(packed, radius, mode="edge")
    windows = sliding_window_view(padded, (2 * radius + 1, 2 * radius + 1))
    out = np.empty_like(packed)
    for r0 in range(0, h, chunk_rows):
        blk = windows[r0 : r0 + chunk_rows].reshape(-1, (2 * radius + 1) ** 2)
        blk = np.sort(blk, axis=1)
        counts = (blk[:, :, None] == blk[:, None, :]).sum(axis=2)
        best = np.argmax(counts, axis=1)
        out[r0 : r0 + chunk_rows] = blk[np.arange(blk.shape[0]), best].reshape(-1, w)
    return out


# ---------------------------------------------------------------- canny

TAN_22_5 = 0.41421356237309503


@njit
def canny_nms_numba(mag, gx, gy):
    h, w = mag.shape
    out = np.zeros_like(mag)
    for r in range(h):
        for c in range(w):
            m = mag[r, c]
            if m <= 0.0:
                continue
            ax = abs(gx[r, c])
            ay = abs(gy[r, c])
            if ay <= TAN_22_5 * ax:
                dr1, dc1, dr2, dc2 = 0, -1, 0, 1
            elif ax <= TAN_22_5 * ay:
                dr1, dc1, dr2, dc2 = -1, 0, 1, 0
            elif gx[r, c] * gy[r, c] > 0.0:
                dr1, dc1, dr2, dc2 = -1, -1, 1, 1
            else:
                dr1, dc1, dr2, dc2 = -1, 1, 1, -1
            n1 = 0.0
            n2 = 0.0
            if 0 <= r + dr1 < h and 0 <= c + dc1 < w:
                n1 = mag[r + dr1, c + dc1]
            if 0 <= r + dr2 < h and 0 <= c + dc2 < w:
                n2 = mag[r + dr2, c + dc2]
            if m >= n1 and m >= n2:
                out[r, c] = m
    return out


def _shifted(a, dr, dc):
    """``out[r, c] = a[r + dr, c + dc]`` with zeros outside the array."""
    h, w = a.shape
    out = np.zeros_like(a)
    out[max(0, -dr) : h - max(0, dr), max(0, -dc) : w - max(0, dc)] = a[
        max(0, dr) : h + min(0, dr) or None, max(0, dc) : w + min(0, dc) or None
    ]
    return out


def canny_nms_numpy(mag, gx, gy):
    ax = np.abs(gx)
    ay = np.abs(gy)
    horiz = ay <= TAN_22_5 * ax
    vert = ~horiz & (ax <= TAN_22_5 * ay)
    diag = ~horiz & ~vert
    main = diag & (gx * gy > 0.0)
    anti = diag & ~main
    keep = np.zeros(mag.shape, dtype=bool)
    for sel, (d1, d2) in (
        (horiz, ((0, -1), (0, 1))),
        (vert, ((-1, 0), (1, 0))),
        (main, ((-1, -1), (1, 1))),
        (anti, ((-1, 1), (1, -1))),
    ):
        n1 = _shifted(mag, *d1)
        n2 = _shifted(mag, *d2)
        keep |= sel & (mag >= n1) & (mag >= n2)
    keep &= mag > 0.0
    return np.where(keep, mag, 0.0)


@njit
def hysteresis_numba(nms, low, high):
    h, w = nms.shape
    out = np.zeros((h, w), dtype=np.bool_)
    stack = np.empty((h * w, 2), dtype=np.int64)
    top = 0
    for r in range(h):
        for c in range(w):
            if nms[r, c] > 0.0 and nms[r, c] >= high and not out[r, c]:
                out[r, c] = True
                stack[top, 0] = r
                stack[top, 1] = c
                top += 1
                while top > 0:
                    top -= 1
                    pr = stack[top, 0]
                    pc = stack[top, 1]
                    for dr in range(-1, 2):
                        for dc in range(-1, 2):
                            rr = pr + dr
                            cc = pc + dc
                            if 0 <= rr < h and 0 <= cc < w and not out[rr, cc]:
                                v = nms[rr, cc]
                                if v > 0.0 and v >= low:
                                    out[rr, cc] = True
                                    stack[top, 0] = rr
                                    stack[top, 1] = cc
                                    top += 1
    return out


def hysteresis_numpy(nms, low, high):
    weak = (nms > 0.0) & (nms >= low)
    edges = weak & (nms >= high)
    while True:
        grown = edges.copy()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                if dr or dc:
                    grown |= _shifted(edges, dr, dc)
        grown &= weak
        if np.array_equal(grown, edges):
            return edges
        edges = grown


idt_windows = pick(idt_windows_numba, idt_windows_numpy)
stroke_segments = pick(stroke_segments_numba, stroke_segments_numpy)
mode_filter = pick(mode_filter_numba, mode_filter_numpy)
canny_nms = pick(canny_nms_numba, canny_nms_numpy)
hysteresis = pick(hysteresis_numba, hysteresis_numpy)
