"""Time each hot kernel on its numba and numpy paths and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Numba compilation is triggered (and cached) before timing starts.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from gazescreen import _kernels
from gazescreen.events import build_scanpath
from gazescreen.geometry import degrees_to_pixels
from gazescreen.simulate import preset_profiles, simulate_recording


def _idt_inputs():
    rec = simulate_recording(preset_profiles()["anxious"], seed=0)
    x, y = np.ascontiguousarray(rec.x_px), np.ascontiguousarray(rec.y_px)
    return (x, y, np.array([0], np.int64), np.array([len(x)], np.int64), 10, degrees_to_pixels(1.0))


def _stroke_inputs():
    sp = build_scanpath(simulate_recording(preset_profiles()["control"], seed=0))
    pts = sp.raw_polyline
    mask = np.zeros((1050, 1680), np.bool_)
    cols = [np.ascontiguousarray(c) for c in (pts[:-1, 0], pts[:-1, 1], pts[1:, 0], pts[1:, 1])]
    return (mask, *cols, 2.0)


def _mode_inputs(radius):
    rng = np.random.default_rng(0)
    palette = rng.integers(0, 1 << 24, 12, dtype=np.uint32)
    return (palette[rng.integers(0, 12, (224, 224))], radius)


def _canny_inputs():
    rng = np.random.default_rng(1)
    gx, gy = rng.normal(size=(224, 224)), rng.normal(size=(224, 224))
    return (np.hypot(gx, gy), gx, gy)


def _hyst_inputs():
    mag = _kernels.canny_nms_numba(*_canny_inputs())
    hi = float(mag.max())
    return (mag, 0.1 * hi, 0.3 * hi)


CASES = {
    "idt_windows (1200 samples)": ("idt_windows", _idt_inputs),
    "stroke_segments (1680x1050)": ("stroke_segments", _stroke_inputs),
    "mode_filter r=1 (224^2)": ("mode_filter", lambda: _mode_inputs(1)),
    "mode_filter r=3 (224^2)": ("mode_filter", lambda: _mode_inputs(3)),
    "canny_nms (224^2)": ("canny_nms", _canny_inputs),
    "hysteresis (224^2)": ("hysteresis", _hyst_inputs),
}


def _copy(args):
    # stroke kernels write into their mask argument
    return tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)


def _time(fn, args, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        a = _copy(args)
        t0 = time.perf_counter()
        out = fn(*a)
        best = min(best, time.perf_counter() - t0)
        if out is None:
            out = a[0]
    return best, out


def run(repeat: int = 5) -> list[dict]:
    rows = []
    for label, (name, make) in CASES.items():
        args = make()
        nb = getattr(_kernels, f"{name}_numba")
        npy = getattr(_kernels, f"{name}_numpy")
        _time(nb, args, 1)  # compile
        t_nb, o_nb = _time(nb, args, repeat)
        t_np, o_np = _time(npy, args, repeat)
        rows.append({
            "kernel": label,
            "numba_ms": 1e3 * t_nb,
            "numpy_ms": 1e3 * t_np,
            "speedup": t_np / t_nb if t_nb > 0 else float("inf"),
            "identical": bool(np.array_equal(o_nb, o_np)),
        })
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the rows to this file")
    a = ap.parse_args()
    rows = run(a.repeat)
    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  identical")
    for r in rows:
        print(f"{r['kernel']:32s} {r['numba_ms']:10.2f} {r['numpy_ms']:10.2f} {r['speedup']:7.1f}x  {r['identical']}")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
