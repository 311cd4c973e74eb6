from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import visual_angle_px
from gazescreen.errors import EmptyPointSet, InvalidGeometry
from gazescreen.geometry import DEFAULT_GEOMETRY, ViewingGeometry, degrees_to_pixels, dispersion, pixels_to_degrees


def test_one_degree_at_default_setup():
    px = degrees_to_pixels(1.0)
    assert px == pytest.approx(37.14, abs=0.01)
    assert px == pytest.approx(visual_angle_px(1.0), rel=1e-12)


def test_pitch():
    assert DEFAULT_GEOMETRY.px_pitch_mm == pytest.approx(0.282, abs=1e-9)


@given(st.floats(min_value=0.0, max_value=60.0))
def test_roundtrip(deg):
    assert pixels_to_degrees(degrees_to_pixels(deg)) == pytest.approx(deg, abs=1e-9)


def test_vectorized_matches_scalar():
    degs = np.linspace(0, 20, 11)
    np.testing.assert_allclose(degrees_to_pixels(degs), [degrees_to_pixels(float(d)) for d in degs], rtol=0, atol=0)


def test_exact_trig_not_small_angle():
    # at 30 degrees the small-angle shortcut is off by a few percent
    exact = 2 * 600 * math.tan(math.radians(15)) / 0.282
    assert degrees_to_pixels(30.0) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize(
    "kw",
    [
        {"viewing_distance_mm": 0},
        {"screen_width_px": -1},
        {"screen_height_mm": 400.0},  # non-square pixels
        {"screen_width_mm": float("nan")},
    ],
)
def test_invalid_geometry(kw):
    with pytest.raises(InvalidGeometry):
        ViewingGeometry(**kw)


def test_config_roundtrip():
    g = ViewingGeometry.from_config({"screen_px": [1920, 1080], "screen_mm": [531.36, 298.89], "distance_mm": 650})
    assert ViewingGeometry.from_config(g.to_config()) == g
    assert ViewingGeometry.from_config(None) == DEFAULT_GEOMETRY


def test_dispersion():
    pts = np.array([[0.0, 0.0], [3.0, 1.0], [1.0, 5.0]])
    assert dispersion(pts) == 3.0 + 5.0
    assert dispersion(pts[:1]) == 0.0
    with pytest.raises(EmptyPointSet):
        dispersion(np.empty((0, 2)))
