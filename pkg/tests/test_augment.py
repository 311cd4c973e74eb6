from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gazescreen.augment import BANK, AugmentOp, apply, augment_all, augment_dir, canny_edges, gamma, hsl_to_rgb, modulate, negate, paint, posterize, rgb_to_hsl
from gazescreen.errors import InvalidConfig, InvalidParameter
from gazescreen.render import load_png, save_png

images = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.just(4)))


def test_bank_order_and_names():
    assert [op.name for op in BANK] == [
        "negate", "canny10", "posterize2", "posterize4", "paint1", "paint3", "gamma100", "modulate140", "modulate160",
    ]


@pytest.mark.parametrize("text", ["posterize 1", "paint 0", "gamma -1", "blur 3", "negate 2", "paint 1.5"])
def test_bad_ops(text):
    with pytest.raises(InvalidParameter):
        AugmentOp.parse(text)


def test_parse_forms():
    assert AugmentOp.parse("Posterize 4") == AugmentOp.parse("posterize4") == AugmentOp("posterize", 4)


@given(images)
def test_negate_involution(img):
    np.testing.assert_array_equal(negate(negate(img)), img)


@given(images)
def test_posterize_levels(img):
    assert set(np.unique(posterize(img, 2)[..., :3])) <= {0, 255}
    assert set(np.unique(posterize(img, 4)[..., :3])) <= {0, 85, 170, 255}


@given(images)
def test_alpha_untouched(img):
    for op in BANK:
        if op.kind != "canny":
            np.testing.assert_array_equal(apply(op, img)[..., 3], img[..., 3])


def test_gamma_lut():
    img = np.zeros((1, 3, 4), np.uint8)
    img[0, :, 0] = (0, 1, 128)
    out = gamma(img, 100.0)
    assert out[0, 0, 0] == 0
    # gamma 100 lifts every non-zero value to near white
    assert out[0, 1, 0] == int(np.floor(255 * (1 / 255) ** 0.01 + 0.5)) == 241
    assert out[0, 2, 0] == 253
    np.testing.assert_array_equal(gamma(img, 1.0), img)


@given(arrays(np.uint8, (6, 6, 3)))
def test_hsl_roundtrip(rgb):
    back = hsl_to_rgb(*rgb_to_hsl(rgb / 255.0))
    np.testing.assert_allclose(back * 255.0, rgb, atol=1e-9)


def test_modulate_scales_lightness():
    img = np.zeros((1, 2, 4), np.uint8)
    img[0, 0, :3] = (100, 50, 50)
    img[0, 1, :3] = (255, 255, 255)
    np.testing.assert_array_equal(modulate(img, 100.0), img)
    brighter = modulate(img, 140.0)
    _, s0, l0 = rgb_to_hsl(img[0, 0, :3] / 255.0)
    _, s1, l1 = rgb_to_hsl(brighter[0, 0, :3] / 255.0)
    assert float(l1) == pytest.approx(1.4 * float(l0), abs=1 / 255)
    assert tuple(brighter[0, 1, :3]) == (255, 255, 255)


def test_paint_constant_and_tie_rule():
    img = np.zeros((3, 3, 4), np.uint8)
    img[..., :3] = 77
    np.testing.assert_array_equal(paint(img, 1), img)
    row = np.zeros((1, 3, 4), np.uint8)
    row[0, :, :3] = np.array([9, 3, 5])[:, None]
    out = paint(row, 1)
    # middle window holds three of each colour, the tie goes to the lowest packed value;
    # the clamped end windows hold six of their own colour
    assert out[0, :, 0].tolist() == [9, 3, 5]


def test_canny_step_edge():
    img = np.zeros((32, 32, 4), np.uint8)
    img[..., 3] = 255
    img[:, 16:, :3] = 255
    edges = canny_edges(img, 10)
    cols = np.flatnonzero(edges.any(axis=0))
    assert set(cols) <= {15, 16} and len(cols) >= 1
    assert edges[:, cols[0]].sum() >= 28


def test_canny_flat_image_and_output_form():
    img = np.full((16, 16, 4), 90, np.uint8)
    out = apply(AugmentOp("canny", 10), img)
    assert out[..., :3].max() == 0 and (out[..., 3] == 255).all()


def test_augment_all_count():
    img = np.random.default_rng(0).integers(0, 256, (20, 20, 4), dtype=np.uint8)
    outs = augment_all(img)
    assert len(outs) == 9 and all(o.shape == img.shape for o in outs)


def test_augment_dir(tmp_path):
    rng = np.random.default_rng(1)
    for k in range(2):
        save_png(rng.integers(0, 256, (16, 16, 4), dtype=np.uint8), tmp_path / "src" / f"control-00{k}__overlay.png")
    written = augment_dir(tmp_path / "src", tmp_path / "dst")
    assert len(written) == 18
    assert (tmp_path / "dst" / "control-000__overlay__posterize2.png").exists()
    assert load_png(written[0]).shape == (16, 16, 4)


def test_rejects_non_rgba():
    with pytest.raises(InvalidConfig):
        apply(BANK[0], np.zeros((4, 4, 3), np.uint8))


@given(images)
def test_posterize_256_and_gamma_1_are_identity(img):
    np.testing.assert_array_equal(posterize(img, 256), img)
    np.testing.assert_array_equal(gamma(img, 1.0), img)


@given(arrays(np.uint8, (5, 5, 4)), st.sampled_from([("gamma", 100.0), ("gamma", 0.5), ("modulate", 140.0), ("modulate", 60.0)]))
def test_monotone_ops_keep_channel_order(img, op):
    out = apply(AugmentOp(*op), img).astype(int)
    src = img.astype(int)
    for a, b in ((0, 1), (1, 2), (0, 2)):
        le = src[..., a] <= src[..., b]
        assert (out[..., a][le] <= out[..., b][le]).all()


def test_transparent_input():
    img = np.zeros((24, 24, 4), np.uint8)
    outs = augment_all(img)
    for op, out in zip(BANK, outs):
        if op.kind == "canny":
            assert (out[..., 3] == 255).all() and out[..., :3].max() == 0
        else:
            assert out[..., 3].max() == 0


def test_variants_differ_from_rendered_sources():
    from gazescreen.events import build_scanpath
    from gazescreen.render import RenderConfig, render_scanpath
    from gazescreen.simulate import preset_profiles, simulate_recording

    for seed in range(20):
        prof = list(preset_profiles().values())[seed % 3]
        img = render_scanpath(build_scanpath(simulate_recording(prof, seed=seed)), RenderConfig(output_size=64))
        for op, out in zip(BANK, augment_all(img)):
            assert not np.array_equal(out, img), (seed, op.name)
