from __future__ import annotations

import json

import numpy as np
import pytest

from gazescreen.errors import InvalidProfile
from gazescreen.events import build_scanpath, scanpath_length
from gazescreen.simulate import (
    EMOTIONS,
    BiasProfile,
    default_layout,
    load_profile,
    preset_profiles,
    simulate_cohort,
    simulate_recording,
    simulate_with_truth,
    with_overrides,
)


def test_layout():
    lay = default_layout()
    centres = {a.emotion: a.center for a in lay.aois}
    assert centres == {"neutral": (420.0, 262.0), "sad": (1260.0, 262.0), "angry": (420.0, 787.0), "happy": (1260.0, 787.0)}
    shuffled = default_layout(seed=3)
    assert sorted(a.emotion for a in shuffled.aois) == sorted(EMOTIONS)


def test_determinism_and_shape():
    p = preset_profiles()["anxious"]
    a = simulate_recording(p, seed=9, participant_id="anxious-009")
    b = simulate_recording(p, seed=9, participant_id="anxious-009")
    assert a == b
    assert len(a) == 1200 and a.t_ms[-1] == round(1199 * 1000 / 120)
    a.validate((1680, 1050))
    assert a != simulate_recording(p, seed=10, participant_id="anxious-009")


def test_episodes_stay_in_aois():
    rec, eps = simulate_with_truth(preset_profiles()["depressive"], seed=2)
    lay = default_layout()
    for e in eps:
        assert lay.aoi(e.emotion).contains(e.target_x, e.target_y)
    assert eps[0].start_ms == 0 and all(a.end_ms <= b.start_ms for a, b in zip(eps, eps[1:]))


def test_cohort_ids_and_independence():
    recs = simulate_cohort(preset_profiles()["control"], 4, seed=1)
    assert [r.participant_id for r in recs] == ["control-000", "control-001", "control-002", "control-003"]
    assert not np.array_equal(recs[0].x_px, recs[1].x_px)
    other = simulate_cohort(preset_profiles()["depressive"], 1, seed=1)[0]
    assert not np.array_equal(recs[0].x_px, other.x_px)


def _sad_share(profile, seeds):
    total = sad = 0.0
    for s in seeds:
        _, eps = simulate_with_truth(profile, seed=s)
        for e in eps:
            d = min(e.end_ms, 10000.0) - e.start_ms
            total += d
            sad += d if e.emotion == "sad" else 0.0
    return sad / total


def test_bias_directions():
    pr = preset_profiles()
    assert _sad_share(pr["depressive"], range(10)) > 1.5 * _sad_share(pr["control"], range(10))
    anx = np.mean([scanpath_length(build_scanpath(simulate_recording(pr["anxious"], seed=s))) for s in range(10)])
    ctl = np.mean([scanpath_length(build_scanpath(simulate_recording(pr["control"], seed=s))) for s in range(10)])
    assert anx > ctl


def test_profile_json_and_validation(tmp_path):
    p = with_overrides(preset_profiles()["control"], name="custom", hyperscan_rate=1.2)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(p.to_json()))
    assert load_profile(path) == p
    assert p.refixation_probability() == pytest.approx(1 - 1 / 1.2)
    with pytest.raises(InvalidProfile):
        load_profile("nonexistent")
    with pytest.raises(InvalidProfile):
        with_overrides(p, hyperscan_rate=0.5)
    with pytest.raises(InvalidProfile):
        BiasProfile.from_json({"name": "x", "dwell_weights": {"sad": 1.0}})


def test_control_sad_time_fraction():
    share = _sad_share(preset_profiles()["control"], range(100))
    assert share == pytest.approx(0.20, abs=0.05)


@pytest.mark.parametrize("name", ["control", "depressive"])
def test_selection_frequencies_follow_weights(name):
    prof = preset_profiles()[name]
    counts = {e: 0 for e in EMOTIONS}
    for s in range(100):
        for e in simulate_with_truth(prof, seed=s)[1]:
            counts[e.emotion] += 1
    total = sum(counts.values())
    for e, p in prof.selection_probabilities().items():
        assert counts[e] / total == pytest.approx(p, abs=0.05)


@pytest.mark.parametrize("name", ["control", "depressive", "anxious"])
def test_detector_recovers_injected_episodes(name):
    hit = total = 0
    for s in range(20):
        rec, eps = simulate_with_truth(preset_profiles()[name], seed=s)
        fix = build_scanpath(rec).fixations
        for e in eps:
            span = min(e.end_ms, 10000.0) - e.start_ms
            best = max((min(e.end_ms, f.end_ms) - max(e.start_ms, f.start_ms) for f in fix), default=0.0)
            hit += best >= 0.5 * span
            total += 1
    assert hit / total >= 0.90
