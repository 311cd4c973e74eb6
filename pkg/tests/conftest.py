from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gazescreen.gaze_io import GazeRecording, GroupLabel

settings.register_profile("gazescreen", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gazescreen")


def make_recording(xy, rate_hz=120.0, valid=None, pid="control-000", group=GroupLabel.CONTROL) -> GazeRecording:
    xy = np.asarray(xy, dtype=np.float64)
    n = len(xy)
    t = np.round(np.arange(n) * 1000.0 / rate_hz).astype(np.int64)
    v = np.ones(n, bool) if valid is None else np.asarray(valid, bool)
    return GazeRecording(pid, group, t, xy[:, 0], xy[:, 1], v, rate_hz)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
