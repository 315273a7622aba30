import sys

import numpy as np
import pytest

from vtsnn.events import EventStream, Modality


def random_stream(rng, n_events, n_channels, duration_us, modality=Modality.TACTILE,
                  geometry=None):
    ts = np.sort(rng.integers(0, duration_us, size=n_events))
    ch = rng.integers(0, n_channels, size=n_events)
    pol = rng.integers(0, 2, size=n_events)
    return EventStream(ts, ch, pol, n_channels, modality, geometry)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance checks")
        for line in mod.LINES:
            terminalreporter.write_line(line)
