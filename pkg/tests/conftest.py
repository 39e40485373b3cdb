import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from eqstream.events import EventStream, SensorGeometry  # noqa: E402
from eqstream.synthetic import moving_bar_frames  # noqa: E402

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def four_events():
    """2x2 sensor, the worked tensorization example."""
    return EventStream.from_events(SensorGeometry(2, 2),
                                   [(10, 0, 0, 1), (20, 1, 0, -1), (60, 0, 1, 1), (60, 0, 1, 1)])


@pytest.fixture(scope="session")
def bar_frames():
    return moving_bar_frames()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
