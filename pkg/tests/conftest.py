import sys
from datetime import datetime
from pathlib import Path

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from relsynth.relational import MISSING, AttributeSpec, Kind, RelationalDataset, TableData  # noqa: E402

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset():
    """Two primaries, three secondaries, every kind and one Missing cell: 5 vertices."""
    prim = TableData("p", (AttributeSpec("id", Kind.IDENTIFIER, unique=True),
                           AttributeSpec("c", Kind.CATEGORICAL),
                           AttributeSpec("x", Kind.NUMERIC)),
                     (("1", "a", 1.0), ("2", "b", MISSING)))
    sec = TableData("s", (AttributeSpec("id", Kind.IDENTIFIER),
                          AttributeSpec("y", Kind.NUMERIC),
                          AttributeSpec("t", Kind.DATETIME)),
                    (("1", 3.0, datetime(2020, 1, 1)), ("1", -1.0, datetime(2021, 1, 1)),
                     ("2", 0.5, datetime(2020, 6, 1))))
    return RelationalDataset.single_primary([prim, sec], "p", "id", name="tiny")
