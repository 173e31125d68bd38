import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ulda.data import Sequence

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_sequence(labels, features=None, seq_id="s", d=2, seed=0, utopia=None):
    labels = np.asarray(labels, dtype=float)
    if features is None:
        features = np.random.default_rng(seed).normal(size=(labels.size, d))
    return Sequence(seq_id, np.arange(labels.size), labels, features, utopia)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
