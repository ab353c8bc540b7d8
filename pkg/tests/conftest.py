import sys
import numpy as np
import pytest
from hypothesis import settings

from hiacg.pianoroll import N_PITCHES, PianoRoll

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def random_roll(rng, n_steps, density=0.1):
    return PianoRoll((rng.random((N_PITCHES, n_steps)) < density).astype(np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
