import numpy as np
import pytest

from ldpaths.models import (
    BirthDeath,
    Brownian,
    BrownianDrift,
    ConstRate,
    OrnsteinUhlenbeck,
    OUField,
    SpinFlip,
)

# Acceptance tests append "PASS criterion ..." / "FAIL criterion ..." lines here.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


CLOSED_FORM_MODELS = [
    Brownian(),
    BrownianDrift(V=0.4),
    OrnsteinUhlenbeck(kappa=0.7),
    OUField(kappa=0.7, E=0.1),
    SpinFlip(1.0),
    SpinFlip(1.7),
    BirthDeath(ConstRate(1.3), ConstRate(0.6)),
]
