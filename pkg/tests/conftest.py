import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


@st.composite
def simplex(draw, n=None, min_classes=2, max_classes=8, min_mass=1e-6):
    c = n if n is not None else draw(st.integers(min_classes, max_classes))
    raw = draw(st.lists(st.floats(min_mass, 1.0), min_size=c, max_size=c))
    v = np.array(raw)
    return v / v.sum()


@st.composite
def simplex_pair(draw, min_mass=1e-6):
    c = draw(st.integers(2, 8))
    return draw(simplex(n=c, min_mass=min_mass)), draw(simplex(n=c, min_mass=min_mass))


def logits(c):
    return st.lists(st.floats(-8.0, 8.0), min_size=c, max_size=c).map(np.array)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
