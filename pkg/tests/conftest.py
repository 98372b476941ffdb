import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

PSPEC_QS = (-1, 0, 1, 2)


@st.composite
def spectra(draw, min_d=2, max_d=10, max_rho=100.0, margin=0.0):
    """Sorted distinct eigenvalues with m = 1 scaled by a random factor."""
    d = draw(st.integers(min_d, max_d))
    log_rho = draw(st.floats(np.log(1.5), np.log(max_rho)))
    scale = draw(st.floats(0.1, 10.0))
    rho = float(np.exp(log_rho))
    inner = draw(
        st.lists(st.floats(margin, 1.0 - margin), min_size=d - 2, max_size=d - 2, unique=True)
    )
    t = np.array(sorted(inner))
    lam = 1.0 + (rho - 1.0) * t
    lam = np.concatenate(([1.0], lam, [rho])) * scale
    lam = np.unique(lam)
    if lam.size < 2:
        lam = np.array([scale, rho * scale])
    return lam


@st.composite
def measures(draw, min_atoms=2, max_atoms=8):
    """Atoms on [1, rho] with strictly positive masses."""
    lam = draw(spectra(min_d=min_atoms, max_d=max_atoms))
    w = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=lam.size, max_size=lam.size)))
    return lam, w / w.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
