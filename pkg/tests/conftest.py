import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_even(rng, N, scale=2.0):
    """Random even state built from cosine modes."""
    from al_lab.lattice import LatticeState, even_projection

    M = N // 2
    modes = scale * (rng.standard_normal(M + 1) + 1j * rng.standard_normal(M + 1))
    n = np.arange(N)
    q = sum(modes[j] * np.cos(2 * np.pi * j * n / N) for j in range(M + 1))
    return LatticeState(even_projection(q))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k].line())
