import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cctsp.core import RngStream, TspInstance

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def square():
    return TspInstance.from_cities("square4", [(0, 0), (0, 1), (1, 1), (1, 0)])


def numeric_grad(f, param, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``param``."""
    out = np.zeros_like(param.values)
    flat = param.values.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        out.reshape(-1)[i] = (up - down) / (2 * h)
    return out


def rel_error(numeric, analytic):
    """Block-wise relative error: max abs difference over max abs entry."""
    scale = max(np.abs(numeric).max(), np.abs(analytic).max(), 1e-8)
    return float(np.abs(numeric - analytic).max() / scale)
