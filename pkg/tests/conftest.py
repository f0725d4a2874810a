import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_iv_data(n=200, L=3, p=2, rho=0.5, gamma=0.6, beta=2.0, seed=0, hetero=True):
    """Small heteroskedastic IV design with known structure."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, L))
    X = rng.standard_normal((n, p))
    e1, e2 = rng.standard_normal(n), rng.standard_normal(n)
    u = rho * e1 + np.sqrt(1 - rho ** 2) * e2
    scale = (1.0 + 0.5 * np.abs(X[:, 0])) if hetero else 1.0
    d = Z @ np.full(L, gamma) + X @ np.full(p, 0.2) + u
    y = 1.0 + beta * d + X @ np.full(p, -0.3) + scale * e1
    return y, d, Z, X


@pytest.fixture
def iv_data():
    return make_iv_data()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
