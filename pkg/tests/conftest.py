import numpy as np
import pytest

from lqturnpike.model import GaussianState, LtiStochasticSystem, QuadraticCost, scalar_example
from lqturnpike.riccati import solve_dare
from lqturnpike.stationary import build_stationary_pair

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_system(rng, n, l, rho_max=1.3, q_pd=True):
    """Random stabilizable/detectable problem (generic B, Q > 0 unless q_pd=False)."""
    A = rng.standard_normal((n, n))
    rho = max(abs(np.linalg.eigvals(A)))
    A *= rng.uniform(0.3, rho_max) / rho
    B = rng.standard_normal((n, l))
    C = rng.standard_normal((n, n))
    Q = C.T @ C / n + (0.1 * np.eye(n) if q_pd else 0.0)
    D = rng.standard_normal((l, l))
    R = D.T @ D / l + 0.5 * np.eye(l)
    E = rng.standard_normal((n, n))
    Sigma_W = E @ E.T / n
    F = rng.standard_normal((n, n))
    x0 = GaussianState(rng.standard_normal(n) * 2.0, F @ F.T / n)
    return LtiStochasticSystem(A, B, Sigma_W), QuadraticCost(Q, R), x0


@pytest.fixture(scope="session")
def scalar():
    pb = scalar_example()
    sol = solve_dare(pb.system, pb.cost)
    pair = build_stationary_pair(pb.system, sol)
    return pb, sol, pair


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
