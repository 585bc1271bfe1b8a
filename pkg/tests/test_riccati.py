import math

import numpy as np
import pytest

from conftest import random_system
from lqturnpike.errors import NoConvergence
from lqturnpike.model import GaussianState, LtiStochasticSystem, QuadraticCost
from lqturnpike.riccati import dare_residual, modified_cost_decomposition, riccati_backward, solve_dare
from lqturnpike.stationary import AffineControl, build_stationary_pair, propagate_joint_moments

P_SCALAR = (3.2 + math.sqrt(30.24)) / 2


def test_scalar_dare_closed_form(scalar):
    pb, sol, _ = scalar
    # 1.2 P^2 / (5 + P) = P - 1  <=>  P^2 - 3.2 P - 5 = 0 after scaling
    assert sol.P[0, 0] == pytest.approx(P_SCALAR, abs=1e-9)
    assert sol.K[0, 0] == pytest.approx(-1.2 * P_SCALAR / (5 + P_SCALAR), abs=1e-9)
    assert sol.P[0, 0] == pytest.approx(4.3495, abs=1e-4)
    assert sol.K[0, 0] == pytest.approx(-0.55826, abs=1e-5)
    assert sol.residual <= 1e-9
    assert sol.spectral_radius == pytest.approx(abs(1.2 + sol.K[0, 0]), abs=1e-6)


def test_backward_one_step(scalar):
    pb, _, _ = scalar
    g = riccati_backward(pb.system, pb.cost, 1)
    assert g.P_seq[1, 0, 0] == 0.0
    assert g.K_seq[0, 0, 0] == 0.0
    assert g.P_seq[0, 0, 0] == pytest.approx(1.0)
    g1 = riccati_backward(pb.system, pb.cost, 1, terminal=np.ones((1, 1)))
    assert g1.K_seq[0, 0, 0] == pytest.approx(-1.2 / 6, abs=1e-15)


def test_backward_converges_to_dare(scalar):
    pb, sol, _ = scalar
    g = riccati_backward(pb.system, pb.cost, 50)
    assert g.P_seq[0, 0, 0] == pytest.approx(P_SCALAR, abs=1e-6)


def test_terminal_at_fixed_point_is_stationary(scalar):
    pb, sol, _ = scalar
    g = riccati_backward(pb.system, pb.cost, 30, terminal=sol.P)
    assert np.max(np.abs(g.P_seq - sol.P)) <= 1e-10
    assert np.max(np.abs(g.K_seq - sol.K)) <= 1e-10


def test_deadbeat_case():
    n = 3
    sys = LtiStochasticSystem(np.zeros((n, n)), np.eye(n), np.eye(n))
    cost = QuadraticCost(np.eye(n), np.eye(n))
    sol = solve_dare(sys, cost)
    np.testing.assert_allclose(sol.P, np.eye(n), atol=1e-14)
    np.testing.assert_allclose(sol.K, np.zeros((n, n)), atol=1e-14)


def test_loewner_monotone(rng):
    sys, cost, _ = random_system(rng, 3, 2)
    g = riccati_backward(sys, cost, 40)
    for k in range(40):
        d = g.P_seq[k] - g.P_seq[k + 1]
        assert np.linalg.eigvalsh(d).min() >= -1e-10


def test_unstabilizable_raises():
    sys = LtiStochasticSystem([[2.0]], [[0.0]], [[1.0]])
    with pytest.raises(NoConvergence):
        solve_dare(sys, QuadraticCost([[1.0]], [[1.0]]))


def test_dare_random_systems(rng):
    for _ in range(10):
        n, l = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        sys, cost, _ = random_system(rng, n, l)
        sol = solve_dare(sys, cost)
        assert dare_residual(sys, cost, sol.P) <= 1e-9 * (1 + np.abs(sol.P).max())
        assert sol.spectral_radius < 1
        assert max(abs(np.linalg.eigvals(sys.A + sys.B @ sol.K))) < 1


def _direct_cost(sys, cost, ctrl, x0, N):
    # brute-force moment propagation of (X, U) without the joint machinery
    n = sys.n
    m, S = x0.mean.copy(), x0.cov.copy()
    total = 0.0
    for k in range(N):
        Gx = ctrl.G[k][:, :n]
        mu, Su = Gx @ m + ctrl.g[k], Gx @ S @ Gx.T
        total += np.trace(cost.Q @ S) + m @ cost.Q @ m + np.trace(cost.R @ Su) + mu @ cost.R @ mu
        F = sys.A + sys.B @ Gx
        m = F @ m + sys.B @ ctrl.g[k]
        S = F @ S @ F.T + sys.Sigma_W
    return total


@pytest.mark.parametrize("seed", range(5))
def test_decomposition_identity(seed):
    rng = np.random.default_rng(seed)
    n, l = int(rng.integers(1, 5)), int(rng.integers(1, 3))
    sys, cost, x0 = random_system(rng, n, l)
    sol = solve_dare(sys, cost)
    pair = build_stationary_pair(sys, sol)
    N = 25
    G = np.zeros((N, l, 2 * n))
    G[:, :, :n] = sol.K + 0.1 * rng.standard_normal((N, l, n))
    ctrl = AffineControl(G, rng.standard_normal((N, l)))
    traj = propagate_joint_moments(sys, ctrl, pair, x0, N)
    dec = modified_cost_decomposition(sys, cost, sol, traj)
    direct = _direct_cost(sys, cost, ctrl, x0, N)
    assert dec.direct == pytest.approx(direct, rel=1e-12)
    assert dec.residual <= 1e-8 * max(1.0, abs(dec.direct))


def test_decomposition_scalar_optimal(scalar):
    pb, sol, pair = scalar
    N = 20
    traj = propagate_joint_moments(pb.system, sol.K, pair, pb.x0, N)
    dec = modified_cost_decomposition(pb.system, pb.cost, sol, traj)
    assert dec.control_deviation == pytest.approx(0.0, abs=1e-12)
    assert dec.residual <= 1e-8
    # steady feedback from a deterministic zero start
    z = propagate_joint_moments(pb.system, sol.K, pair, GaussianState.deterministic([0.0]), N)
    assert modified_cost_decomposition(pb.system, pb.cost, sol, z).residual <= 1e-8
