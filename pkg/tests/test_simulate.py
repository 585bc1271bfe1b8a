import math

import numpy as np
import pytest

from lqturnpike.dissipativity import certify
from lqturnpike.errors import DegeneratePerturbation, DimensionError
from lqturnpike.model import GaussianState, LtiStochasticSystem, QuadraticCost
from lqturnpike.riccati import riccati_backward, solve_dare
from lqturnpike.rng import derive_seed, mix64, splitmix_outputs, standard_normals, uniforms
from lqturnpike.simulate import (TAG_NOISE, empirical_cost, ensemble_noise, overtaking_gap, sample_noise,
                                 simulate_ensemble, simulate_pair)
from lqturnpike.stationary import AffineControl, build_stationary_pair, propagate_joint_moments


def _reference_splitmix(seed, count):
    # textbook sequential SplitMix64 using Python big ints
    mask = (1 << 64) - 1
    out, state = [], seed
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


def test_splitmix_vectors():
    assert int(splitmix_outputs(0, 0)) == 0xE220A8397B1DCDAF
    for seed in (0, 1, 2 ** 63 + 5):
        ref = _reference_splitmix(seed, 8)
        got = [int(v) for v in splitmix_outputs(seed, np.arange(8))]
        assert got == ref
    u = uniforms(7, np.arange(1000))
    assert u.min() >= 0 and u.max() < 1


def test_derive_seed_scalar_and_vector():
    s = derive_seed(5, 1, 2)
    assert isinstance(s, int)
    v = derive_seed(np.uint64(5), np.array([1, 1], dtype=np.uint64), 2)
    assert [int(x) for x in v] == [s, s]
    assert derive_seed(5, 1) != derive_seed(5, 2)
    assert int(mix64(0)[0]) == 0


def test_normals_moments():
    z = standard_normals(3, np.arange(200_000))
    assert abs(z.mean()) < 4 / math.sqrt(z.size)
    assert z.var() == pytest.approx(1.0, rel=0.02)


def test_noise_zero_and_deterministic():
    assert not sample_noise(1, 5, np.zeros((2, 2))).samples.any()
    a = sample_noise(42, 50, [[10.0]]).samples
    b = sample_noise(42, 50, [[10.0]]).samples
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_noise(43, 50, [[10.0]]).samples)


def test_noise_clt_bounds():
    w = sample_noise(2024, 1_000_000, [[10.0]]).samples[:, 0]
    assert abs(w.mean()) <= 4 * math.sqrt(10 / 1e6)
    assert w.var() == pytest.approx(10.0, rel=0.05)


def test_noise_correlation(rng):
    a = rng.standard_normal((3, 3))
    Sw = a @ a.T
    w = sample_noise(9, 200_000, Sw).samples
    assert np.abs(np.cov(w.T) - Sw).max() <= 0.05 * np.abs(Sw).max()


def test_zero_noise_zero_start(scalar):
    pb, sol, _ = scalar
    sys = LtiStochasticSystem([[1.2]], [[1.0]], [[0.0]])
    sol0 = solve_dare(sys, pb.cost)
    pair = build_stationary_pair(sys, sol0)
    g = riccati_backward(sys, pb.cost, 15)
    p = simulate_pair(sys, g, pair, GaussianState.deterministic([0.0]), sample_noise(0, 15, [[0.0]]), 1)
    assert not p.x.any() and not p.xs.any()


def test_replay_and_cancellation(scalar):
    pb, sol, pair = scalar
    N = 40
    g = riccati_backward(pb.system, pb.cost, N)
    p = simulate_pair(pb.system, g, pair, pb.x0, sample_noise(11, N, [[10.0]]), 12, cost=pb.cost)
    A, B = pb.system.A, pb.system.B
    res = p.x[1:] - (p.x[:-1] @ A.T + p.u @ B.T + p.w)
    assert np.abs(res).max() <= 1e-12 * (1 + np.abs(p.x).max())
    np.testing.assert_array_equal(p.us, p.xs[:-1] @ sol.K.T)
    np.testing.assert_allclose(p.u, np.einsum("kij,kj->ki", g.K_seq, p.x[:-1]), rtol=0, atol=1e-12)
    steady = simulate_pair(pb.system, sol.K, pair, pb.x0, sample_noise(11, N, [[10.0]]), 12, N=N)
    d0 = steady.x[0] - steady.xs[0]
    for k in range(N + 1):
        expect = np.linalg.matrix_power(pair.A_K, k) @ d0
        assert np.abs(steady.x[k] - steady.xs[k] - expect).max() <= 1e-10


def test_noise_horizon_checked(scalar):
    pb, sol, pair = scalar
    g = riccati_backward(pb.system, pb.cost, 10)
    with pytest.raises(DimensionError):
        simulate_pair(pb.system, g, pair, pb.x0, sample_noise(0, 5, [[10.0]]), 0)
    long = simulate_pair(pb.system, g, pair, pb.x0, sample_noise(0, 30, [[10.0]]), 0)
    assert long.N == 10


def test_ensemble_paths_match_single(scalar):
    pb, _, pair = scalar
    N, seed = 12, 77
    g = riccati_backward(pb.system, pb.cost, N)
    ens = simulate_ensemble(pb.system, g, pair, pb.x0, seed, 5, cost=pb.cost)
    for i in (0, 3):
        single = simulate_pair(pb.system, g, pair, pb.x0, ensemble_noise(seed, i, N, pb.system.Sigma_W),
                               derive_seed(seed, i), cost=pb.cost)
        np.testing.assert_array_equal(ens.path(i).x, single.x)
        np.testing.assert_array_equal(ens.path(i).xs, single.xs)
    assert ensemble_noise(seed, 2, N, [[10.0]]).seed == derive_seed(seed, 2, TAG_NOISE)
    again = simulate_ensemble(pb.system, g, pair, pb.x0, seed, 5, cost=pb.cost)
    np.testing.assert_array_equal(ens.x, again.x)


def test_empirical_cost(scalar):
    pb, sol, pair = scalar
    N = 20
    ens = simulate_ensemble(pb.system, sol.K, pair, pb.x0, 5, 10_000, N=N, cost=pb.cost)
    mean, se = empirical_cost(ens)
    exact = propagate_joint_moments(pb.system, sol.K, pair, pb.x0, N).cost(pb.cost)
    assert abs(mean - exact) <= 4 * se
    one = simulate_ensemble(pb.system, sol.K, pair, pb.x0, 5, 1, N=N, cost=pb.cost)
    with pytest.raises(ValueError):
        empirical_cost(one)


def test_empirical_cost_deterministic():
    sys = LtiStochasticSystem([[0.5]], [[1.0]], [[0.0]])
    cost = QuadraticCost([[1.0]], [[1.0]])
    sol = solve_dare(sys, cost)
    pair = build_stationary_pair(sys, sol)
    x0 = GaussianState.deterministic([2.0])
    ens = simulate_ensemble(sys, sol.K, pair, x0, 0, 4, N=10, cost=cost)
    mean, se = empirical_cost(ens)
    assert se == 0.0
    assert mean == pytest.approx(propagate_joint_moments(sys, sol.K, pair, x0, 10).cost(cost), rel=1e-12)


def test_empirical_H_supply_consistent(scalar):
    pb, sol, pair = scalar
    cert = certify(pb.system, pb.cost, sol)
    N = 15
    g = riccati_backward(pb.system, pb.cost, N)
    ens = simulate_ensemble(pb.system, g, pair, pb.x0, 31, 10_000)
    traj = propagate_joint_moments(pb.system, g, pair, pb.x0, N)
    for k in range(N):
        T, t = traj.deviation_map(k)
        exact = traj.expect_quadratic(k, cert.H, T, t)
        v = np.stack([ens.x[:, k, 0] - ens.xs[:, k, 0], ens.u[:, k, 0] - ens.us[:, k, 0]], axis=1)
        samples = np.einsum("mi,ij,mj->m", v, cert.H, v)
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        assert abs(samples.mean() - exact) <= 5 * se


def test_gap_rejects_zero(scalar):
    pb, sol, pair = scalar
    with pytest.raises(DegeneratePerturbation):
        overtaking_gap(pb.system, pb.cost, sol, pair, AffineControl(np.zeros((10, 1, 2)), np.zeros((10, 1))),
                       pb.x0, [5, 10])


def test_gap_impulse_closed_form(scalar):
    pb, sol, pair = scalar
    Nmax = 60
    g = np.zeros((Nmax, 1))
    g[0, 0] = 0.5
    V = AffineControl(np.zeros((Nmax, 1, 2)), g)
    curve = overtaking_gap(pb.system, pb.cost, sol, pair, V, pb.x0, range(1, Nmax + 1))
    # decomposition: gap = |v|^2_Rt - E|X_pert(N)|^2_P + E|X_opt(N)|^2_P, mean shift decays like A_K^N
    rt, p, a = sol.Rtilde[0, 0], sol.P[0, 0], pair.A_K[0, 0]
    mx = 3.0 * a ** curve.N_grid
    shift = 0.5 * a ** (curve.N_grid - 1)
    expect = rt * 0.25 - p * ((mx + shift) ** 2 - mx ** 2)
    np.testing.assert_allclose(curve.gap, expect, rtol=1e-9, atol=1e-9)
    assert curve.tail_inf > 0 and curve.N0 is not None
    assert np.all(curve.gap[curve.N_grid >= curve.N0] > 0)
    assert curve.gap[-1] == pytest.approx(rt * 0.25, rel=1e-9)


def test_gap_feedback_perturbation_unbounded(scalar):
    pb, sol, pair = scalar
    Nmax = 200
    G = np.zeros((Nmax, 1, 2))
    G[:, 0, 0] = 0.05
    curve = overtaking_gap(pb.system, pb.cost, sol, pair, AffineControl(G, np.zeros((Nmax, 1))), pb.x0,
                           [25, 50, 100, 200])
    assert np.all(np.diff(curve.gap) > 0)
    assert curve.gap[-1] > 1.8 * curve.gap[-2]
