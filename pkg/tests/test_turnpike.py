import numpy as np
import pytest

from lqturnpike.dissipativity import certify
from lqturnpike.errors import BoundViolated
from lqturnpike.model import GaussianState, LtiStochasticSystem
from lqturnpike.riccati import riccati_backward, solve_dare
from lqturnpike.simulate import sample_noise, simulate_ensemble, simulate_pair
from lqturnpike.stationary import build_stationary_pair
from lqturnpike.turnpike import _check, figure1_metrics, moment_turnpike, probability_turnpike

EPS = [0.5, 1.0, 2.0, 5.0]


@pytest.fixture(scope="module")
def cert(scalar):
    pb, sol, _ = scalar
    return certify(pb.system, pb.cost, sol)


def _report(scalar, cert, N, eps=EPS):
    pb, _, pair = scalar
    return moment_turnpike(pb.system, pb.cost, cert, riccati_backward(pb.system, pb.cost, N), pair, pb.x0, N, eps)


def test_noise_free_zero_start(scalar):
    pb, _, _ = scalar
    sys = LtiStochasticSystem([[1.2]], [[1.0]], [[0.0]])
    sol = solve_dare(sys, pb.cost)
    pair = build_stationary_pair(sys, sol)
    cert = certify(sys, pb.cost, sol)
    rep = moment_turnpike(sys, pb.cost, cert, riccati_backward(sys, pb.cost, 20), pair,
                          GaussianState.deterministic([0.0]), 20, [1e-6, 1.0])
    assert not rep.m.any()
    assert [r.Q for r in rep.eps_results] == [20, 20]


def test_bound_and_monotone(scalar, cert):
    rep = _report(scalar, cert, 20)
    Qs = [r.Q for r in rep.eps_results]
    assert Qs == sorted(Qs)
    assert all(r.Q >= r.bound for r in rep.eps_results)
    assert rep.C == pytest.approx(rep.lambda_tilde0 - rep.M)
    assert rep.lambda_tildeN >= rep.M


def test_eps_below_min(scalar, cert):
    rep = _report(scalar, cert, 20)
    eps = 0.5 * rep.m.min()
    assert rep.Q_eps(eps) == 0
    assert rep.bound(eps) <= 0


def test_probability_routes(scalar, cert):
    pb, _, pair = scalar
    N = 20
    rep = _report(scalar, cert, N)
    assert probability_turnpike(rep, 2.0, 1.0).exact == N
    assert probability_turnpike(rep, 2.0, 1.5).exact == N
    r = probability_turnpike(rep, 2.0, 0.5)
    assert r.exact >= r.bound
    counts = [[probability_turnpike(rep, e, h).exact for h in (0.1, 0.25, 0.5)] for e in EPS]
    assert all(row == sorted(row) for row in counts)
    assert all(list(col) == sorted(col) for col in zip(*counts))
    ens = simulate_ensemble(pb.system, riccati_backward(pb.system, pb.cost, N), pair, pb.x0, 8, 10_000)
    for e in EPS:
        for h in (0.1, 0.25, 0.5):
            res = probability_turnpike(rep, e, h, ens)
            assert res.empirical >= res.exact
            assert res.empirical >= res.bound


def test_delta_bounded_in_N(scalar, cert):
    deltas = [_report(scalar, cert, N).delta for N in (5, 10, 20, 40, 80)]
    assert np.isfinite(deltas).all()
    # delta(N) settles: late differences are tiny compared with the first
    assert abs(deltas[-1] - deltas[-2]) < 1e-6 * (1 + abs(deltas[-1]))


def test_coupled_steady_start(scalar, cert):
    pb, sol, pair = scalar
    s = pair.Sigma_s[0, 0]
    init = GaussianState([0.0, 0.0], [[s, s], [s, s]])
    rep = moment_turnpike(pb.system, pb.cost, cert, sol.K, pair, init, 30, [1e-9])
    assert np.abs(rep.m).max() <= 1e-9
    assert rep.eps_results[0].Q == 30


def test_violation_raises():
    with pytest.raises(BoundViolated):
        _check(3, 4.5, "test")
    _check(4.5 - 1e-12, 4.5, "within tolerance")


def test_figure1_metrics(scalar):
    pb, sol, pair = scalar
    noise = sample_noise(3, 40, pb.system.Sigma_W)
    paths = {N: simulate_pair(pb.system, riccati_backward(pb.system, pb.cost, N), pair, pb.x0, noise, 4)
             for N in (10, 20, 40)}
    mets = figure1_metrics(paths)
    assert [m.N for m in mets] == [10, 20, 40]
    assert all(m.mid_max < m.terminal for m in mets)
    # zero noise and coupled start: everything vanishes
    sys = LtiStochasticSystem([[1.2]], [[1.0]], [[0.0]])
    sol0 = solve_dare(sys, pb.cost)
    pair0 = build_stationary_pair(sys, sol0)
    p = simulate_pair(sys, riccati_backward(sys, pb.cost, 10), pair0, GaussianState.deterministic([0.0]),
                      sample_noise(0, 10, [[0.0]]), 0)
    m = figure1_metrics({10: p})[0]
    assert m.mid_max == m.boundary_max == m.terminal == 0.0
