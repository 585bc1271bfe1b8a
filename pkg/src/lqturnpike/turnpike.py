"""Turnpike diagnostics: the counts ``Q_eps`` and ``P_{eps,eta}`` with their
lower bounds, plus the mid-horizon proximity statistics of single paths."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dissipativity import DissipativityCertificate, lower_bound_M, storage_lambda_tilde
from .errors import BoundViolated
from .model import GaussianState, LtiStochasticSystem, QuadraticCost
from .stationary import StationaryPair, propagate_joint_moments

log = logging.getLogger(__name__)

BOUND_RTOL = 1e-9


@dataclass
class EpsResult:
    eps: float
    Q: int
    bound: float

    @property
    def slack(self) -> float:
        return self.Q - self.bound


@dataclass
class ProbResult:
    eps: float
    eta: float
    exact: int
    bound: float
    empirical: int | None = None
    ensemble_size: int | None = None

    @property
    def slack(self) -> float:
        return self.exact - self.bound

    @property
    def empirical_slack(self):
        return None if self.empirical is None else self.empirical - self.bound


@dataclass
class TurnpikeReport:
    N: int
    m: np.ndarray             # E|(X~(k), U~(k))|_H^2, k < N
    cost: float               # J_N(X0, U)
    stationary_cost: float    # N tr(P Sigma_W)
    delta: float
    lambda_tilde0: float
    lambda_tildeN: float
    M: float
    H: np.ndarray
    eps_results: list = field(default_factory=list)
    prob_results: list = field(default_factory=list)
    exceedance: dict = field(default_factory=dict)  # eps -> per-k empirical frequency

    @property
    def C(self) -> float:
        return self.lambda_tilde0 - self.M

    def Q_eps(self, eps: float) -> int:
        return int(np.count_nonzero(self.m <= eps))

    def bound(self, eps: float, eta: float = 1.0) -> float:
        return self.N - (self.delta + self.C) / (eps * eta)

    def to_dict(self) -> dict:
        return {
            "N": self.N, "J_N": self.cost, "stationary_cost": self.stationary_cost,
            "delta": self.delta, "C": self.C, "M": self.M,
            "lambda_tilde_0": self.lambda_tilde0, "lambda_tilde_N": self.lambda_tildeN,
            "m": self.m.tolist(),
            "Q_eps": [{"eps": r.eps, "Q": r.Q, "bound": r.bound, "slack": r.slack}
                      for r in self.eps_results],
            # the joint (eps, eta) sweep goes beyond a single fixed pair
            "P_eps_eta": [{"eps": r.eps, "eta": r.eta, "exact": r.exact, "empirical": r.empirical,
                           "ensemble_size": r.ensemble_size, "bound": r.bound, "slack": r.slack}
                          for r in self.prob_results],
            "sweep": "extension: joint (eps, eta) grid",
        }

    def to_csv(self, path):
        """Per-k rows: k, m_k, then Markov bound ``min(1, m_k/eps)`` and the
        empirical exceedance frequency for each eps."""
        eps_list = [r.eps for r in self.eps_results]
        header = ["k", "m_k"]
        for e in eps_list:
            header += [f"markov_eps={e:g}", f"empirical_eps={e:g}"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.N):
                row = [k, repr(float(self.m[k]))]
                for e in eps_list:
                    row.append(repr(min(1.0, float(self.m[k]) / e)))
                    freq = self.exceedance.get(e)
                    row.append("" if freq is None else repr(float(freq[k])))
                w.writerow(row)


def _check(value, bound, what):
    tol = BOUND_RTOL * (1.0 + abs(bound))
    if value < bound - tol:
        raise BoundViolated(f"{what}: {value} < {bound}")


def moment_turnpike(sys: LtiStochasticSystem, cost: QuadraticCost, cert: DissipativityCertificate,
                    control, pair: StationaryPair, init: GaussianState, N: int, eps_list,
                    shared_noise=True) -> TurnpikeReport:
    """Exact ``m_k``, the constants delta, C, M and ``Q_eps`` for each eps.

    delta is computed as ``J_N(X0, U) - N tr(P Sigma_W)``, the excess of the
    cost over the stationary pair's cost. Raises :class:`BoundViolated` if any
    ``Q_eps < N - (delta + C)/eps``.
    """
    traj = propagate_joint_moments(sys, control, pair, init, N, shared_noise=shared_noise)
    m = np.empty(N)
    for k in range(N):
        T, t = traj.deviation_map(k)
        m[k] = traj.expect_quadratic(k, cert.H, T, t)
    J = traj.cost(cost, N)
    stat = N * float(np.sum(cert.P * sys.Sigma_W))
    lam0 = storage_lambda_tilde(cert.P, cert.S, traj.joint(0))
    lamN = storage_lambda_tilde(cert.P, cert.S, traj.joint(N))
    M = lower_bound_M(cert.P, cert.S, pair.Sigma_s)
    rep = TurnpikeReport(N, m, J, stat, J - stat, lam0, lamN, M, cert.H)
    _check(lamN, M, "storage function below its lower bound")
    for eps in eps_list:
        eps = float(eps)
        r = EpsResult(eps, rep.Q_eps(eps), rep.bound(eps))
        _check(r.Q, r.bound, f"Q_eps bound (N={N}, eps={eps})")
        rep.eps_results.append(r)
    return rep


def exceedance_frequency(report: TurnpikeReport, ensemble, eps: float) -> np.ndarray:
    """Per-k fraction of paths with ``|(x~(k), u~(k))|_H^2 >= eps``."""
    xt = ensemble.x[:, :report.N] - ensemble.xs[:, :report.N]
    ut = ensemble.u[:, :report.N] - ensemble.us[:, :report.N]
    v = np.concatenate([xt, ut], axis=2)
    h = np.einsum("mki,ij,mkj->mk", v, report.H, v)
    return (h >= eps).mean(axis=0)


def probability_turnpike(report: TurnpikeReport, eps: float, eta: float, ensemble=None) -> ProbResult:
    """``P_{eps,eta}`` by the Markov route (``min(1, m_k / eps) <= eta``) and,
    given an ensemble, by empirical exceedance frequencies; with the lower bound."""
    eps, eta = float(eps), float(eta)
    exact = int(np.count_nonzero(np.minimum(1.0, report.m / eps) <= eta))
    res = ProbResult(eps, eta, exact, report.bound(eps, eta))
    _check(res.exact, res.bound, f"P_eps_eta bound (N={report.N}, eps={eps}, eta={eta})")
    if ensemble is not None:
        freq = report.exceedance.get(eps)
        if freq is None or len(freq) != report.N:
            freq = exceedance_frequency(report, ensemble, eps)
            report.exceedance[eps] = freq
        res.empirical = int(np.count_nonzero(freq <= eta))
        res.ensemble_size = ensemble.M
        if res.empirical < res.bound:
            log.warning("empirical P_eps_eta=%d below bound %.3f (N=%d, eps=%g, eta=%g, M=%d)",
                        res.empirical, res.bound, report.N, eps, eta, ensemble.M)
    report.prob_results.append(res)
    return res


@dataclass(frozen=True)
class MidHorizonProximity:
    N: int
    mid_max: float        # max |x(k) - xs(k)| over k in [N/4, 3N/4]
    boundary_max: float   # max over k in (3N/4, N]
    terminal: float       # |x(N) - xs(N)|

    def to_dict(self) -> dict:
        return {"N": self.N, "mid_max": self.mid_max, "boundary_max": self.boundary_max,
                "terminal": self.terminal}


def figure1_metrics(paths: dict, window=(0.25, 0.75)) -> list:
    """Distance of each path to the stationary path inside and after the mid window.

    ``paths`` maps horizon ``N`` to a :class:`~lqturnpike.simulate.Path`.
    """
    out = []
    for N in sorted(paths):
        p = paths[N]
        d = np.linalg.norm(p.x - p.xs, axis=1)
        lo, hi = math.ceil(window[0] * N), math.floor(window[1] * N)
        out.append(MidHorizonProximity(
            N=N,
            mid_max=float(d[lo:hi + 1].max()),
            boundary_max=float(d[hi + 1:].max()) if hi < N else float(d[N]),
            terminal=float(d[N]),
        ))
    return out
