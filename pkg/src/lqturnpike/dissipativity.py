"""Strict-dissipativity certificate for the stochastic LQ problem.

The certificate consists of a weight ``S = gamma * Stilde`` and the positive
definite matrix ``H`` such that, for every control,

    l(X, U) - l(Xs, Us) + lt(k, X(k)) - lt(k+1, X(k+1)) = E|(X - Xs, U - Us)|_H^2

with the storage function ``lt(k, X) = -E|X|_P^2 + E|X - Xs|_{P+S}^2``. The
module also evaluates the intermediate storage functions and checks all three
equalities on exact moments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificateNotFound
from .linalg import (as_sym, cholesky, is_positive_definite, lower_eig_bound, max_abs,
                     pivot_margin, solve_linear, symmetrize)
from .model import GaussianState, LtiStochasticSystem, QuadraticCost
from .stationary import MomentTrajectory, StationaryPair, propagate_joint_moments

SIGMA_MIN = 1e-8
SIGMA_MAX = 1e6
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def stilde_margin(sys: LtiStochasticSystem, cost: QuadraticCost, Stilde) -> float:
    """Smallest Cholesky pivot of ``Q + Stilde - A' Stilde A`` (negative if infeasible)."""
    return pivot_margin(symmetrize(cost.Q + Stilde - sys.A.T @ Stilde @ sys.A))


def _search_family(sys, cost, base, grid_points=57, golden_iters=60):
    # maximize sigma * margin(sigma * base) over log(sigma)
    def score(log_s):
        s = math.exp(log_s)
        return s * stilde_margin(sys, cost, s * base)

    lo, hi = math.log(SIGMA_MIN), math.log(SIGMA_MAX)
    grid = np.linspace(lo, hi, grid_points)
    vals = [score(x) for x in grid]
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid_points - 1)]
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = score(c), score(d)
    for _ in range(golden_iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = score(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = score(d)
    cands = [(vals[i], grid[i]), (fc, c), (fd, d)]
    best_val, best_x = max(cands)
    sigma = math.exp(best_x)
    return sigma, stilde_margin(sys, cost, sigma * base)


def find_Stilde(sys: LtiStochasticSystem, cost: QuadraticCost, P=None) -> np.ndarray:
    """Positive definite ``Stilde`` with ``Q + Stilde - A' Stilde A > 0``.

    Searches ``Stilde = sigma * I`` and, failing that, ``Stilde = sigma * P``
    over ``sigma`` in ``[1e-8, 1e6]``. The scalar is chosen to maximize
    ``sigma`` times the smallest Cholesky pivot: a larger storage weight gives a
    tighter lower bound on the storage function, a larger pivot a stricter
    dissipation inequality.
    """
    n = sys.n
    need = 1e-10 * (1.0 + max_abs(cost.Q))
    families = [np.eye(n)]
    if P is not None and is_positive_definite(P):
        families.append(np.asarray(P, dtype=float))
    best = -math.inf
    for base in families:
        sigma, margin = _search_family(sys, cost, base)
        best = max(best, margin)
        if margin >= need:
            return symmetrize(sigma * base)
    raise CertificateNotFound(f"no Stilde in the sigma*I / sigma*P families "
                              f"(best pivot margin {best:.3e})", best_margin=best)


def assemble_H(sys: LtiStochasticSystem, cost: QuadraticCost, Stilde, gamma: float) -> np.ndarray:
    """Matrix of the quadratic form
    ``|x|_Q^2 + |u|_R^2 + |x|_S^2 - |A x + B u|_S^2`` with ``S = gamma * Stilde``."""
    A, B = sys.A, sys.B
    S = gamma * np.asarray(Stilde, dtype=float)
    Qg = cost.Q + S - A.T @ S @ A
    Rg = cost.R - B.T @ S @ B
    off = -A.T @ S @ B
    return symmetrize(np.block([[Qg, off], [off.T, Rg]]))


def _gamma_ok(sys, cost, Stilde, gamma):
    S = gamma * Stilde
    return (is_positive_definite(cost.R - sys.B.T @ S @ sys.B)
            and is_positive_definite(assemble_H(sys, cost, Stilde, gamma)))


def find_gamma(sys: LtiStochasticSystem, cost: QuadraticCost, Stilde, ratio=1.01, max_iter=200):
    """Largest certified ``gamma`` in (0, 1] (to within ``ratio``) with ``H > 0``.

    Halves from 1 until ``H`` and ``R - gamma B'Stilde B`` are Cholesky-certified,
    then bisects between the last failure and the first success. The set of
    admissible ``gamma`` is an interval because ``H`` is affine in ``gamma``.
    """
    Stilde = np.asarray(Stilde, dtype=float)
    gamma = 1.0
    it = 0
    while not _gamma_ok(sys, cost, Stilde, gamma):
        gamma *= 0.5
        it += 1
        if gamma < 1e-12 or it > max_iter:
            raise CertificateNotFound("H is not positive definite for any gamma >= 1e-12")
    if gamma == 1.0:
        return 1.0, assemble_H(sys, cost, Stilde, 1.0)
    ok, bad = gamma, 2.0 * gamma
    for _ in range(max(60, max_iter)):
        if bad / ok <= ratio:
            break
        mid = math.sqrt(ok * bad)
        if _gamma_ok(sys, cost, Stilde, mid):
            ok = mid
        else:
            bad = mid
    return ok, assemble_H(sys, cost, Stilde, ok)


@dataclass(frozen=True)
class DissipativityCertificate:
    P: np.ndarray
    Stilde: np.ndarray
    gamma: float
    S: np.ndarray
    Q_gamma: np.ndarray
    R_gamma: np.ndarray
    H: np.ndarray
    lambda_min_H_lower: float
    Rtilde: np.ndarray
    Stilde_margin: float

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "Stilde": self.Stilde.tolist(), "gamma": self.gamma,
                "S": self.S.tolist(), "Q_gamma": self.Q_gamma.tolist(),
                "R_gamma": self.R_gamma.tolist(), "H": self.H.tolist(),
                "lambda_min_H_lower": self.lambda_min_H_lower,
                "Stilde_margin": self.Stilde_margin}


def certify(sys: LtiStochasticSystem, cost: QuadraticCost, sol, Stilde=None, gamma=None) -> DissipativityCertificate:
    """Build (or verify user-supplied parts of) the dissipativity certificate.

    ``sol`` is the :class:`~lqturnpike.riccati.RiccatiSolution`. An explicit
    ``Stilde`` and/or ``gamma`` override the searches but are still checked.
    """
    n = sys.n
    if Stilde is None:
        Stilde = find_Stilde(sys, cost, sol.P)
    else:
        Stilde = as_sym(Stilde, n, name="Stilde")
        if not is_positive_definite(Stilde):
            raise CertificateNotFound("supplied Stilde is not positive definite")
    margin = stilde_margin(sys, cost, Stilde)
    if not is_positive_definite(cost.Q + Stilde - sys.A.T @ Stilde @ sys.A):
        raise CertificateNotFound("Q + Stilde - A'Stilde A is not positive definite",
                                  best_margin=margin)
    if gamma is None:
        gamma, H = find_gamma(sys, cost, Stilde)
    else:
        gamma = float(gamma)
        if not 0.0 < gamma <= 1.0:
            raise CertificateNotFound(f"gamma must lie in (0, 1], got {gamma}")
        if not _gamma_ok(sys, cost, Stilde, gamma):
            raise CertificateNotFound(f"H is not positive definite for gamma = {gamma}")
        H = assemble_H(sys, cost, Stilde, gamma)
    S = symmetrize(gamma * Stilde)
    lam = lower_eig_bound(H)
    if not lam > 0.0:
        raise CertificateNotFound("could not certify a positive lower eigenvalue bound for H")
    return DissipativityCertificate(
        P=sol.P, Stilde=Stilde, gamma=gamma, S=S, Q_gamma=H[:n, :n].copy(),
        R_gamma=H[n:, n:].copy(), H=H, lambda_min_H_lower=lam,
        Rtilde=symmetrize(cost.R + sys.B.T @ sol.P @ sys.B), Stilde_margin=margin,
    )


def _split(z: GaussianState):
    n = z.dim // 2
    ex = np.hstack([np.eye(n), np.zeros((n, n))])
    ed = np.hstack([np.eye(n), -np.eye(n)])
    return ex, ed


def _eq(z: GaussianState, W, T) -> float:
    m = T @ z.mean
    S = T @ z.cov @ T.T
    return float(np.sum(W * S) + m @ W @ m)


def storage_lambda_hat(P, z: GaussianState) -> float:
    """``-E|X|_P^2`` from the joint law of ``Z = (X, Xs)``."""
    ex, _ = _split(z)
    return -_eq(z, P, ex)


def storage_lambda_bar(P, z: GaussianState) -> float:
    """``-E[|X|_P^2 - |X - Xs|_P^2]``."""
    ex, ed = _split(z)
    return -_eq(z, P, ex) + _eq(z, P, ed)


def storage_lambda_tilde(P, S, z: GaussianState) -> float:
    """``lambda_bar + E|X - Xs|_S^2``."""
    _, ed = _split(z)
    return storage_lambda_bar(P, z) + _eq(z, S, ed)


def lower_bound_M(P, S, Sigma_s) -> float:
    """Infimum of the tilde storage function over all laws of ``X``:
    ``-tr((P + S) S^{-1} P Sigma_s)``.

    Pointwise, ``x'Sx - 2x'(P+S)xs + xs'(P+S)xs`` is minimized at
    ``x = S^{-1}(P+S) xs``; taking expectations over ``Xs ~ N(0, Sigma_s)``
    gives the formula.
    """
    P = np.asarray(P, dtype=float)
    S = np.asarray(S, dtype=float)
    cholesky(S)  # raises NotPositiveDefinite
    Sinv_P = solve_linear(S, P)
    return -float(np.trace((P + S) @ Sinv_P @ np.asarray(Sigma_s, dtype=float)))


@dataclass
class ChainReport:
    lhs_hat: np.ndarray
    rhs_hat: np.ndarray
    lhs_bar: np.ndarray
    rhs_bar: np.ndarray
    lhs_tilde: np.ndarray
    rhs_tilde: np.ndarray
    deviation_second_moment: np.ndarray  # E|(X~, U~)|^2
    lambda_tilde: np.ndarray             # k = 0..N
    notes: list = field(default_factory=list)

    @property
    def residual_hat(self) -> float:
        return float(np.max(np.abs(self.lhs_hat - self.rhs_hat), initial=0.0))

    @property
    def residual_bar(self) -> float:
        return float(np.max(np.abs(self.lhs_bar - self.rhs_bar), initial=0.0))

    @property
    def residual_tilde(self) -> float:
        return float(np.max(np.abs(self.lhs_tilde - self.rhs_tilde), initial=0.0))

    @property
    def max_residual(self) -> float:
        return max(self.residual_hat, self.residual_bar, self.residual_tilde)

    def to_dict(self) -> dict:
        return {"residual_hat": self.residual_hat, "residual_bar": self.residual_bar,
                "residual_tilde": self.residual_tilde, "N": int(self.lhs_hat.size)}


def dissipation_chain(cost: QuadraticCost, cert: DissipativityCertificate, traj: MomentTrajectory) -> ChainReport:
    """Both sides of the three dissipation equalities for k = 0..N-1."""
    N, n = traj.N, traj.n
    P, S, K = cert.P, cert.S, traj.K
    QR = np.block([[cost.Q, np.zeros((n, traj.l))], [np.zeros((traj.l, n)), cost.R]])
    zs = [traj.joint(k) for k in range(N + 1)]
    lam_hat = np.array([storage_lambda_hat(P, z) for z in zs])
    lam_bar = np.array([storage_lambda_bar(P, z) for z in zs])
    lam_tilde = np.array([storage_lambda_tilde(P, S, z) for z in zs])
    supply = np.array([traj.stage_cost(cost, k) - traj.stationary_stage_cost(cost, k) for k in range(N)])
    rhs_hat = np.empty(N)
    rhs_bar = np.empty(N)
    rhs_tilde = np.empty(N)
    dev2 = np.empty(N)
    for k in range(N):
        m, C = traj.control_minus_feedback(k, K)
        rhs_hat[k] = np.sum(cert.Rtilde * C) + m @ cert.Rtilde @ m
        T, t = traj.deviation_map(k)
        rhs_bar[k] = traj.expect_quadratic(k, QR, T, t)
        rhs_tilde[k] = traj.expect_quadratic(k, cert.H, T, t)
        dev2[k] = traj.expect_quadratic(k, np.eye(n + traj.l), T, t)
    return ChainReport(
        lhs_hat=supply + lam_hat[:-1] - lam_hat[1:], rhs_hat=rhs_hat,
        lhs_bar=supply + lam_bar[:-1] - lam_bar[1:], rhs_bar=rhs_bar,
        lhs_tilde=supply + lam_tilde[:-1] - lam_tilde[1:], rhs_tilde=rhs_tilde,
        deviation_second_moment=dev2, lambda_tilde=lam_tilde,
    )


def verify_dissipation_chain(sys, cost, cert, pair: StationaryPair, control, init: GaussianState,
                             N: int, shared_noise=True) -> ChainReport:
    """Propagate exact moments under ``control`` and evaluate the dissipation chain."""
    traj = propagate_joint_moments(sys, control, pair, init, N, shared_noise=shared_noise)
    return dissipation_chain(cost, cert, traj)

