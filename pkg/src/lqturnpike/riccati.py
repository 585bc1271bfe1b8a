"""Backward Riccati recursion, the algebraic Riccati equation (by value
iteration) and the completion-of-squares decomposition of the cost."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .linalg import as_sym, max_abs, solve_linear, spectral_radius_estimate, symmetrize
from .model import LtiStochasticSystem, QuadraticCost


def riccati_step(A, B, Q, R, P_next):
    """One backward step: returns ``(P, K, R + B'P_next B)``.

    ``K = -(R + B'P_next B)^{-1} B'P_next A`` and
    ``P = A'P_next A + Q - A'P_next B (R + B'P_next B)^{-1} B'P_next A``.
    """
    BtP = B.T @ P_next
    Rt = symmetrize(R + BtP @ B)
    K = -solve_linear(Rt, BtP @ A)
    # A'PA + Q + A'PB K  ==  A'PA + Q - A'PB Rt^{-1} B'PA
    P = symmetrize(A.T @ P_next @ A + Q + (BtP @ A).T @ K)
    return P, K, Rt


@dataclass(frozen=True)
class GainSchedule:
    """Finite-horizon cost-to-go matrices ``P_seq[k]`` (k = 0..N) and gains
    ``K_seq[k]`` (k = 0..N-1)."""

    P_seq: np.ndarray
    K_seq: np.ndarray

    @property
    def N(self) -> int:
        return self.K_seq.shape[0]

    def gain(self, k: int) -> np.ndarray:
        return self.K_seq[k]


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    Rtilde: np.ndarray
    iterations: int
    residual: float
    spectral_radius: float

    def to_dict(self) -> dict:
        return {"P": self.P.tolist(), "K": self.K.tolist(), "Rtilde": self.Rtilde.tolist(),
                "iterations": self.iterations, "residual": self.residual,
                "spectral_radius_AK": self.spectral_radius}


def riccati_backward(sys: LtiStochasticSystem, cost: QuadraticCost, N: int, terminal=None) -> GainSchedule:
    """Backward Riccati recursion from ``P_N(N) = terminal`` (default 0)."""
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    n, l = sys.n, sys.l
    P_seq = np.empty((N + 1, n, n))
    K_seq = np.empty((N, l, n))
    P_seq[N] = np.zeros((n, n)) if terminal is None else as_sym(terminal, n, name="terminal")
    for k in range(N - 1, -1, -1):
        P_seq[k], K_seq[k], _ = riccati_step(sys.A, sys.B, cost.Q, cost.R, P_seq[k + 1])
    P_seq.setflags(write=False)
    K_seq.setflags(write=False)
    return GainSchedule(P_seq, K_seq)


def dare_residual(sys, cost, P) -> float:
    P_next, _, _ = riccati_step(sys.A, sys.B, cost.Q, cost.R, P)
    return max_abs(P - P_next)


_POLISH_STEPS = 200


def solve_dare(sys: LtiStochasticSystem, cost: QuadraticCost, tol=1e-12, max_iter=100_000) -> RiccatiSolution:
    """Stabilizing solution of the DARE by repeated Riccati stepping from ``P = Q``.

    Raises :class:`NoConvergence` if ``|P_{j+1} - P_j|_max`` does not drop to
    ``tol * (1 + |P_j|_max)`` within ``max_iter`` steps, which happens when the
    stabilizability or detectability assumption fails. Once the tolerance is
    met, iteration continues while the update keeps shrinking, so large
    solutions are not left at a residual of ``tol * |P|``.
    """
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    P = Q.copy()
    change = np.inf
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            P_new, _, _ = riccati_step(A, B, Q, R, P)
            change = max_abs(P_new - P)
        if not np.isfinite(change):
            break
        if change <= tol * (1.0 + max_abs(P)):
            P = P_new
            break
        P = P_new
    else:
        raise NoConvergence(f"Riccati value iteration did not converge in {max_iter} steps "
                            f"(last change {change:.3e})", iterations=max_iter, last_change=change)
    if not np.isfinite(change):
        raise NoConvergence("Riccati value iteration diverged", iterations=it, last_change=change)
    # polish: keep stepping while the update still shrinks (stops at the roundoff floor)
    for _ in range(_POLISH_STEPS):
        P_new, _, _ = riccati_step(A, B, Q, R, P)
        step = max_abs(P_new - P)
        if step == 0.0 or step >= change:
            break
        P, change = P_new, step
        it += 1
    _, K, Rt = riccati_step(A, B, Q, R, P)
    rho = spectral_radius_estimate(A + B @ K)
    if rho >= 1.0:
        raise NoConvergence(f"closed loop A + BK is not Schur stable (rho ~ {rho:.6f})", iterations=it)
    return RiccatiSolution(P, K, Rt, it, dare_residual(sys, cost, P), rho)


@dataclass(frozen=True)
class CostDecomposition:
    control_deviation: float  # sum_k E|U(k) - K X(k)|^2_Rtilde
    initial: float            # E|X(0)|^2_P
    terminal: float           # -E|X(N)|^2_P
    noise: float              # N tr(P Sigma_W)
    direct: float             # J_N by stage-cost summation

    @property
    def total(self) -> float:
        return self.control_deviation + self.initial + self.terminal + self.noise

    @property
    def residual(self) -> float:
        return abs(self.total - self.direct)


def modified_cost_decomposition(sys, cost, sol: RiccatiSolution, traj, N=None) -> CostDecomposition:
    """Split ``J_N`` into the four terms of the completion-of-squares identity.

    ``traj`` is a :class:`~lqturnpike.stationary.MomentTrajectory`; every term
    is computed from its exact moments.
    """
    N = traj.N if N is None else N
    if N > traj.N:
        raise ValueError(f"trajectory covers {traj.N} steps, need {N}")
    dev = 0.0
    for k in range(N):
        m, S = traj.control_minus_feedback(k, sol.K)
        dev += float(np.sum(sol.Rtilde * S) + m @ sol.Rtilde @ m)
    x0 = traj.state(0)
    xN = traj.state(N)
    return CostDecomposition(
        control_deviation=dev,
        initial=x0.second_moment(sol.P),
        terminal=-xN.second_moment(sol.P),
        noise=N * float(np.sum(sol.P * sys.Sigma_W)),
        direct=traj.cost(cost, N),
    )
