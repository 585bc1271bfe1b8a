"""Optimal stationary pair and exact Gaussian moment propagation for the
augmented state ``Z(k) = (X(k), Xs(k))``.

``X`` follows an arbitrary control that is affine in ``Z``; ``Xs`` is the
stationary process driven by the steady feedback ``K``. By default both rows
are driven by the same noise sample ``W(k)``, which is what makes pathwise
comparison between the two processes meaningful.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NoConvergence
from .linalg import as_matrix, as_sym, max_abs, spectral_radius_estimate, symmetrize
from .model import GaussianState, LtiStochasticSystem, QuadraticCost
from .riccati import GainSchedule, RiccatiSolution


def solve_lyapunov(A_K, Sigma_W, tol=1e-12, max_rounds=64) -> np.ndarray:
    """Solve ``S = A_K S A_K' + Sigma_W`` by the doubling iteration.

    Each round doubles the number of summed terms of the series
    ``sum_j A_K^j Sigma_W (A_K^j)'``; convergence is declared when the added
    block drops below ``tol`` relative to the running sum.
    """
    A_K = as_matrix(A_K, name="A_K")
    Sigma_W = as_sym(Sigma_W, A_K.shape[0], name="Sigma_W")
    if spectral_radius_estimate(A_K) >= 1.0:
        raise NoConvergence("A_K is not Schur stable; Lyapunov series diverges")
    S = Sigma_W.copy()
    Ap = A_K.copy()
    for _ in range(max_rounds):
        inc = Ap @ S @ Ap.T
        S = symmetrize(S + inc)
        if max_abs(inc) <= tol * (1.0 + max_abs(S)):
            return S
        Ap = Ap @ Ap
    raise NoConvergence(f"Lyapunov doubling did not converge in {max_rounds} rounds")


@dataclass(frozen=True)
class StationaryPair:
    """``Xs(k) ~ N(0, Sigma_s)`` with ``Us(k) = K Xs(k)``."""

    K: np.ndarray
    mean: np.ndarray
    Sigma_s: np.ndarray
    A_K: np.ndarray
    lyapunov_residual: float

    def stage_cost(self, cost: QuadraticCost) -> float:
        W = cost.Q + self.K.T @ cost.R @ self.K
        return float(np.sum(W * self.Sigma_s))


def build_stationary_pair(sys: LtiStochasticSystem, sol: RiccatiSolution) -> StationaryPair:
    A_K = sys.A + sys.B @ sol.K
    Sigma_s = solve_lyapunov(A_K, sys.Sigma_W)
    resid = max_abs(Sigma_s - A_K @ Sigma_s @ A_K.T - sys.Sigma_W)
    if resid > 1e-9 * (1.0 + max_abs(Sigma_s)):
        raise NoConvergence(f"Lyapunov residual {resid:.3e} too large")
    return StationaryPair(sol.K, np.zeros(sys.n), Sigma_s, A_K, resid)


@dataclass(frozen=True)
class AffineControl:
    """``U(k) = G[k] @ Z(k) + g[k]`` with ``Z = (X, Xs)``.

    ``G`` has shape (N, l, 2n) and ``g`` shape (N, l).
    """

    G: np.ndarray
    g: np.ndarray

    @property
    def N(self) -> int:
        return self.G.shape[0]

    @classmethod
    def from_schedule(cls, gains: GainSchedule) -> "AffineControl":
        N, l, n = gains.K_seq.shape
        G = np.zeros((N, l, 2 * n))
        G[:, :, :n] = gains.K_seq
        return cls(G, np.zeros((N, l)))

    @classmethod
    def steady(cls, K, N: int) -> "AffineControl":
        K = np.asarray(K, dtype=float)
        l, n = K.shape
        G = np.zeros((N, l, 2 * n))
        G[:, :, :n] = K
        return cls(G, np.zeros((N, l)))

    def plus(self, other: "AffineControl") -> "AffineControl":
        if other.G.shape != self.G.shape:
            raise DimensionError("affine controls have different shapes")
        return AffineControl(self.G + other.G, self.g + other.g)

    def truncate(self, N: int) -> "AffineControl":
        if N > self.N:
            raise DimensionError(f"control covers {self.N} steps, need {N}")
        return AffineControl(self.G[:N], self.g[:N])


def as_affine_control(control, N: int, n: int) -> AffineControl:
    if isinstance(control, AffineControl):
        ctrl = control
    elif isinstance(control, GainSchedule):
        ctrl = AffineControl.from_schedule(control)
    else:
        ctrl = AffineControl.steady(control, N)
    if ctrl.N < N:
        raise DimensionError(f"control covers {ctrl.N} steps, horizon is {N}")
    if ctrl.G.shape[2] != 2 * n:
        raise DimensionError(f"control gain has {ctrl.G.shape[2]} columns, expected {2 * n}")
    return ctrl.truncate(N)


class MomentTrajectory:
    """Exact means and covariances of ``Z(k)`` for k = 0..N.

    Every expectation the package needs (costs, storage functions, the turnpike
    distance) is a quadratic form in an affine image of ``Z(k)``, so it is
    evaluated from these moments without sampling.
    """

    def __init__(self, mean, cov, control: AffineControl, K, n):
        self.mean = mean
        self.cov = cov
        self.control = control
        self.K = np.asarray(K, dtype=float)
        self.n = n
        self.mean.setflags(write=False)
        self.cov.setflags(write=False)

    @property
    def N(self) -> int:
        return self.mean.shape[0] - 1

    @property
    def l(self) -> int:
        return self.K.shape[0]

    def joint(self, k) -> GaussianState:
        return GaussianState(self.mean[k], self.cov[k])

    def state(self, k) -> GaussianState:
        n = self.n
        return GaussianState(self.mean[k, :n], self.cov[k, :n, :n])

    def stationary_state(self, k) -> GaussianState:
        n = self.n
        return GaussianState(self.mean[k, n:], self.cov[k, n:, n:])

    def affine_moments(self, k, T, t=None):
        """Mean and covariance of ``T @ Z(k) + t``."""
        m = T @ self.mean[k]
        if t is not None:
            m = m + t
        return m, symmetrize(T @ self.cov[k] @ T.T)

    def expect_quadratic(self, k, W, T, t=None) -> float:
        """E[|T Z(k) + t|^2_W]."""
        m, S = self.affine_moments(k, T, t)
        return float(np.sum(W * S) + m @ W @ m)

    # selector matrices on Z
    def sel_x(self):
        return np.hstack([np.eye(self.n), np.zeros((self.n, self.n))])

    def sel_xs(self):
        return np.hstack([np.zeros((self.n, self.n)), np.eye(self.n)])

    def sel_diff(self):
        return np.hstack([np.eye(self.n), -np.eye(self.n)])

    def control_moments(self, k):
        return self.affine_moments(k, self.control.G[k], self.control.g[k])

    def control_minus_feedback(self, k, K):
        """Moments of ``U(k) - K X(k)``."""
        T = self.control.G[k] - K @ self.sel_x()
        return self.affine_moments(k, T, self.control.g[k])

    def deviation_map(self, k):
        """``(T, t)`` with ``(X~(k), U~(k)) = T Z(k) + t``, ``U~ = U - K Xs``."""
        n = self.n
        T = np.vstack([self.sel_diff(), self.control.G[k] - self.K @ self.sel_xs()])
        t = np.concatenate([np.zeros(n), self.control.g[k]])
        return T, t

    def stage_cost(self, cost: QuadraticCost, k) -> float:
        mu, Su = self.control_moments(k)
        return self.state(k).second_moment(cost.Q) + float(np.sum(cost.R * Su) + mu @ cost.R @ mu)

    def stationary_stage_cost(self, cost: QuadraticCost, k) -> float:
        W = cost.Q + self.K.T @ cost.R @ self.K
        return self.stationary_state(k).second_moment(W)

    def cost(self, cost: QuadraticCost, N=None) -> float:
        """J_N by direct summation of expected stage costs."""
        N = self.N if N is None else N
        return sum(self.stage_cost(cost, k) for k in range(N))

    def difference_second_moment(self, k) -> float:
        """E|X(k) - Xs(k)|^2."""
        return self.expect_quadratic(k, np.eye(self.n), self.sel_diff())

    def to_csv(self, path):
        """Write k, mean components, covariance upper triangle (row-major)."""
        d = 2 * self.n
        iu = np.triu_indices(d)
        header = ["k"] + [f"mean_{i}" for i in range(d)] + [f"cov_{i}_{j}" for i, j in zip(*iu)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(self.N + 1):
                w.writerow([k] + [repr(float(v)) for v in self.mean[k]]
                           + [repr(float(v)) for v in self.cov[k][iu]])


def propagate_joint_moments(sys: LtiStochasticSystem, control, pair: StationaryPair,
                            init: GaussianState, N: int, shared_noise=True) -> MomentTrajectory:
    """Exact moment recursion for ``Z(k) = (X(k), Xs(k))``, k = 0..N.

    ``control`` may be a :class:`GainSchedule`, a steady gain matrix or an
    :class:`AffineControl`. ``init`` is either the law of ``X(0)`` (taken
    independent of ``Xs(0) ~ N(0, Sigma_s)``) or a full joint law of ``Z(0)``.
    With ``shared_noise`` the same ``W(k)`` drives both rows; otherwise the
    stationary process gets an independent copy.
    """
    n = sys.n
    if N < 0:
        raise ValueError("horizon must be nonnegative")
    ctrl = as_affine_control(control, N, n) if N > 0 else AffineControl(
        np.zeros((0, sys.l, 2 * n)), np.zeros((0, sys.l)))
    if init.dim == n:
        m0 = np.concatenate([init.mean, pair.mean])
        S0 = np.zeros((2 * n, 2 * n))
        S0[:n, :n] = init.cov
        S0[n:, n:] = pair.Sigma_s
    elif init.dim == 2 * n:
        m0, S0 = init.mean, init.cov
    else:
        raise DimensionError(f"initial law has dimension {init.dim}, expected {n} or {2 * n}")

    SW = sys.Sigma_W
    noise = np.block([[SW, SW if shared_noise else np.zeros_like(SW)],
                      [SW if shared_noise else np.zeros_like(SW), SW]])
    mean = np.empty((N + 1, 2 * n))
    cov = np.empty((N + 1, 2 * n, 2 * n))
    mean[0], cov[0] = m0, S0
    Bz = np.vstack([sys.B, np.zeros((n, sys.l))])
    F0 = np.zeros((2 * n, 2 * n))
    F0[:n, :n] = sys.A
    F0[n:, n:] = pair.A_K
    for k in range(N):
        F = F0 + Bz @ ctrl.G[k]
        mean[k + 1] = F @ mean[k] + Bz @ ctrl.g[k]
        cov[k + 1] = symmetrize(F @ cov[k] @ F.T + noise)
    return MomentTrajectory(mean, cov, ctrl, pair.K, n)
