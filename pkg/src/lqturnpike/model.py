"""Problem definition: the linear plant with additive Gaussian noise, the
quadratic stage cost, Gaussian state distributions and validation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, NotPositiveDefinite
from .linalg import as_matrix, as_sym, as_vector, cholesky, cholesky_psd, max_abs, symmetrize


@dataclass(frozen=True)
class LtiStochasticSystem:
    """``X(k+1) = A X(k) + B U(k) + W(k)`` with ``W(k) ~ N(0, Sigma_W)`` i.i.d."""

    A: np.ndarray
    B: np.ndarray
    Sigma_W: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise DimensionError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, rows=n, name="B")
        Sigma_W = as_sym(self.Sigma_W, n, name="Sigma_W")
        try:
            cholesky_psd(Sigma_W)
        except NotPositiveDefinite as exc:
            raise ValueError("Sigma_W is not positive semidefinite") from exc
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Sigma_W", Sigma_W)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def l(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class QuadraticCost:
    """Stage cost ``E[|X|_Q^2 + |U|_R^2]`` with ``Q >= 0`` and ``R > 0``."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = as_sym(self.Q, name="Q")
        R = as_sym(self.R, name="R")
        try:
            cholesky(R)
        except NotPositiveDefinite as exc:
            raise ValueError("R must be positive definite") from exc
        try:
            cholesky(Q + 1e-12 * np.eye(Q.shape[0]))
        except NotPositiveDefinite as exc:
            raise ValueError("Q must be positive semidefinite") from exc
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)


@dataclass(frozen=True)
class GaussianState:
    """Mean and covariance of a Gaussian random vector."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean, name="mean")
        cov = as_sym(self.cov, mean.shape[0], name="cov")
        try:
            cholesky_psd(cov)
        except NotPositiveDefinite as exc:
            raise ValueError("covariance is not positive semidefinite") from exc
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def second_moment(self, W=None) -> float:
        """E[x^T W x] (``W`` defaults to the identity)."""
        if W is None:
            return float(np.trace(self.cov) + self.mean @ self.mean)
        W = np.asarray(W, dtype=float)
        return float(np.sum(W * self.cov) + self.mean @ W @ self.mean)

    @classmethod
    def deterministic(cls, x) -> "GaussianState":
        x = as_vector(x)
        return cls(x, np.zeros((x.size, x.size)))


@dataclass(frozen=True)
class ValidationReport:
    n: int
    l: int
    stabilizable: bool
    detectable: bool
    # both flags come from iteration-convergence proxies, not rank tests
    method: str = "proxy"
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.stabilizable and self.detectable

    def to_dict(self) -> dict:
        return {"n": self.n, "l": self.l, "stabilizable": self.stabilizable,
                "detectable": self.detectable, "method": self.method, "notes": list(self.notes)}


def _riccati_converges(A, B, max_iter=10_000, tol=1e-12) -> bool:
    # value iteration for the DARE with Q = I, R = I, started at P = I
    n, l = B.shape
    P = np.eye(n)
    for _ in range(max_iter):
        BtP = B.T @ P
        G = np.eye(l) + BtP @ B
        P_new = A.T @ P @ A + np.eye(n) - A.T @ P @ B @ np.linalg.solve(G, BtP @ A)
        P_new = symmetrize(P_new)
        if not np.all(np.isfinite(P_new)) or max_abs(P_new) > 1e15:
            return False
        if max_abs(P_new - P) <= tol * (1.0 + max_abs(P)):
            return True
        P = P_new
    return False


def validate(sys: LtiStochasticSystem, cost: QuadraticCost) -> ValidationReport:
    """Dimension checks plus stabilizability/detectability proxies.

    (A, B) counts as stabilizable when value iteration of the DARE with unit
    weights converges within 10 000 steps; (A, Q^{1/2}) counts as detectable
    when the same holds for the dual pair (A^T, L) with Q = L L^T.
    """
    n, l = sys.n, sys.l
    if cost.Q.shape != (n, n):
        raise DimensionError(f"Q has shape {cost.Q.shape}, expected {(n, n)}")
    if cost.R.shape != (l, l):
        raise DimensionError(f"R has shape {cost.R.shape}, expected {(l, l)}")
    stab = _riccati_converges(sys.A, sys.B)
    L = cholesky_psd(cost.Q)
    detect = _riccati_converges(sys.A.T, L)
    notes = []
    if not stab:
        notes.append("(A, B) failed the stabilizability proxy")
    if not detect:
        notes.append("(A, Q^1/2) failed the detectability proxy")
    return ValidationReport(n, l, stab, detect, notes=notes)


def stage_cost(cost: QuadraticCost, state: GaussianState, ctrl_mean, ctrl_cov, cross_cov=None) -> float:
    """Expected stage cost ``tr(Q Sx) + mx'Q mx + tr(R Su) + mu'R mu``.

    ``cross_cov`` (state/control covariance) does not enter the value; it is
    accepted so callers can pass joint moments unchanged.
    """
    mu = as_vector(ctrl_mean, cost.R.shape[0], name="ctrl_mean")
    Su = symmetrize(as_matrix(ctrl_cov, mu.size, mu.size, name="ctrl_cov"))
    return state.second_moment(cost.Q) + float(np.sum(cost.R * Su) + mu @ cost.R @ mu)


@dataclass(frozen=True)
class Problem:
    system: LtiStochasticSystem
    cost: QuadraticCost
    x0: GaussianState

    def to_dict(self) -> dict:
        return {
            "A": self.system.A.tolist(),
            "B": self.system.B.tolist(),
            "Q": self.cost.Q.tolist(),
            "R": self.cost.R.tolist(),
            "Sigma_W": self.system.Sigma_W.tolist(),
            "x0_mean": self.x0.mean.tolist(),
            "x0_cov": self.x0.cov.tolist(),
        }


def problem_from_dict(d: dict) -> Problem:
    """Build a :class:`Problem` from the row-major JSON problem schema."""
    missing = [k for k in ("A", "B", "Q", "R", "Sigma_W") if k not in d]
    if missing:
        raise KeyError(f"problem is missing keys: {', '.join(missing)}")
    system = LtiStochasticSystem(d["A"], d["B"], d["Sigma_W"])
    cost = QuadraticCost(d["Q"], d["R"])
    n = system.n
    mean = d.get("x0_mean", [0.0] * n)
    cov = d.get("x0_cov", np.zeros((n, n)))
    x0 = GaussianState(as_vector(mean, n, name="x0_mean"), as_sym(cov, n, name="x0_cov"))
    validate(system, cost)
    return Problem(system, cost, x0)


def load_problem(path) -> Problem:
    with open(Path(path)) as fh:
        return problem_from_dict(json.load(fh))


def scalar_example() -> Problem:
    """Scalar example: A=1.2, B=1, Q=1, R=5, W ~ N(0, 10), X0 ~ N(3, 1.5)."""
    return problem_from_dict({
        "A": [[1.2]], "B": [[1.0]], "Q": [[1.0]], "R": [[5.0]], "Sigma_W": [[10.0]],
        "x0_mean": [3.0], "x0_cov": [[1.5]],
    })
