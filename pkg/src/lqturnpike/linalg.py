"""Dense matrix kernel: validated construction, Cholesky classification,
SPD solves and a certified spectral-radius estimate.

There is deliberately no eigensolver here. Positive definiteness is decided by
Cholesky pivots and Schur stability by a Gelfand-sequence estimate that is
cross-checked against convergence of a Lyapunov iteration.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionError, Inconclusive, NotPositiveDefinite

SYM_TOL = 1e-12
PIVOT_RTOL = 1e-12


def as_matrix(m, rows=None, cols=None, name="matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float array, optionally checking its shape."""
    a = np.array(m, dtype=float, ndmin=2)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    if rows is not None and a.shape[0] != rows:
        raise DimensionError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if cols is not None and a.shape[1] != cols:
        raise DimensionError(f"{name} has {a.shape[1]} columns, expected {cols}")
    return a


def as_sym(m, dim=None, name="matrix") -> np.ndarray:
    """Validate near-symmetry and return the symmetrized copy (M + M^T)/2."""
    a = as_matrix(m, dim, dim, name=name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    scale = 1.0 + np.max(np.abs(a), initial=0.0)
    if np.max(np.abs(a - a.T), initial=0.0) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return symmetrize(a)


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def as_vector(v, dim=None, name="vector") -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    if dim is not None and a.shape[0] != dim:
        raise DimensionError(f"{name} has length {a.shape[0]}, expected {dim}")
    return a


def max_abs(m) -> float:
    return float(np.max(np.abs(m), initial=0.0))


def pivot_tol(m: np.ndarray) -> float:
    n = m.shape[0]
    return PIVOT_RTOL * abs(float(np.trace(m))) / max(n, 1)


def _factor(m: np.ndarray, clamp: bool):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"cholesky needs a square matrix, got shape {m.shape}")
    n = m.shape[0]
    tol = pivot_tol(m)
    L = np.zeros_like(m)
    pivots = np.zeros(n)
    for j in range(n):
        d = m[j, j] - L[j, :j] @ L[j, :j]
        pivots[j] = d
        if d > tol:
            L[j, j] = math.sqrt(d)
            L[j + 1:, j] = (m[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
        elif clamp and d >= -tol:
            # zero pivot of a PSD matrix: column stays zero
            continue
        else:
            raise NotPositiveDefinite(j, d)
    return L, pivots


def cholesky(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises :class:`NotPositiveDefinite` (carrying the zero-based pivot index)
    when some pivot is not above ``1e-12 * trace(m) / dim``.
    """
    return _factor(m, clamp=False)[0]


def cholesky_psd(m) -> np.ndarray:
    """Cholesky factor of a positive semidefinite matrix.

    Pivots within the pivot tolerance of zero are clamped (their column is
    left zero); clearly negative pivots still raise.
    """
    return _factor(m, clamp=True)[0]


def pivot_margin(m) -> float:
    """Smallest Cholesky pivot, or the first failing pivot if ``m`` is not PD."""
    try:
        _, pivots = _factor(m, clamp=False)
    except NotPositiveDefinite as exc:
        return float(exc.value)
    return float(pivots.min()) if pivots.size else 0.0


def is_positive_definite(m) -> bool:
    try:
        cholesky(m)
    except NotPositiveDefinite:
        return False
    return True


def is_positive_semidefinite(m) -> bool:
    try:
        cholesky_psd(m)
    except NotPositiveDefinite:
        return False
    return True


def solve_linear(m, rhs) -> np.ndarray:
    """Solve ``m X = rhs`` for symmetric positive definite ``m`` via Cholesky."""
    L = cholesky(m)
    b = np.asarray(rhs, dtype=float)
    if b.shape[0] != L.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, matrix is {L.shape[0]}x{L.shape[0]}")
    y = solve_triangular(L, b, lower=True)
    return solve_triangular(L.T, y, lower=False)


def inverse_spd(m) -> np.ndarray:
    return symmetrize(solve_linear(m, np.eye(np.asarray(m).shape[0])))


def lower_eig_bound(m, rel_tol=1e-6, max_iter=200) -> float:
    """Largest ``c`` found by bisection with ``m - c I`` Cholesky-certified PD.

    Returns a certified lower bound on the smallest eigenvalue (0.0 is never
    certified, so a non-PD ``m`` yields ``-inf``).
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if not is_positive_definite(m):
        return -math.inf
    lo, hi = 0.0, float(np.trace(m)) / n
    eye = np.eye(n)
    if is_positive_definite(m - hi * eye):
        return hi
    for _ in range(max_iter):
        if hi - lo <= rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if is_positive_definite(m - mid * eye):
            lo = mid
        else:
            hi = mid
    return lo


def _gelfand(m: np.ndarray, tol: float, max_rounds: int) -> float:
    # track log ||m^(2^j)||_F with a normalized iterate to avoid overflow
    nrm = np.linalg.norm(m)
    if nrm == 0.0:
        return 0.0
    log_norm = math.log(nrm)
    B = m / nrm
    est = nrm
    for j in range(1, max_rounds + 1):
        B = B @ B
        nb = np.linalg.norm(B)
        if nb == 0.0:
            return 0.0
        log_norm = 2.0 * log_norm + math.log(nb)
        B = B / nb
        new = math.exp(log_norm / 2.0**j)
        if abs(new - est) < tol:
            return new
        est = new
    return est


def lyapunov_iteration_converges(m, max_rounds=60, tol=1e-12) -> bool:
    """Whether ``S <- m S m^T + I`` converges, tested by doubling."""
    m = np.asarray(m, dtype=float)
    S = np.eye(m.shape[0])
    Ap = m.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_rounds):
            inc = Ap @ S @ Ap.T
            if not np.all(np.isfinite(inc)):
                return False
            S = S + inc
            if max_abs(inc) <= tol * (1.0 + max_abs(S)):
                return True
            Ap = Ap @ Ap
            if not np.all(np.isfinite(Ap)):
                return False
    return False


def spectral_radius_estimate(m, tol=1e-6, max_rounds=40, band=1e-4) -> float:
    """Spectral radius from the Gelfand sequence ``||m^(2^j)||_F^(1/2^j)``.

    The estimate is cross-checked against convergence of the Lyapunov
    iteration (which converges iff the radius is below one); disagreement
    inside ``[1 - band, 1 + band]`` raises :class:`Inconclusive`.
    """
    m = as_matrix(m, name="m")
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {m.shape}")
    est = _gelfand(m, tol, max_rounds)
    converges = lyapunov_iteration_converges(m)
    if (est < 1.0) != converges:
        if abs(est - 1.0) <= band:
            raise Inconclusive(f"spectral radius estimate {est:.8f} is within {band} of 1 "
                               f"but Lyapunov iteration {'converges' if converges else 'diverges'}")
        raise Inconclusive(f"spectral radius estimate {est:.8f} disagrees with Lyapunov iteration")
    return est


def is_schur_stable(m) -> bool:
    return spectral_radius_estimate(m) < 1.0


def quad_expect(W, mean, cov) -> float:
    """E[z^T W z] for z with the given mean and covariance."""
    return float(np.sum(W * cov.T) + mean @ W @ mean)
