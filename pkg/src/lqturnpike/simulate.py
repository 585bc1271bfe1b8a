"""Monte Carlo paths of the controlled process and the stationary process
under one shared noise realization, Monte Carlo cost estimates and the
exact overtaking-gap curve."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePerturbation, DimensionError
from .linalg import cholesky_psd
from .model import GaussianState, LtiStochasticSystem, QuadraticCost
from .rng import derive_seed, standard_normals
from .stationary import AffineControl, StationaryPair, as_affine_control, propagate_joint_moments

# sub-stream tags
TAG_NOISE = 1
TAG_X0 = 2
TAG_XS0 = 3


@dataclass(frozen=True)
class NoiseRealization:
    seed: int
    samples: np.ndarray  # (N, n)

    @property
    def N(self) -> int:
        return self.samples.shape[0]


def sample_noise(seed: int, N: int, Sigma_W) -> NoiseRealization:
    """``N`` draws of ``W ~ N(0, Sigma_W)``; sample ``(k, i)`` uses normal index ``k*n + i``."""
    Sigma_W = np.atleast_2d(np.asarray(Sigma_W, dtype=float))
    n = Sigma_W.shape[0]
    L = cholesky_psd(Sigma_W)
    z = standard_normals(int(seed), np.arange(N * n, dtype=np.uint64)).reshape(N, n)
    w = z @ L.T
    w.setflags(write=False)
    return NoiseRealization(int(seed), w)


def sample_gaussian(seed: int, dist: GaussianState, count=None) -> np.ndarray:
    """Draw from ``dist`` using stream ``seed`` (one vector, or ``count`` rows)."""
    n = dist.dim
    L = cholesky_psd(dist.cov)
    rows = 1 if count is None else count
    z = standard_normals(int(seed), np.arange(rows * n, dtype=np.uint64)).reshape(rows, n)
    x = dist.mean + z @ L.T
    return x[0] if count is None else x


@dataclass(frozen=True)
class Path:
    x: np.ndarray   # (N+1, n)
    xs: np.ndarray  # (N+1, n)
    u: np.ndarray   # (N, l)
    us: np.ndarray  # (N, l)
    w: np.ndarray   # (N, n)
    stage_costs: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.u.shape[0]


def _roll(sys, ctrl: AffineControl, K, x0, xs0, w):
    # x0, xs0: (M, n); w: (M, N, n) -- vectorized over paths
    M, N, n = w.shape
    l = sys.l
    x = np.empty((M, N + 1, n))
    xs = np.empty((M, N + 1, n))
    u = np.empty((M, N, l))
    us = np.empty((M, N, l))
    x[:, 0], xs[:, 0] = x0, xs0
    for k in range(N):
        z = np.concatenate([x[:, k], xs[:, k]], axis=1)
        u[:, k] = z @ ctrl.G[k].T + ctrl.g[k]
        us[:, k] = xs[:, k] @ K.T
        x[:, k + 1] = x[:, k] @ sys.A.T + u[:, k] @ sys.B.T + w[:, k]
        xs[:, k + 1] = xs[:, k] @ sys.A.T + us[:, k] @ sys.B.T + w[:, k]
    return x, xs, u, us


def _realized_costs(cost, x, u):
    if cost is None:
        return None
    return (np.einsum("...i,ij,...j->...", x[..., :-1, :], cost.Q, x[..., :-1, :])
            + np.einsum("...i,ij,...j->...", u, cost.R, u))


def simulate_pair(sys: LtiStochasticSystem, control, pair: StationaryPair, x0_dist: GaussianState,
                  noise: NoiseRealization, path_seed: int, cost: QuadraticCost | None = None,
                  N: int | None = None) -> Path:
    """Roll the controlled and the stationary recursion forward with the same noise.

    ``x(0) ~ x0_dist`` and ``xs(0) ~ N(0, Sigma_s)`` are drawn independently from
    two sub-streams of ``path_seed``. ``control`` is a gain schedule, steady
    gain or :class:`AffineControl`; its horizon fixes ``N`` unless given, and
    the noise realization must cover at least ``N`` steps (a longer realization
    is truncated, so one ``w`` can be shared by several horizons).
    """
    if N is None:
        N = control.N if hasattr(control, "N") else noise.N
    if noise.N < N:
        raise DimensionError(f"noise covers {noise.N} steps, horizon is {N}")
    ctrl = as_affine_control(control, N, sys.n)
    x0 = sample_gaussian(derive_seed(path_seed, TAG_X0), x0_dist)
    xs0 = sample_gaussian(derive_seed(path_seed, TAG_XS0), GaussianState(pair.mean, pair.Sigma_s))
    w = noise.samples[:N]
    x, xs, u, us = _roll(sys, ctrl, pair.K, x0[None], xs0[None], w[None])
    return Path(x[0], xs[0], u[0], us[0], w.copy(), _realized_costs(cost, x[0], u[0]))


@dataclass(frozen=True)
class PathEnsemble:
    """Arrays with a leading path axis; path ``i`` is reproducible on its own."""

    seed: int
    x: np.ndarray   # (M, N+1, n)
    xs: np.ndarray
    u: np.ndarray   # (M, N, l)
    us: np.ndarray
    w: np.ndarray   # (M, N, n)
    stage_costs: np.ndarray | None

    @property
    def M(self) -> int:
        return self.x.shape[0]

    @property
    def N(self) -> int:
        return self.u.shape[1]

    def path(self, i: int) -> Path:
        sc = None if self.stage_costs is None else self.stage_costs[i]
        return Path(self.x[i], self.xs[i], self.u[i], self.us[i], self.w[i], sc)

    def to_csv(self, path, max_paths=None):
        """Rows ``path_id, k, x.., xs.., u.., us.., w..`` (controls/noise blank at k = N)."""
        M = self.M if max_paths is None else min(max_paths, self.M)
        n, l = self.x.shape[2], self.u.shape[2]
        header = (["path_id", "k"] + [f"x{i}" for i in range(n)] + [f"xs{i}" for i in range(n)]
                  + [f"u{i}" for i in range(l)] + [f"us{i}" for i in range(l)]
                  + [f"w{i}" for i in range(n)])
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(header)
            for p in range(M):
                for k in range(self.N + 1):
                    row = [p, k] + [repr(float(v)) for v in self.x[p, k]] + [repr(float(v)) for v in self.xs[p, k]]
                    if k < self.N:
                        row += ([repr(float(v)) for v in self.u[p, k]] + [repr(float(v)) for v in self.us[p, k]]
                                + [repr(float(v)) for v in self.w[p, k]])
                    else:
                        row += [""] * (2 * l + n)
                    wr.writerow(row)


def simulate_ensemble(sys: LtiStochasticSystem, control, pair: StationaryPair, x0_dist: GaussianState,
                      seed: int, M: int, N: int | None = None, cost: QuadraticCost | None = None) -> PathEnsemble:
    """``M`` independent paths, each with its own noise realization.

    Path ``i`` equals ``simulate_pair`` with noise seed
    ``derive_seed(seed, i, TAG_NOISE)`` and path seed ``derive_seed(seed, i)``,
    so the result does not depend on how paths are batched.
    """
    if M < 1:
        raise ValueError("ensemble size must be >= 1")
    if N is None:
        N = control.N
    n = sys.n
    ctrl = as_affine_control(control, N, n)
    L_w = cholesky_psd(sys.Sigma_W)
    L_0 = cholesky_psd(x0_dist.cov)
    L_s = cholesky_psd(pair.Sigma_s)
    ids = np.arange(M, dtype=np.uint64)
    path_seeds = derive_seed(np.uint64(seed), ids)
    noise_seeds = derive_seed(path_seeds, TAG_NOISE)
    x0_seeds = derive_seed(path_seeds, TAG_X0)
    xs0_seeds = derive_seed(path_seeds, TAG_XS0)
    z = standard_normals(noise_seeds[:, None], np.arange(N * n, dtype=np.uint64)[None, :]).reshape(M, N, n)
    w = z @ L_w.T
    idx = np.arange(n, dtype=np.uint64)[None, :]
    x0 = x0_dist.mean + standard_normals(x0_seeds[:, None], idx) @ L_0.T
    xs0 = pair.mean + standard_normals(xs0_seeds[:, None], idx) @ L_s.T
    x, xs, u, us = _roll(sys, ctrl, pair.K, x0, xs0, w)
    return PathEnsemble(int(seed), x, xs, u, us, w, _realized_costs(cost, x, u))


def ensemble_noise(seed: int, i: int, N: int, Sigma_W) -> NoiseRealization:
    """The noise realization used for path ``i`` of ``simulate_ensemble(seed=...)``."""
    return sample_noise(derive_seed(seed, i, TAG_NOISE), N, Sigma_W)


def empirical_cost(ensemble: PathEnsemble):
    """Sample mean and standard error of the realized ``J_N`` over paths."""
    if ensemble.stage_costs is None:
        raise ValueError("ensemble was simulated without a cost")
    if ensemble.M < 2:
        raise ValueError("standard error needs at least two paths")
    J = ensemble.stage_costs.sum(axis=1)
    return float(J.mean()), float(J.std(ddof=1) / math.sqrt(ensemble.M))


def ensemble_summary(ensemble: PathEnsemble, exact_cost=None) -> dict:
    out = {"seed": ensemble.seed, "M": ensemble.M, "N": ensemble.N}
    if ensemble.stage_costs is not None and ensemble.M >= 2:
        mean, se = empirical_cost(ensemble)
        out.update(empirical_cost=mean, standard_error=se)
        if exact_cost is not None:
            out.update(exact_cost=exact_cost, z_score=(mean - exact_cost) / se if se > 0 else 0.0)
    return out


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class GapCurve:
    N_grid: np.ndarray
    gap: np.ndarray            # J_N(U* + V) - J_N(U*)
    tail_inf: float
    N0: int | None
    perturbation_energy: np.ndarray  # E|V(k)|^2_Rtilde, k < max N

    def to_dict(self) -> dict:
        return {"N": self.N_grid.tolist(), "gap": self.gap.tolist(), "tail_inf": self.tail_inf,
                "N0": self.N0}


def overtaking_gap(sys: LtiStochasticSystem, cost: QuadraticCost, sol, pair: StationaryPair,
                   perturbation: AffineControl, init: GaussianState, N_grid) -> GapCurve:
    """Exact ``J_N(U* + V) - J_N(U*)`` over a grid of horizons.

    ``U* = K X`` is the steady feedback; ``V`` is an :class:`AffineControl`
    added on top of it. The tail is the second half of the (sorted) grid;
    ``N0`` is the first grid point from which the gap stays above half the
    tail infimum (``None`` if that infimum is not positive).
    """
    N_grid = np.array(sorted(set(int(N) for N in N_grid)))
    Nmax = int(N_grid[-1])
    V = as_affine_control(perturbation, Nmax, sys.n)
    base = AffineControl.steady(sol.K, Nmax)
    t_opt = propagate_joint_moments(sys, base, pair, init, Nmax)
    t_pert = propagate_joint_moments(sys, base.plus(V), pair, init, Nmax)
    energy = np.empty(Nmax)
    for k in range(Nmax):
        m, S = t_pert.affine_moments(k, V.G[k], V.g[k])
        energy[k] = np.sum(sol.Rtilde * S) + m @ sol.Rtilde @ m
    if np.all(energy <= 1e-14 * (1.0 + np.abs(energy).max(initial=0.0))):
        raise DegeneratePerturbation("perturbation is almost surely zero on the horizon")
    c_opt = np.concatenate([[0.0], np.cumsum([t_opt.stage_cost(cost, k) for k in range(Nmax)])])
    c_pert = np.concatenate([[0.0], np.cumsum([t_pert.stage_cost(cost, k) for k in range(Nmax)])])
    gap = c_pert[N_grid] - c_opt[N_grid]
    tail = gap[len(gap) // 2:]
    tail_inf = float(tail.min())
    N0 = None
    if tail_inf > 0:
        above = gap > 0.5 * tail_inf
        for i in range(len(gap)):
            if above[i:].all():
                N0 = int(N_grid[i])
                break
    return GapCurve(N_grid, gap, tail_inf, N0, energy)
