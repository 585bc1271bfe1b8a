"""Command-line front end.

    lqturnpike solve|certify|simulate|diagnose|paper-example [--config PATH]
        [--seed U64] [--out DIR] [--ensemble M] [--horizons 10,20] [--eps 1,2] [--eta 0.1,0.5]

Exit codes: 0 success, 2 config error, 3 certificate failure, 4 solver
non-convergence, 5 bound violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dissipativity import certify, verify_dissipation_chain
from .errors import BoundViolated, CertificateNotFound, NoConvergence
from .model import Problem, scalar_example, problem_from_dict, validate
from .riccati import riccati_backward, solve_dare
from .rng import derive_seed
from .simulate import (empirical_cost, ensemble_summary, sample_noise, simulate_ensemble,
                       simulate_pair, write_json)
from .stationary import build_stationary_pair, propagate_joint_moments
from .turnpike import figure1_metrics, moment_turnpike, probability_turnpike

log = logging.getLogger("lqturnpike")

EXIT_OK, EXIT_CONFIG, EXIT_CERT, EXIT_NOCONV, EXIT_BOUND = 0, 2, 3, 4, 5
RERUN_ENSEMBLE = 100_000

# sub-stream tags below the user seed
TAG_FIG_NOISE = 101
TAG_FIG_PATH = 102
TAG_ENSEMBLE = 103


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    problem: Problem
    horizons: list = field(default_factory=lambda: [10, 20, 40])
    seed: int = 0
    ensemble: int = 10_000
    eps: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 5.0])
    eta: list = field(default_factory=lambda: [0.1, 0.25, 0.5])
    Stilde: np.ndarray | None = None
    gamma: float | None = None
    out: Path = Path("out")

    def check(self):
        if not self.horizons or any(N < 1 for N in self.horizons):
            raise ConfigError("horizons must be >= 1")
        if self.ensemble < 1:
            raise ConfigError("ensemble size must be >= 1")
        if any(e <= 0 for e in self.eps) or any(e <= 0 for e in self.eta):
            raise ConfigError("eps and eta must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


def _csv_list(text, conv):
    try:
        return [conv(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from exc


def _apply_raw(cfg, raw, base):
    if "horizons" in raw:
        cfg.horizons = [int(N) for N in raw["horizons"]]
    if "ensemble" in raw:
        cfg.ensemble = int(raw["ensemble"])
    if "eps" in raw:
        cfg.eps = [float(e) for e in raw["eps"]]
    if "eta" in raw:
        cfg.eta = [float(e) for e in raw["eta"]]
    if "out" in raw:
        cfg.out = base / raw["out"]
    cert = raw.get("certificate") or {}
    if cert.get("Stilde") is not None:
        cfg.Stilde = np.array(cert["Stilde"], dtype=float)
        n = cfg.problem.system.n
        if cfg.Stilde.shape != (n, n) or not np.all(np.isfinite(cfg.Stilde)):
            raise ValueError(f"certificate Stilde must be a finite {n}x{n} matrix")
    if cert.get("gamma") is not None:
        cfg.gamma = float(cert["gamma"])


def load_config(args) -> ExperimentConfig:
    raw = {}
    base = Path(".")
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        base = path.parent
    if args.command == "paper-example":
        prob = scalar_example()
    else:
        if not raw:
            raise ConfigError("--config is required")
        spec = raw.get("problem", raw)
        if isinstance(spec, str):
            ppath = base / spec
            if not ppath.exists():
                raise ConfigError(f"problem file {ppath} does not exist")
            try:
                spec = json.loads(ppath.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{ppath}: invalid JSON: {exc.msg}") from exc
        try:
            prob = problem_from_dict(spec)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid problem: {exc}") from exc
    cfg = ExperimentConfig(prob)
    try:
        _apply_raw(cfg, raw, base)
    except (AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    seed = raw.get("seed", os.environ.get("TURNPIKE_SEED", 0))
    if args.seed is not None:
        seed = args.seed
    try:
        cfg.seed = int(seed)
    except ValueError as exc:
        raise ConfigError(f"bad seed {seed!r}") from exc
    if args.horizons:
        cfg.horizons = _csv_list(args.horizons, int)
    if args.eps:
        cfg.eps = _csv_list(args.eps, float)
    if args.eta:
        cfg.eta = _csv_list(args.eta, float)
    if args.ensemble is not None:
        cfg.ensemble = args.ensemble
    if args.out:
        cfg.out = Path(args.out)
    cfg.check()
    return cfg


# pipeline stages; each returns a JSON-ready dict


def run_solve(cfg: ExperimentConfig) -> dict:
    s, c = cfg.problem.system, cfg.problem.cost
    report = validate(s, c)
    sol = solve_dare(s, c)
    schedules = []
    for N in cfg.horizons:
        g = riccati_backward(s, c, N)
        schedules.append({"N": N, "P_N0": g.P_seq[0].tolist(), "K_N0": g.K_seq[0].tolist(),
                          "K_N_last": g.K_seq[-1].tolist(),
                          "max_gain_deviation_from_K": float(np.abs(g.K_seq - sol.K).max())})
    out = sol.to_dict()
    out.update(validation=report.to_dict(), gain_schedules=schedules)
    return out


def _certificate(cfg):
    s, c = cfg.problem.system, cfg.problem.cost
    sol = solve_dare(s, c)
    pair = build_stationary_pair(s, sol)
    cert = certify(s, c, sol, Stilde=cfg.Stilde, gamma=cfg.gamma)
    return sol, pair, cert


def run_certify(cfg: ExperimentConfig) -> dict:
    s, c, x0 = cfg.problem.system, cfg.problem.cost, cfg.problem.x0
    sol, pair, cert = _certificate(cfg)
    chains = []
    for N in cfg.horizons:
        rep = verify_dissipation_chain(s, c, cert, pair, riccati_backward(s, c, N), x0, N)
        chains.append(dict(rep.to_dict(), N=N))
    out = cert.to_dict()
    out.update(Sigma_s=pair.Sigma_s.tolist(), K=sol.K.tolist(), residual_report=chains,
               Stilde_source="override" if cfg.Stilde is not None else "search",
               gamma_source="override" if cfg.gamma is not None else "search")
    return out


def run_simulate(cfg: ExperimentConfig, write_paths=True) -> dict:
    s, c, x0 = cfg.problem.system, cfg.problem.cost, cfg.problem.x0
    sol = solve_dare(s, c)
    pair = build_stationary_pair(s, sol)
    summaries = []
    for N in cfg.horizons:
        g = riccati_backward(s, c, N)
        ens = simulate_ensemble(s, g, pair, x0, derive_seed(cfg.seed, TAG_ENSEMBLE, N), cfg.ensemble, cost=c)
        exact = propagate_joint_moments(s, g, pair, x0, N).cost(c)
        summaries.append(ensemble_summary(ens, exact))
        if write_paths:
            ens.to_csv(cfg.out / f"paths_N{N}.csv")
    return {"seed": cfg.seed, "horizons": cfg.horizons, "ensembles": summaries}


def _ensemble(cfg, s, c, g, pair, x0, N, M):
    return simulate_ensemble(s, g, pair, x0, derive_seed(cfg.seed, TAG_ENSEMBLE, N), M, cost=c)


def run_diagnose(cfg: ExperimentConfig, write_csv=True) -> dict:
    """Moment and probability turnpike checks for every configured horizon.

    An empirical count below the bound is logged and recomputed with
    ``RERUN_ENSEMBLE`` paths; if it still fails, :class:`BoundViolated` is raised.
    """
    s, c, x0 = cfg.problem.system, cfg.problem.cost, cfg.problem.x0
    sol, pair, cert = _certificate(cfg)
    reports = []
    for N in cfg.horizons:
        g = riccati_backward(s, c, N)
        rep = moment_turnpike(s, c, cert, g, pair, x0, N, cfg.eps)
        ens = _ensemble(cfg, s, c, g, pair, x0, N, cfg.ensemble)
        for e in cfg.eps:
            for h in cfg.eta:
                r = probability_turnpike(rep, e, h, ens)
                if r.empirical < r.bound:
                    log.warning("rerunning (N=%d, eps=%g, eta=%g) with M=%d", N, e, h, RERUN_ENSEMBLE)
                    big = _ensemble(cfg, s, c, g, pair, x0, N, RERUN_ENSEMBLE)
                    rep.prob_results.pop()
                    rep.exceedance.pop(float(e), None)
                    r = probability_turnpike(rep, e, h, big)
                    if r.empirical < r.bound:
                        raise BoundViolated(f"empirical P_eps_eta={r.empirical} < {r.bound:.3f} "
                                            f"(N={N}, eps={e}, eta={h}, M={RERUN_ENSEMBLE})")
        if write_csv:
            rep.to_csv(cfg.out / f"turnpike_N{N}.csv")
        d = rep.to_dict()
        if ens.M >= 2:
            mean, se = empirical_cost(ens)
            d.update(empirical_J_N=mean, empirical_J_N_se=se)
        reports.append(d)
    return {"seed": cfg.seed, "ensemble": cfg.ensemble, "gamma": cert.gamma,
            "lambda_min_H_lower": cert.lambda_min_H_lower, "reports": reports}


def write_figure1_csv(path, noise, paths):
    """Columns: k, w, xs, us, then x/u for every horizon (blank past the horizon).

    Only the first state/control component is written; the built-in example is scalar.
    """
    Ns = sorted(paths)
    Nmax = max(Ns)
    ref = paths[Nmax]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        header = ["k", "w", "xs", "us"]
        for N in Ns:
            header += [f"x_N{N}", f"u_N{N}"]
        wr.writerow(header)
        for k in range(Nmax + 1):
            row = [k,
                   repr(float(noise.samples[k, 0])) if k < noise.N else "",
                   repr(float(ref.xs[k, 0])),
                   repr(float(ref.us[k, 0])) if k < Nmax else ""]
            for N in Ns:
                p = paths[N]
                row.append(repr(float(p.x[k, 0])) if k <= N else "")
                row.append(repr(float(p.u[k, 0])) if k < N else "")
            wr.writerow(row)


def run_paper_example(cfg: ExperimentConfig) -> dict:
    s, c, x0 = cfg.problem.system, cfg.problem.cost, cfg.problem.x0
    out = {"solve": run_solve(cfg), "certify": run_certify(cfg),
           "simulate": run_simulate(cfg, write_paths=False)}
    sol, pair, cert = _certificate(cfg)
    out["K"] = float(sol.K[0, 0])
    out["Sigma_s"] = float(pair.Sigma_s[0, 0])
    noise = sample_noise(derive_seed(cfg.seed, TAG_FIG_NOISE), max(cfg.horizons), s.Sigma_W)
    path_seed = derive_seed(cfg.seed, TAG_FIG_PATH)
    paths = {N: simulate_pair(s, riccati_backward(s, c, N), pair, x0, noise, path_seed, cost=c)
             for N in cfg.horizons}
    write_figure1_csv(cfg.out / "figure1.csv", noise, paths)
    out["figure1"] = [m.to_dict() for m in figure1_metrics(paths)]
    out["diagnose"] = run_diagnose(cfg)
    return out


def _error(code, kind, message, out_dir=None):
    payload = {"error": kind, "message": message, "exit_code": code}
    text = json.dumps(payload, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def build_parser():
    p = argparse.ArgumentParser(prog="lqturnpike", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=["solve", "certify", "simulate", "diagnose", "paper-example"])
    p.add_argument("--config", help="experiment or problem JSON file")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed (fallback: $TURNPIKE_SEED)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--ensemble", type=int, help="Monte Carlo ensemble size M")
    p.add_argument("--horizons", help="comma-separated horizons")
    p.add_argument("--eps", help="comma-separated eps values")
    p.add_argument("--eta", help="comma-separated eta values")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


COMMANDS = {
    "solve": ("riccati.json", run_solve),
    "certify": ("certificate.json", run_certify),
    "simulate": ("ensemble_summary.json", run_simulate),
    "diagnose": ("turnpike_report.json", run_diagnose),
    "paper-example": ("paper_example.json", run_paper_example),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        return _error(EXIT_CONFIG, "ConfigError", str(exc), Path(args.out) if args.out else None)
    fname, run = COMMANDS[args.command]
    cfg.out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        result = run(cfg)
    except CertificateNotFound as exc:
        return _error(EXIT_CERT, "CertificateNotFound", str(exc), cfg.out)
    except NoConvergence as exc:
        return _error(EXIT_NOCONV, "NoConvergence", str(exc), cfg.out)
    except BoundViolated as exc:
        return _error(EXIT_BOUND, "BoundViolated", str(exc), cfg.out)
    write_json(result, cfg.out / fname)
    log.info("%s finished in %.2fs, wrote %s", args.command, time.perf_counter() - t0, cfg.out / fname)
    if args.command == "paper-example":
        print(f"K = {result['K']:.5f}  Sigma_s = {result['Sigma_s']:.4f}  (outputs in {cfg.out})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
