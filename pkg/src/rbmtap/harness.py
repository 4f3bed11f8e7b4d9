"""
Command line experiments: ``rbmtap gen|solve|run|compare|threshold``.

Every option can also come from a flat ``key=value`` file given by ``--config``;
command line flags win.  Outputs go to ``--output-dir`` (default from the
``RBMTAP_OUTPUT_DIR`` environment variable, else ``./rbmtap_out``).  Each CSV
starts with ``# key=value`` lines echoing the configuration and each JSON file
carries it under ``"config"``; nothing time dependent is written, so identical
configurations reproduce identical files.

Exit codes: 0 success, 2 usage, 3 convergence failure, 4 numerical error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import dft_theory, ensembles, tap_dynamics
from .ensembles import Model
from .errors import (ConvergenceError, DomainError, InstabilityError, NumericalError, RbmTapError,
                     UsageError)
from .generating import GeneratingFunction, GreenFunction
from .order_params import (SolverConfig, solve_green_fixed_point, solve_rs_fixed_point,
                           stability_report, theta_analytic, theta_green)
from .tables import write_csv, write_json

EXIT_OK, EXIT_USAGE, EXIT_CONVERGENCE, EXIT_NUMERICAL = 0, 2, 3, 4
ENV_OUTPUT_DIR = "RBMTAP_OUTPUT_DIR"
FLOOR_FACTOR = 1e4          # fit points must exceed this many eps^2 * max(qhat, 1); the
                            # round-off plateau of the step size sits at a few hundred


@dataclass
class ExperimentConfig:
    model: str = "iid"
    n1: int = 4096
    n2: int | None = None           # default n1 // 2
    beta: float = 2.0
    h1: float = 2.0
    h2: float = 1.0
    seeds: tuple[int, ...] = (0, 1, 2)
    T: int = 60
    tol: float = 1e-20
    order: int = 60
    damping: float = 0.5
    solver_tol: float = 1e-12
    route: str = "analytic"
    output_dir: str | None = None
    spectrum_file: str | None = None
    beta_lo: float = 1.0
    beta_hi: float | None = None
    threshold_tol: float = 1e-6
    dc_window: int = 8
    fit_lo: int = 5
    fit_hi: int = 25

    def __post_init__(self):
        if self.output_dir is None:
            self.output_dir = os.environ.get(ENV_OUTPUT_DIR, "rbmtap_out")

    @property
    def alpha(self) -> float:
        return self.n2 / self.n1

    def validate(self) -> "ExperimentConfig":
        self.model = Model.parse(self.model).value
        if self.n2 is None:
            self.n2 = self.n1 // 2
        if self.model == Model.CUSTOM_SPECTRUM.value:
            if not self.spectrum_file:
                raise UsageError("model custom_spectrum needs spectrum_file")
            self.n2 = ensembles.load_spectrum(self.spectrum_file).size
        if not 1 <= self.n2 <= self.n1:
            raise UsageError(f"need 1 <= n2 <= n1, got n1={self.n1}, n2={self.n2}")
        if not self.beta > 0:
            raise UsageError(f"beta must be positive, got {self.beta}")
        if self.h1 == 0 or self.h2 == 0:
            raise UsageError("fields h1, h2 must be nonzero")
        if self.route not in ("analytic", "green"):
            raise UsageError(f"route must be analytic or green, got {self.route!r}")
        if self.T < 1 or not self.seeds:
            raise UsageError("need T >= 1 and at least one seed")
        if self.beta_hi is not None and not self.beta_lo < self.beta_hi:
            raise UsageError("need beta_lo < beta_hi")
        if not 1 <= self.fit_lo < self.fit_hi:
            raise UsageError("need 1 <= fit_lo < fit_hi")
        self.solver_config()
        return self

    def solver_config(self) -> SolverConfig:
        return SolverConfig(damping=self.damping, tol=self.solver_tol, order=self.order)

    def echo(self) -> dict:
        d = asdict(self)
        d["seeds"] = ",".join(str(s) for s in self.seeds)
        return {k: ("" if v is None else v) for k, v in d.items()}

    @property
    def out(self) -> Path:
        path = Path(self.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(name: str, raw: str):
    if name == "seeds":
        try:
            return tuple(int(s) for s in str(raw).replace(" ", "").split(",") if s)
        except ValueError:
            raise UsageError(f"seeds must be comma-separated integers, got {raw!r}") from None
    default = _FIELDS[name].default
    if raw in ("", "none", "None") and (default is None or name in ("n2", "beta_hi")):
        return None
    kind = type(default)
    if name in ("n2",):
        kind = int
    elif name in ("beta_hi",):
        kind = float
    elif default is None:
        kind = str
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment; dashes in keys are allowed."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for num, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _FIELDS:
            raise UsageError(f"{path}:{num}: expected key=value with a known key, got {line!r}")
        out[key] = _convert(key, value.strip())
    return out


def make_config(file_values: dict | None = None, **flags) -> ExperimentConfig:
    values = dict(file_values or {})
    values.update({k: v for k, v in flags.items() if v is not None})
    return ExperimentConfig(**values).validate()


# -- shared pipeline pieces ---------------------------------------------------

def _seed_pair(seed: int) -> tuple[int, int]:
    """Independent seeds for the coupling matrix and the initial state."""
    a, b = np.random.SeedSequence(seed).generate_state(2)
    return int(a), int(b)


def _sample(cfg: ExperimentConfig, seed: int):
    sigmas = None
    if cfg.model == Model.CUSTOM_SPECTRUM.value:
        sigmas = np.sqrt(np.maximum(ensembles.load_spectrum(cfg.spectrum_file), 0.0))
    return ensembles.sample(cfg.model, cfg.n1, cfg.n2, cfg.beta, _seed_pair(seed)[0], sigmas)


def _generating(cfg: ExperimentConfig) -> GeneratingFunction:
    if cfg.model == Model.CUSTOM_SPECTRUM.value:
        return GeneratingFunction.spectrum(cfg.alpha, ensembles.load_spectrum(cfg.spectrum_file))
    return GeneratingFunction.for_model(cfg.model, cfg.alpha, cfg.beta)


def _theory_params(cfg: ExperimentConfig):
    """Seed-free order parameters, Theta and generating function."""
    gf = _generating(cfg)
    op = solve_rs_fixed_point(gf, cfg.h1, cfg.h2, cfg.alpha, cfg.solver_config())
    return op, theta_analytic(op, gf), gf


def _sim_params(cfg: ExperimentConfig, spec, theory_op):
    if cfg.route == "green":
        return solve_green_fixed_point(spec, cfg.h1, cfg.h2, cfg.alpha, cfg.solver_config())
    return theory_op


# -- commands -----------------------------------------------------------------

def cmd_gen(cfg: ExperimentConfig) -> int:
    out = cfg.out
    summary = []
    for seed in cfg.seeds:
        w = _sample(cfg, seed)
        spec = ensembles.compute_svd(w)
        mpath = ensembles.save_matrix(out / f"matrix_seed{seed}.bin", w)
        spath = out / f"spectrum_seed{seed}.txt"
        with open(spath, "w", encoding="utf-8") as fh:
            for key, value in cfg.echo().items():
                fh.write(f"# {key}={value}\n")
            for d in spec.eigvals_gram:
                fh.write(f"{d:.17g}\n")
        summary.append({"seed": seed, "matrix": mpath.name, "spectrum": spath.name,
                        "trace_per_n1": float(np.sum(w.entries ** 2) / w.n1),
                        "sigma_max": float(spec.sigmas[0]), "sigma_min": float(spec.sigmas[-1])})
    write_json(out / "gen.json", {"config": cfg.echo(), "alpha": cfg.alpha, "matrices": summary})
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig) -> int:
    out = cfg.out
    scfg = cfg.solver_config()
    if cfg.route == "green":
        if cfg.spectrum_file:
            g = GreenFunction.from_file(cfg.spectrum_file, cfg.alpha)
        else:
            g = GreenFunction.from_spectral(ensembles.compute_svd(_sample(cfg, cfg.seeds[0])))
        op = solve_green_fixed_point(g, cfg.h1, cfg.h2, cfg.alpha, scfg)
        theta = theta_green(op, g)
        gf = GeneratingFunction.spectrum(cfg.alpha, g.eigvals_gram)
    else:
        op, theta, gf = _theory_params(cfg)
    stab = stability_report(op, gf, cfg.order)
    mu = dft_theory.mu_gamma(theta, *dft_theory.g_primes(op, cfg.order))
    write_json(out / "order_params.json", {"config": cfg.echo(), **op.to_dict(),
                                           "theta": theta.matrix})
    write_json(out / "stability.json", {"config": cfg.echo(), **stab.to_dict(),
                                        "mu_gamma": mu.mu_gamma, "mu_stable": mu.stable})
    return EXIT_OK


def cmd_run(cfg: ExperimentConfig) -> int:
    out = cfg.out
    theory_op, _, _ = _theory_params(cfg)
    status = EXIT_OK
    summary = []
    for seed in cfg.seeds:
        spec = ensembles.compute_svd(_sample(cfg, seed))
        op = _sim_params(cfg, spec, theory_op)
        A = tap_dynamics.build_operator(spec, op)
        try:
            res = tap_dynamics.run(A, op, cfg.T, _seed_pair(seed)[1], cfg.tol,
                                   keep_trajectory=True)
        except InstabilityError as exc:
            summary.append({"seed": seed, "converged": False, "diverged": True,
                            "message": str(exc)})
            status = EXIT_NUMERICAL
            continue
        tap_dynamics.write_trajectory(out / f"trajectory_seed{seed}.csv", res,
                                      {**cfg.echo(), "run_seed": seed})
        mag = res.magnetization
        summary.append({"seed": seed, "converged": res.converged, "diverged": False,
                        "iters": mag.iters,
                        "residual": mag.residual, "mean_m1": float(mag.m1.mean()),
                        "mean_m2": float(mag.m2.mean()),
                        "final_delta1": float(res.delta1[-1]),
                        "final_delta2": float(res.delta2[-1])})
        if not res.converged and status == EXIT_OK:
            status = EXIT_CONVERGENCE
    write_json(out / "run.json", {"config": cfg.echo(), "runs": summary})
    if status == EXIT_CONVERGENCE:
        print(f"rbmtap: iteration did not converge within T={cfg.T} for some seeds; "
              "check mu_gamma with 'rbmtap solve'", file=sys.stderr)
    elif status == EXIT_NUMERICAL:
        print("rbmtap: iteration diverged for some seeds; mu_gamma is likely >= 1",
              file=sys.stderr)
    return status


def empirical_covariance(traj, k: int, t: int, s: int) -> float:
    """``(1/n_k) gamma_k(t)^T gamma_k(s)``."""
    a = traj[t].gamma1 if k == 1 else traj[t].gamma2
    b = traj[s].gamma1 if k == 1 else traj[s].gamma2
    return float(a @ b) / a.size


def fit_log_slope(delta: np.ndarray, lo: int, hi: int, floor: float):
    """Least-squares slope of ``log delta(t)`` over ``lo <= t <= hi``.

    ``delta[t-1]`` belongs to time ``t``.  The window stops at the first value at
    or below ``floor``, so the round-off plateau never enters the fit.
    Returns ``(slope, used_times)``; the slope is nan with fewer than 3 points.
    """
    ts = []
    for t in range(lo, min(hi, delta.size) + 1):
        if not delta[t - 1] > floor:
            break
        ts.append(t)
    if len(ts) < 3:
        return float("nan"), ts
    slope = np.polyfit(np.array(ts, dtype=float), np.log(delta[np.array(ts) - 1]), 1)[0]
    return float(slope), ts


def machine_floor(qhat: float) -> float:
    return FLOOR_FACTOR * np.finfo(float).eps ** 2 * max(qhat, 1.0)


def cmd_compare(cfg: ExperimentConfig) -> int:
    out = cfg.out
    op, theta, _ = _theory_params(cfg)
    cov, report = dft_theory.predict(op, theta, cfg.T, cfg.order)
    win = min(cfg.dc_window, cfg.T)
    pairs = [(t, s) for t in range(1, win + 1) for s in range(1, win + 1)]
    emp = {k: np.zeros((len(cfg.seeds), len(pairs))) for k in (1, 2)}
    deltas = {k: np.zeros((len(cfg.seeds), cfg.T)) for k in (1, 2)}
    converged = []
    for i, seed in enumerate(cfg.seeds):
        spec = ensembles.compute_svd(_sample(cfg, seed))
        sim_op = _sim_params(cfg, spec, op)
        A = tap_dynamics.build_operator(spec, sim_op)
        res = tap_dynamics.run(A, sim_op, cfg.T, _seed_pair(seed)[1], tol=0.0,
                               keep_trajectory=True)
        converged.append(bool(max(res.delta1[-1], res.delta2[-1]) < cfg.tol))
        for k in (1, 2):
            emp[k][i] = [empirical_covariance(res.trajectory, k, t, s) for t, s in pairs]
            deltas[k][i] = res.delta1 if k == 1 else res.delta2
    theory = {k: np.array([cov.at(k, t, s) for t, s in pairs]) for k in (1, 2)}
    dc = {k: ((theory[k] - emp[k]) / theory[k]) ** 2 for k in (1, 2)}

    rows = []
    for j, (t, s) in enumerate(pairs):
        rows.append((t, s, theory[1][j], float(emp[1][:, j].mean()), float(dc[1][:, j].mean()),
                     theory[2][j], float(emp[2][:, j].mean()), float(dc[2][:, j].mean())))
    head = cfg.echo()
    write_csv(out / "comparison.csv",
              ["t", "s", "C1_theory", "C1_empirical", "dC1", "C2_theory", "C2_empirical", "dC2"],
              rows, head)

    log_mu = float(np.log(report.mu_gamma))
    fits = {}
    rate_rows = []
    geo = {k: np.exp(np.mean(np.log(np.maximum(deltas[k], np.finfo(float).tiny)), axis=0))
           for k in (1, 2)}
    for k, q in ((1, op.qhat1), (2, op.qhat2)):
        slope, used = fit_log_slope(geo[k], cfg.fit_lo, cfg.fit_hi, machine_floor(q))
        rel = abs(slope - log_mu) / abs(log_mu) if log_mu != 0 else float("nan")
        fits[k] = {"slope": slope, "fit_times": used, "relative_error": rel,
                   "floor": machine_floor(q)}
    for t in range(1, cfg.T + 1):
        rate_rows.append((t, float(geo[1][t - 1]), float(geo[2][t - 1]),
                          float(cov.delta(1)[t - 1]), float(cov.delta(2)[t - 1])))
    write_csv(out / "rates.csv",
              ["t", "delta1_empirical", "delta2_empirical", "delta1_theory", "delta2_theory"],
              rate_rows, {**head, "mu_gamma": report.mu_gamma, "log_mu_gamma": log_mu})
    summary = {
        "config": head, "mu_gamma": report.mu_gamma, "log_mu_gamma": log_mu,
        "stable": report.stable, "near_critical": report.near_critical,
        "median_dC1": float(np.median(dc[1].mean(axis=0))),
        "median_dC2": float(np.median(dc[2].mean(axis=0))),
        "fit_block1": fits[1], "fit_block2": fits[2],
        "runs_below_tol": converged,
    }
    write_json(out / "compare.json", summary)
    return EXIT_OK


def cmd_threshold(cfg: ExperimentConfig) -> int:
    out = cfg.out
    scfg = cfg.solver_config()
    args = (cfg.model, cfg.alpha, cfg.h1, cfg.h2)
    if cfg.model == Model.CUSTOM_SPECTRUM.value:
        raise UsageError("thresholds need a beta-parameterized ensemble (iid or column_orthogonal)")
    hi = cfg.beta_hi
    if hi is None:
        hi = 2 * cfg.beta_lo
        while dft_theory.mu_at_beta(*args, hi, scfg) < 1:
            hi *= 2
            if hi > 1e6:
                raise ConvergenceError("no beta with mu_gamma > 1 found below 1e6")
    beta_star = dft_theory.instability_bisection(*args, cfg.beta_lo, hi, cfg.threshold_tol, scfg)
    grid = np.linspace(cfg.beta_lo, hi, 20)
    mus = [dft_theory.mu_at_beta(*args, b, scfg) for b in grid]
    head = cfg.echo()
    write_csv(out / f"threshold_grid_{cfg.model}.csv", ["beta", "mu_gamma"],
              zip(grid.tolist(), mus), head)
    write_csv(out / f"threshold_{cfg.model}.csv",
              ["model", "alpha", "h1", "h2", "beta_lo", "beta_hi", "beta_star", "mu_at_beta_star"],
              [(cfg.model, cfg.alpha, cfg.h1, cfg.h2, cfg.beta_lo, float(hi), beta_star,
                dft_theory.mu_at_beta(*args, beta_star, scfg))], head)
    write_json(out / f"threshold_{cfg.model}.json",
               {"config": head, "beta_star": beta_star, "beta_hi_used": float(hi),
                "mu_monotone_on_grid": bool(np.all(np.diff(mus) > 0))})
    print(f"{cfg.model}: beta* = {beta_star:.6f}")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "run": cmd_run,
            "compare": cmd_compare, "threshold": cmd_threshold}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rbmtap", description=__doc__.strip().splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="flat key=value file; flags override it")
    for name, f in _FIELDS.items():
        flag = "--" + name.replace("_", "-")
        help_text = f"default: {f.default!r}" if name != "output_dir" else \
            f"default: ${ENV_OUTPUT_DIR} or ./rbmtap_out"
        p.add_argument(flag, dest=name, default=None, help=help_text)
    return p


def parse_config(argv) -> tuple[str, ExperimentConfig]:
    ns = build_parser().parse_args(argv)
    file_values = read_config_file(ns.config) if ns.config else {}
    flags = {name: _convert(name, getattr(ns, name))
             for name in _FIELDS if getattr(ns, name) is not None}
    return ns.command, make_config(file_values, **flags)


def main(argv=None) -> int:
    try:
        command, cfg = parse_config(sys.argv[1:] if argv is None else argv)
        return COMMANDS[command](cfg)
    except (UsageError, DomainError) as exc:
        print(f"rbmtap: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"rbmtap: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except NumericalError as exc:
        print(f"rbmtap: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except RbmTapError as exc:
        print(f"rbmtap: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
