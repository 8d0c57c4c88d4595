"""Configuration-driven command line front end.

Every command reads one JSON config with a mandatory seed, runs one
experiment, and writes a JSON report, CSV data files and a manifest into the
output directory.  Identical config and seed produce byte-identical reports.

    homog-jump <command> --config cfg.json [--out DIR] [--threads N]
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats as _scipy_stats

from . import __version__
from .characteristics import TruncationFn, characteristics_sweep
from .convergence import classify_longtime, convergence_sweep, drift_admissibility
from .effective import corrector_solve, corrector_to_csv, covariance_to_dict, sigma_bar, sigma_effective, sigma_levy
from .examples import NAMED
from .exit import (Annulus, Ball, Box, BrownianProcess, DirichletProblem, ScaledProcess,
                   dirichlet_mc, exit_samples, exits_to_csv)
from .model import ModelValidationError, validate_model
from .model_io import ModelFormatError, model_from_dict, model_to_dict
from .reporting import sha256_of, write_csv, write_report
from .sim import SimConfig, dump_paths_csv, run_paths
from .torus import (ORACLE_RES, TorusGrid, grid_generator, fit_log_slope, invariant_to_csv,
                    occupation_invariant, stationary_solve, tv_decay, tv_decay_to_csv, tv_distance)

#: exit status for statistical-test failures (errors use 1)
STATUS_FAIL = 2

COMMANDS = ("validate", "simulate", "invariant", "sigma", "levy", "corrector",
            "characteristics", "converge", "exit", "dirichlet", "classify", "report")


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def _resolve_model(cfg: dict):
    if "model" not in cfg:
        raise ConfigError("config: missing key 'model'")
    model = cfg["model"]
    if isinstance(model, str):
        if model not in NAMED:
            raise ConfigError(f"config.model: unknown named model {model!r}; "
                              f"known: {sorted(NAMED)}")
        m = NAMED[model]()
        return m, model_to_dict(m)
    m = model_from_dict(model)
    return m, model_to_dict(m)


def _params(cfg: dict, defaults: dict) -> dict:
    params = dict(defaults)
    given = cfg.get("params") or {}
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"config.params: unknown parameter {sorted(unknown)[0]!r}")
    params.update(given)
    return params


def _oracle_grid(m, res=None) -> TorusGrid:
    res = ORACLE_RES.get(m.dim, 16) if res is None else int(res)
    return TorusGrid(m.period, (res,) * m.dim)


def _oracle_pi(m, res=None):
    grid = _oracle_grid(m, res)
    return stationary_solve(grid_generator(m, grid), grid)


def _domain_from_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "ball":
        return Ball(doc["center"], doc["radius"])
    if kind == "box":
        return Box(doc["lo"], doc["hi"])
    if kind == "annulus":
        return Annulus(doc["center"], doc["r_inner"], doc["r_outer"])
    raise ConfigError(f"domain.kind must be ball, box or annulus (got {kind!r})")


def _compile_expr(expr, dim: int):
    """Vectorized callable from an expression in x1..xd (and r = |x|)."""
    if expr is None:
        return None
    code = compile(str(expr), "<config expr>", "eval")
    allowed = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
               "abs": np.abs, "pi": np.pi, "min": np.minimum, "max": np.maximum}

    def fn(X):
        X = np.atleast_2d(X)
        env = dict(allowed)
        for i in range(dim):
            env[f"x{i + 1}"] = X[:, i]
        env["r"] = np.linalg.norm(X, axis=1)
        out = eval(code, {"__builtins__": {}}, env)  # restricted namespace
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

    return fn


def _manifest(cfg: dict, command: str, model_doc) -> dict:
    return {
        "command": command,
        "configSha256": sha256_of(cfg),
        "modelSha256": None if model_doc is None else sha256_of(model_doc),
        "seed": cfg.get("seed"),
        "toolVersion": __version__,
    }


def _emit(out_dir: str, command: str, report: dict, manifest: dict):
    os.makedirs(out_dir, exist_ok=True)
    report = dict(report)
    report["configSha256"] = manifest["configSha256"]
    write_report(os.path.join(out_dir, f"{command}_report.json"), report)
    write_report(os.path.join(out_dir, f"{command}_manifest.json"), manifest)


def _seed(cfg: dict) -> int:
    if "seed" not in cfg or not isinstance(cfg["seed"], int):
        raise ConfigError("config: an integer 'seed' is mandatory")
    return cfg["seed"]


# -- commands ----------------------------------------------------------------


def cmd_validate(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"grid_res": 64})
    report = validate_model(m, p["grid_res"])
    doc = {
        "passed": report.passed,
        "checks": [{"name": c.name, "passed": c.passed, "witness": c.witness,
                    "detail": c.detail} for c in report.checks],
    }
    _emit(out_dir, "validate", doc, _manifest(cfg, "validate", model_doc))
    return 0 if report.passed else STATUS_FAIL


def cmd_simulate(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"dt": 1e-3, "horizon": 1.0, "n_paths": 10, "x0": None})
    x0 = np.zeros(m.dim) if p["x0"] is None else np.asarray(p["x0"], float)
    sim = SimConfig(dt=p["dt"], horizon=p["horizon"], n_paths=int(p["n_paths"]), seed=_seed(cfg))
    paths = run_paths(m, x0, sim)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "paths.csv"), "w", encoding="utf-8", newline="") as fh:
        dump_paths_csv(paths, fh)
    doc = {"n_paths": len(paths), "horizon": p["horizon"], "dt": p["dt"],
           "jump_counts": [len(s.jump_marks) for s in paths]}
    _emit(out_dir, "simulate", doc, _manifest(cfg, "simulate", model_doc))
    return 0


def cmd_invariant(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"res": None, "T": 20000.0, "dt": 2e-3, "burn_in_fraction": 0.1,
                      "n_chains": 32, "solver_compare": True})
    grid = _oracle_grid(m, p["res"])
    horizon = p["T"] / p["n_chains"]
    occ = occupation_invariant(m, grid, p["burn_in_fraction"] * horizon, p["T"],
                               p["dt"], _seed(cfg), n_chains=int(p["n_chains"]))
    doc = {"res": list(grid.res), "T": p["T"], "provenance": occ.provenance}
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "invariant_occupation.csv"), "w", encoding="utf-8", newline="") as fh:
        invariant_to_csv(occ, fh)
    status = 0
    if p["solver_compare"]:
        try:
            pi = stationary_solve(grid_generator(m, grid), grid)
        except Exception as exc:  # oracle restrictions (off-diagonal c, d >= 3)
            doc["gridSolve"] = f"unavailable: {exc}"
        else:
            with open(os.path.join(out_dir, "invariant_gridsolve.csv"), "w", encoding="utf-8", newline="") as fh:
                invariant_to_csv(pi, fh)
            doc["tv_occupation_vs_solve"] = tv_distance(occ.weights, pi.weights)
            status = 0 if doc["tv_occupation_vs_solve"] <= 0.03 else STATUS_FAIL
            times = [0.02 + 0.01 * i for i in range(12)]
            decay = tv_decay(grid_generator(m, grid), grid, times)
            slope, r2 = fit_log_slope(decay)
            doc["tv_decay_slope"] = slope
            doc["tv_decay_r2"] = r2
            with open(os.path.join(out_dir, "tv_decay.csv"), "w", encoding="utf-8", newline="") as fh:
                tv_decay_to_csv(decay, fh)
    _emit(out_dir, "invariant", doc, _manifest(cfg, "invariant", model_doc))
    return status


def cmd_sigma(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"res": None, "method": "gridSolve", "T": 20000.0, "dt": 2e-3,
                      "n_chains": 32})
    if p["method"] == "gridSolve":
        pi = _oracle_pi(m, p["res"])
    elif p["method"] == "occupation":
        grid = _oracle_grid(m, p["res"])
        horizon = p["T"] / p["n_chains"]
        pi = occupation_invariant(m, grid, 0.1 * horizon, p["T"], p["dt"], _seed(cfg),
                                  n_chains=int(p["n_chains"]))
    else:
        raise ConfigError("params.method must be gridSolve or occupation")
    cov = sigma_effective(m, pi)
    doc = covariance_to_dict(cov)
    _emit(out_dir, "sigma", doc, _manifest(cfg, "sigma", model_doc))
    return 0


def cmd_levy(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    b = m.drift.constant_value()
    c = m.diffusion.constant_value()
    if b is None or c is None:
        raise ConfigError("the levy command needs constant drift and diffusion")
    centering, cov = sigma_levy(b, c, m.jumps)
    doc = covariance_to_dict(cov)
    doc["centering"] = [float(v) for v in centering]
    _emit(out_dir, "levy", doc, _manifest(cfg, "levy", model_doc))
    return 0


def cmd_corrector(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"res": None})
    grid = _oracle_grid(m, p["res"])
    corr = corrector_solve(m, grid)
    pi = stationary_solve(grid_generator(m, grid), grid)
    cov = sigma_bar(m, corr, pi)
    doc = covariance_to_dict(cov)
    doc["bbar"] = [float(v) for v in corr.bbar]
    doc["residual"] = corr.residual
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "corrector.csv"), "w", encoding="utf-8", newline="") as fh:
        corrector_to_csv(corr, fh)
    _emit(out_dir, "corrector", doc, _manifest(cfg, "corrector", model_doc))
    return 0


def cmd_characteristics(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"eps_list": [0.5, 0.25, 0.125], "t": 1.0, "n_paths": 10000,
                      "dt": 1e-3, "trunc_delta": 1.0, "bigjump_delta": 0.5,
                      "sigma_res": None})
    pi = _oracle_pi(m, p["sigma_res"])
    sigma = sigma_effective(m, pi).sigma
    sweep = characteristics_sweep(
        m, p["eps_list"], p["t"], int(p["n_paths"]), _seed(cfg), sigma,
        trunc=TruncationFn(p["trunc_delta"]), delta_g=p["bigjump_delta"], dt=p["dt"])
    doc = sweep.to_dict()
    _emit(out_dir, "characteristics", doc, _manifest(cfg, "characteristics", model_doc))
    return 0 if all(sweep.verdicts.values()) else STATUS_FAIL


def cmd_converge(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"eps_list": [0.5, 0.25, 0.125], "t": 1.0, "n": 4000, "dt": 1e-3})
    sweep = convergence_sweep(m, p["eps_list"], p["t"], int(p["n"]), _seed(cfg), dt=p["dt"])
    doc = sweep.to_dict()
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "converge_plotdata.csv"),
              ["eps", "cf_distance", "cov_error"],
              [(r.eps, r.cf_distance, r.cov_error) for r in sweep.reports])
    _emit(out_dir, "converge", doc, _manifest(cfg, "converge", model_doc))
    return 0 if (sweep.cf_nonincreasing and sweep.all_ks_pass) else STATUS_FAIL


def cmd_exit(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"domain": {"kind": "ball", "center": None, "radius": 1.0},
                      "eps": 0.125, "n": 2000, "dt": 1e-4, "x0": None,
                      "sigma_res": None, "max_steps": 1_000_000})
    dom_doc = dict(p["domain"])
    if dom_doc.get("kind") == "ball" and dom_doc.get("center") is None:
        dom_doc["center"] = [0.0] * m.dim
    domain = _domain_from_dict(dom_doc)
    x0 = np.zeros(m.dim) if p["x0"] is None else np.asarray(p["x0"], float)
    pi = _oracle_pi(m, p["sigma_res"])
    sigma = sigma_effective(m, pi).sigma
    seed = _seed(cfg)
    scaled = exit_samples(ScaledProcess(m, p["eps"]), domain, x0, int(p["n"]), p["dt"],
                          seed, max_steps=int(p["max_steps"]))
    brown = exit_samples(BrownianProcess(sigma), domain, x0, int(p["n"]), p["dt"],
                         seed + 1, max_steps=int(p["max_steps"]))
    ks = _scipy_stats.ks_2samp(scaled.valid_times(), brown.valid_times())
    doc = {
        "eps": p["eps"], "n": int(p["n"]), "dt": p["dt"],
        "scaled_mean_exit": scaled.mean_exit_time()[0],
        "scaled_se": scaled.mean_exit_time()[1],
        "brownian_mean_exit": brown.mean_exit_time()[0],
        "brownian_se": brown.mean_exit_time()[1],
        "censored": {"scaled": scaled.n_censored, "brownian": brown.n_censored},
        "ks_pvalue": float(ks.pvalue),
    }
    os.makedirs(out_dir, exist_ok=True)
    for name, samples in (("scaled", scaled), ("brownian", brown)):
        with open(os.path.join(out_dir, f"exit_{name}.csv"), "w", encoding="utf-8", newline="") as fh:
            exits_to_csv(samples, fh)
    _emit(out_dir, "exit", doc, _manifest(cfg, "exit", model_doc))
    return 0 if ks.pvalue > 0.01 else STATUS_FAIL


def cmd_dirichlet(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"domain": {"kind": "ball", "center": None, "radius": 1.0},
                      "eps_list": [0.5, 0.25, 0.125], "points": None, "n": 4000,
                      "dt_base": 2e-3, "a": None, "f": "-1", "g": None,
                      "sigma_res": None, "max_steps": 4_000_000})
    dom_doc = dict(p["domain"])
    if dom_doc.get("kind") == "ball" and dom_doc.get("center") is None:
        dom_doc["center"] = [0.0] * m.dim
    domain = _domain_from_dict(dom_doc)
    points = [[0.0] * m.dim] if p["points"] is None else p["points"]
    problem = DirichletProblem(domain, a=_compile_expr(p["a"], m.dim),
                               f=_compile_expr(p["f"], m.dim),
                               g=_compile_expr(p["g"], m.dim))
    pi = _oracle_pi(m, p["sigma_res"])
    sigma = sigma_effective(m, pi).sigma
    seed = _seed(cfg)
    rows = []

    def one_eps(item):
        i, eps = item
        dt = eps**2 * p["dt_base"]
        ue = dirichlet_mc(problem, ScaledProcess(m, eps), points, int(p["n"]), dt,
                          seed, max_steps=int(p["max_steps"]))
        u0 = dirichlet_mc(problem, BrownianProcess(sigma), points, int(p["n"]), dt,
                          seed, max_steps=int(p["max_steps"]))
        return [{"eps": eps, "point": [float(v) for v in a.point], "u_eps": a.value,
                 "u_eps_se": a.se, "u0": b.value, "u0_se": b.se,
                 "gap": abs(a.value - b.value),
                 "combined_se": float(np.hypot(a.se, b.se)),
                 "n_censored": a.n_censored + b.n_censored}
                for a, b in zip(ue, u0)]

    for chunk in _parallel(one_eps, list(enumerate(p["eps_list"])), threads):
        rows.extend(chunk)
    gaps = [r["gap"] for r in rows if r["point"] == rows[0]["point"]]
    ses = [r["combined_se"] for r in rows if r["point"] == rows[0]["point"]]
    decreasing = all(gaps[i + 1] <= gaps[i] + 2.0 * (ses[i] + ses[i + 1])
                     for i in range(len(gaps) - 1))
    final_ok = gaps[-1] <= 3.0 * ses[-1]
    doc = {"values": rows, "gap_decreasing": decreasing, "final_within_3se": final_ok}
    _emit(out_dir, "dirichlet", doc, _manifest(cfg, "dirichlet", model_doc))
    return 0 if (decreasing and final_ok) else STATUS_FAIL


def cmd_classify(cfg, out_dir, threads):
    m, model_doc = _resolve_model(cfg)
    p = _params(cfg, {"res": None})
    pi = _oracle_pi(m, p["res"])
    cov = sigma_effective(m, pi)
    verdict = classify_longtime(m.dim, cov.sigma)
    drift = drift_admissibility(m, pi)
    doc = {"sigma": covariance_to_dict(cov), "longtime": verdict.to_dict(),
           "drift": drift.to_dict()}
    _emit(out_dir, "classify", doc, _manifest(cfg, "classify", model_doc))
    return 0


def cmd_report(cfg, out_dir, threads):
    src = cfg.get("dir") or out_dir
    try:
        names = os.listdir(src)
    except OSError as exc:
        raise ConfigError(f"cannot read run directory: {exc}") from exc
    manifests = sorted(f for f in names if f.endswith("_manifest.json"))
    if not manifests:
        raise ConfigError(f"no manifests found in {src}")
    merged, model_hashes = [], set()
    for name in manifests:
        with open(os.path.join(src, name), encoding="utf-8") as fh:
            man = json.load(fh)
        rep_name = name.replace("_manifest.json", "_report.json")
        rep_path = os.path.join(src, rep_name)
        if not os.path.exists(rep_path):
            raise ConfigError(f"missing report {rep_name} for manifest {name}")
        with open(rep_path, encoding="utf-8") as fh:
            rep = json.load(fh)
        if man.get("modelSha256"):
            model_hashes.add(man["modelSha256"])
        merged.append({"manifest": man, "report": rep})
    if len(model_hashes) > 1:
        raise ConfigError("refusing to merge runs with different model hashes")
    lines = [f"{'command':<16} {'seed':<12} {'configSha256':<16}"]
    for entry in merged:
        man = entry["manifest"]
        lines.append(f"{man['command']:<16} {str(man['seed']):<12} {man['configSha256'][:12]:<16}")
    os.makedirs(out_dir, exist_ok=True)
    write_report(os.path.join(out_dir, "summary.json"), {"runs": merged})
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def _parallel(fn, items, threads):
    if threads is None:
        threads = os.cpu_count() or 1
    threads = max(1, min(int(threads), len(items) or 1))
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))  # ordered, so identical to sequential


HANDLERS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "invariant": cmd_invariant,
    "sigma": cmd_sigma,
    "levy": cmd_levy,
    "corrector": cmd_corrector,
    "characteristics": cmd_characteristics,
    "converge": cmd_converge,
    "exit": cmd_exit,
    "dirichlet": cmd_dirichlet,
    "classify": cmd_classify,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="homog-jump", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument("--threads", type=int, default=None, help="worker cap for parallel sweeps")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config)
        declared = cfg.get("command")
        if declared is not None and declared != args.command:
            raise ConfigError(f"config declares command {declared!r}, got {args.command!r}")
        out_dir = args.out or cfg.get("out") or "out"
        if args.command != "report":
            _seed(cfg)
        return HANDLERS[args.command](cfg, out_dir, args.threads)
    except (ConfigError, ModelFormatError, ModelValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
