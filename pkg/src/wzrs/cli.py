"""Command-line experiment runner.

Exit codes: 0 success, 1 a bound check failed, 2 configuration error,
3 budget guard hit, 4 numerical failure during a run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (BudgetExceeded, ItoFunction, bound_constants, check_pathwise_bound, check_x_bound,
                       estimate_rate, path_seeds, verify_ito_rs)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .drivers import polygonal_approx, sample_brownian, transport_process
from .jumps import sample_jump_path
from .lamperti import LampertiKit
from .solvers import build_S, inverse_transform

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET, EXIT_NUMERIC = 0, 1, 2, 3, 4

MMBM_DEMO = {
    "model": {"preset": "mmbm"},
    "jumps": {"kind": "markov", "Q": [[-2.0, 2.0], [3.0, -3.0]], "j0": 0},
    "driver": {"kind": "polygonal", "lambda": 256.0, "lambdas": [16.0, 32.0, 64.0, 128.0, 256.0]},
    "step": {"ratio": 8},
    "paths": 20,
}


def _write_json(path: str, data: dict) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _header(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "config_hash": cfg.hash, "version": __version__, "seed": cfg.seed}


def _realization(cfg: ExperimentConfig, kit: LampertiKit, gen, index: int, lam: float):
    """Jump path, Brownian path and driver for one path index."""
    sj, sb, st = path_seeds(cfg.seed, index)
    J = sample_jump_path(gen, cfg.j0, cfg.T, sj)
    step = cfg.step_for(lam)
    B = sample_brownian(cfg.T, step, sb, forced_times=J.epochs[1:])
    if cfg.driver_kind == "polygonal":
        F = polygonal_approx(B, lam)
    else:
        F = transport_process(lam, cfg.T, st)
    return J, B, F


def cmd_simulate(cfg: ExperimentConfig) -> int:
    """One realization: jump path and the X, X_lambda, S, S_lambda paths as CSV."""
    model, gen = cfg.build_model(), cfg.build_generator()
    kit = LampertiKit(model)
    J, B, F = _realization(cfg, kit, gen, 0, cfg.lam)
    S = build_S(kit, J, B)
    Sl = build_S(kit, J, F, grid=B.grid) if F.coupled else build_S(kit, J, F, step=cfg.step_for(cfg.lam))
    X, Xl = inverse_transform(kit, J, S), inverse_transform(kit, J, Sl)
    os.makedirs(cfg.out, exist_ok=True)
    J.to_csv(os.path.join(cfg.out, "jumps.csv"))
    for name, path in (("X", X), ("X_lambda", Xl), ("S", S), ("S_lambda", Sl)):
        path.to_csv(os.path.join(cfg.out, f"{name}.csv"))
    manifest = _header(cfg, "simulate")
    manifest.update({"lambda": cfg.lam, "driver": cfg.driver_kind, "n_jumps": J.n_jumps,
                     "rows": {"X": len(X.times), "X_lambda": len(Xl.times), "S": len(S.times),
                              "S_lambda": len(Sl.times), "jumps": J.n_jumps + 1},
                     "x_route": "inverse-transform"})
    _write_json(os.path.join(cfg.out, "simulate.json"), manifest)
    print(f"simulate: {J.n_jumps} jumps, {len(X.times)} grid points -> {cfg.out}")
    return EXIT_OK


def _square_family() -> ItoFunction:
    return ItoFunction(f=lambda i, t, x: x * x + i * t, d1=lambda i, t, x: float(i),
                       d2=lambda i, t, x: 2.0 * x, d22=lambda i, t, x: 2.0)


def cmd_verify(cfg: ExperimentConfig) -> int:
    """Pathwise and transform bounds plus Ito residuals on ``paths`` seeds."""
    if cfg.driver_kind != "polygonal":
        raise ConfigError("uncoupled driver: bound checks need the polygonal driver")
    model, gen = cfg.build_model(), cfg.build_generator()
    kit = LampertiKit(model)
    try:
        c = bound_constants(model)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    fam = _square_family()
    rows, failing = [], []
    for p in range(cfg.paths):
        J, B, F = _realization(cfg, kit, gen, p, cfg.lam)
        S, Sl = build_S(kit, J, B), build_S(kit, J, F, grid=B.grid)
        X, Xl = inverse_transform(kit, J, S), inverse_transform(kit, J, Sl)
        pw = check_pathwise_bound(S, Sl, F, B, J.n_jumps, c, cfg.slack_rel, cfg.slack_abs, detailed=True)
        xb = check_x_bound(X, Xl, S, Sl, model.V, cfg.slack_x)
        ito = verify_ito_rs(fam, F, J, step=cfg.ito_step)
        ok = pw.passed and xb.passed
        if not ok:
            failing.append(p)
        rows.append({"seed_index": p, "passed": ok, "pathwise": pw.to_dict(), "x_bound": xb.to_dict(),
                     "ito_residual": ito})
    report = _header(cfg, "verify")
    report.update({"lambda": cfg.lam, "constants": {"Mbar": c.Mbar, "K1": c.K1, "K2": c.K2, "K3": c.K3},
                   "n_pass": cfg.paths - len(failing), "n_fail": len(failing), "failing_seeds": failing,
                   "max_ito_residual": max(r["ito_residual"] for r in rows), "per_seed": rows})
    os.makedirs(cfg.out, exist_ok=True)
    _write_json(os.path.join(cfg.out, "verify.json"), report)
    print(f"verify: {report['n_pass']}/{cfg.paths} seeds pass")
    if failing:
        print(f"verify: failing seeds {failing}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_converge(cfg: ExperimentConfig) -> int:
    """Strong-rate sweep: per-(lambda, seed) CSV and a JSON summary."""
    if cfg.driver_kind != "polygonal":
        raise ConfigError("uncoupled driver: the rate harness needs the polygonal driver")
    model, gen = cfg.build_model(), cfg.build_generator()
    error_fn = None
    if cfg.synthetic is not None:
        expo, scale = cfg.synthetic["exponent"], cfg.synthetic["scale"]
        error_fn = lambda lam, p: scale * lam ** expo  # noqa: E731
    step_rule = cfg.step_ratio if cfg.step is None else (lambda lam: cfg.step)
    est = estimate_rate(model, gen, "polygonal", cfg.lambdas, cfg.paths, step_rule, cfg.gamma, cfg.epsilon,
                        cfg.q, cfg.seed, j0=cfg.j0, T=cfg.T, workers=cfg.workers,
                        max_path_steps=cfg.max_path_steps, error_fn=error_fn)
    os.makedirs(cfg.out, exist_ok=True)
    est.to_csv(os.path.join(cfg.out, "rates.csv"))
    extra = _header(cfg, "converge")
    extra["synthetic"] = cfg.synthetic is not None
    est.write_summary(os.path.join(cfg.out, "summary.json"), extra)
    print(f"converge: slope {est.slope:.4f} over {len(cfg.lambdas)} lambdas, {cfg.paths} paths")
    return EXIT_OK


def cmd_dump_lamperti(cfg: ExperimentConfig) -> int:
    """Table of the transform, its inverse and the transformed drift per regime."""
    import csv

    model = cfg.build_model()
    kit = LampertiKit(model)
    d = cfg.dump
    xs = np.linspace(d["x_lo"], d["x_hi"], d["n"])
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "lamperti.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["regime", "t", "x", "h", "h_inv_h", "d1_h", "mu_star"])
        for i in range(model.n_regimes):
            for row in kit.table(i, d["t"], xs):
                w.writerow([i, repr(d["t"])] + [repr(float(v)) for v in row])
    print(f"dump-lamperti: {model.n_regimes} regimes x {d['n']} points -> {cfg.out}")
    return EXIT_OK


def cmd_demo_mmbm(cfg: ExperimentConfig) -> int:
    """Built-in MMBM walkthrough: one simulation, a bound sweep and a short rate sweep."""
    base = cfg.out
    codes = []
    for name, fn in (("simulate", cmd_simulate), ("verify", cmd_verify), ("converge", cmd_converge)):
        sub = ExperimentConfig(**{**cfg.__dict__, "out": os.path.join(base, name)})
        codes.append(fn(sub))
    return max(codes)


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "converge": cmd_converge,
    "demo-mmbm": cmd_demo_mmbm,
    "dump-lamperti": cmd_dump_lamperti,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wzrs", description="Regime-switching SDE experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        sp.add_argument("--config", help="JSON experiment config" + (" (optional)" if name == "demo-mmbm" else ""),
                        required=name != "demo-mmbm")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
        sp.add_argument("--out", help="output directory (overrides the config)")
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            cfg = parse_config(MMBM_DEMO)
        else:
            cfg = load_config(args.config)
        cfg = cfg.with_overrides(seed=args.seed, workers=args.workers, out=args.out)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ArithmeticError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
