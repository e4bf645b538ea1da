"""Command-line front end.

Exit codes: 0 on success, 2 on argument or input errors, 1 on numeric
failures (factorization, degenerate bounds). Data go to the files named by
flags; stdout carries a one-line summary.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as _bench
from . import optimizer as opt
from .bounds import FloatConfig, evaluate_all
from .designs import VARIANTS, DesignFamily, generate
from .errors import ConfigError, DegeneracyError, FactorizationError, GpdexError
from .geometry import read_design, write_design
from .kernels import kernel_from_dict, load_kernel

OBJECTIVES = ("nominal-sup", "nominal-bound", "nominal-case2", "numeric-case1", "numeric-case2",
              "param-bound-sup", "lambda-min-cc")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _cmd_generate(a):
    x = generate(DesignFamily(a.family, a.n, a.d, a.seed))
    write_design(a.out, x)
    print(f"generate: {a.family} n={a.n} d={a.d} seed={a.seed} -> {a.out}")


def _cmd_evaluate(a):
    x = read_design(a.design)
    spec = load_kernel(a.kernel)
    obs = None if a.observations is None else np.loadtxt(a.observations, delimiter=",", ndmin=1)
    rep = evaluate_all(x, spec, a.basis, FloatConfig(a.delta), grid=a.grid, observations=obs)
    Path(a.report).write_text(rep.to_json() + "\n")
    print(f"evaluate: n={rep.n} fill={rep.fill_distance} q={rep.separation_q:.6g} "
          f"flags={len(rep.flags)} -> {a.report}")


def build_objective(name, cfg):
    """Objective from its CLI name and a config mapping (kernel, basis, grid, ...)."""
    grid = int(cfg.get("grid", 41))
    basis = cfg.get("basis")
    if name == "numeric-case1":
        theta = cfg.get("theta")
        return opt.numeric_case1(None if theta is None else np.asarray(theta, dtype=float))
    if name == "lambda-min-cc":
        return opt.lambda_min_cc(cfg.get("rho", [3.0, 3.0]))
    if "kernel" not in cfg:
        raise ConfigError(f"objective {name!r} needs a 'kernel' entry in the config")
    spec = kernel_from_dict(cfg["kernel"])
    if name == "nominal-sup":
        return opt.nominal_sup(spec, basis, grid)
    if name == "nominal-bound":
        return opt.nominal_bound_objective(spec, basis, grid)
    if name == "nominal-case2":
        return opt.nominal_case2(spec, grid)
    if name == "numeric-case2":
        return opt.numeric_case2(spec, coarsen=bool(cfg.get("coarsen", False)))
    if name == "param-bound-sup":
        return opt.param_bound_sup(spec, basis or "constant", grid)
    raise ConfigError(f"unknown objective {name!r}")


def _cmd_optimize(a):
    cfg = _read_json(a.config) if a.config else {}
    target = build_objective(a.objective, cfg)
    if a.init == "lattice":
        n = int(cfg.get("n", 23))
        x0 = opt.initial_design(n, cfg.get("init_scale", "fill"), cfg.get("init_theta", 2.0), int(cfg.get("grid", 41)))
        jitter = float(cfg.get("jitter", 0.01))
        if jitter:
            x0 = np.clip(x0 + jitter * (np.random.default_rng(a.seed).random(x0.shape) - 0.5), 0.0, 1.0)
    else:
        if not a.design:
            raise ConfigError("--init file needs --design")
        x0 = read_design(a.design)
    nm = opt.NmConfig(max_evals=int(cfg.get("max_evals", 4000)), restarts=int(cfg.get("restarts", 1)))
    if "source" in cfg:
        src = build_objective(cfg["source"], cfg)
        res = opt.homotopy_optimize(src, target, x0, int(cfg.get("steps", 10)), nm)
    else:
        res = opt.optimize_design(target, x0, nm, scale=abs(target(x0)) or 1.0)
        res.value = target(res.x)
    write_design(a.out, res.x)
    if a.trace:
        opt.write_trace(a.trace, res.trace)
    print(f"optimize: {a.objective} value={res.value:.6g} evals={res.nfev} -> {a.out}")


def _cmd_figure(a):
    r = opt.reproduce_figure(a.which, n=a.n, seed=a.seed, budget=a.budget)
    write_design(a.out, r.design)
    if a.report:
        out = {"figure": r.config, "objective_value": r.value, "initial_value": r.initial_value,
               "report": r.report.to_dict()}
        Path(a.report).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"figure: {a.which} {r.objective}={r.value:.6g} (start {r.initial_value:.6g}) -> {a.out}")


def _cmd_bench(a):
    cfg = _read_json(a.config) if a.config else {}
    if a.seed is not None:
        cfg["master_seed"] = a.seed
    res = _bench.run_benchmark(_bench.BenchConfig.from_dict(cfg))
    res.write(a.out_dir)
    meds = ", ".join(f"{k}={v['true']['median']:.3g}" for k, v in res.summary.items()
                     if v["true"]["median"] is not None)
    print(f"bench: R={res.config['replications']} median true IMSPE: {meds} -> {a.out_dir}")


def build_parser():
    p = argparse.ArgumentParser(prog="gpdex", description="Gaussian-process design bounds and optimization")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="baseline or starting design")
    g.add_argument("--family", required=True, choices=VARIANTS)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    e = sub.add_parser("evaluate", help="metric report for a design")
    e.add_argument("--design", required=True)
    e.add_argument("--kernel", required=True)
    e.add_argument("--basis", default=None, choices=["none", "constant", "linear"])
    e.add_argument("--delta", type=float, default=1e-15)
    e.add_argument("--grid", type=int, default=41)
    e.add_argument("--observations", default=None, help="CSV column of responses (enables the rounding bound)")
    e.add_argument("--report", required=True)
    e.set_defaults(func=_cmd_evaluate)

    o = sub.add_parser("optimize", help="optimize a design for one criterion")
    o.add_argument("--objective", required=True, choices=OBJECTIVES)
    o.add_argument("--config", default=None)
    o.add_argument("--init", choices=["lattice", "file"], default="lattice")
    o.add_argument("--design", default=None, help="starting design for --init file")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--out", required=True)
    o.add_argument("--trace", default=None)
    o.set_defaults(func=_cmd_optimize)

    f = sub.add_parser("figure", help="reproduce a published design panel")
    f.add_argument("--which", required=True, choices=opt.FIGURES)
    f.add_argument("--n", type=int, default=23)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--budget", type=int, default=None)
    f.add_argument("--out", required=True)
    f.add_argument("--report", default=None)
    f.set_defaults(func=_cmd_figure)

    b = sub.add_parser("bench", help="Monte-Carlo IMSPE comparison")
    b.add_argument("--config", default=None)
    b.add_argument("--seed", type=int, default=None, help="overrides master_seed")
    b.add_argument("--out-dir", required=True)
    b.set_defaults(func=_cmd_bench)
    return p


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except (FactorizationError, DegeneracyError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"gpdex {args.command}: {exc}", file=sys.stderr)
        return 1
    except (GpdexError, ValueError, OSError) as exc:
        print(f"gpdex {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
