"""Command-line entry points.

    densitypath pretrain --problem NAME --boundary {0,1} --out FILE
    densitypath run      (--problem NAME | --config FILE) [--desk] [--set k=v ...]
    densitypath ablate   (--problem NAME | --config FILE) (--N LIST | --K LIST)
    densitypath verify   [--fast] [--seed S]

Exit codes: 0 ok, 1 failed check or runtime error, 2 configuration error.
Config overrides use dotted keys into the YAML schema, e.g.
--set quadrature.N=20 --set optim.epochs=3; values parse as YAML scalars.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import torch
import yaml

from .action import Quadrature
from .checkpoints import load_params, save_params
from .errors import (ConfigurationError, DomainError, NumericalBlowupError,
                     ShapeMismatchError, TrainingDivergedError, UnknownProblemError)
from .flowmatch import pretrain_boundary
from .node import transport
from .optim import eval_action, solve, xi_sampler_for
from .problems import (ProblemConfig, boundary_fit_error, desk_shrink, from_dict,
                       get_problem, problem_names, reference_sampler, to_dict,
                       torch_sampler)
from .runs import create_run_dir, finalize_run, read_config, save_epoch, write_config

CONFIG_ERRORS = (ConfigurationError, DomainError, ShapeMismatchError,
                 UnknownProblemError, KeyError, yaml.YAMLError)


def _apply_sets(problem: ProblemConfig, sets: list) -> ProblemConfig:
    if not sets:
        return problem
    data = to_dict(problem)
    for item in sets:
        if "=" not in item:
            raise ConfigurationError(f"--set expects dotted.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigurationError(f"unknown config key {key!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigurationError(f"unknown config key {key!r}")
        node[parts[-1]] = yaml.safe_load(raw)
    return from_dict(data)


def _load_problem(args) -> ProblemConfig:
    if getattr(args, "config", None):
        problem = read_config(args.config)
    elif getattr(args, "problem", None):
        problem = get_problem(args.problem)
    else:
        raise ConfigurationError("supply --problem NAME or --config FILE")
    if getattr(args, "desk", False):
        problem = desk_shrink(problem)
    problem = _apply_sets(problem, getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        problem = replace(problem, seed=args.seed)
    return problem


def cmd_pretrain(args) -> int:
    problem = _load_problem(args)
    spec = problem.boundary1 if args.boundary == 1 else problem.boundary0
    tag = f"boundary{args.boundary}"
    ref = reference_sampler(problem)
    result = pretrain_boundary(torch_sampler(spec), problem.arch, problem.fm,
                               seed=problem.seed + (11 if args.boundary == 0 else 13),
                               reference_sampler=ref)
    save_params(args.out, result.params, tag=tag)
    gen = torch.Generator().manual_seed(problem.seed + 999)
    z = ref(2000, gen)
    with torch.no_grad():
        cloud = transport(result.params, z, problem.integrator)
    w2 = boundary_fit_error(cloud, spec)
    print(f"final FM loss: {result.final_loss:.6f}")
    print(f"boundary W2: {w2:.6f}")
    print(f"checkpoint: {args.out}")
    return 0


def _run_one(problem: ProblemConfig, args) -> str:
    run_dir = create_run_dir(problem, root=getattr(args, "out_root", None))
    write_config(run_dir, problem)
    theta0 = theta1 = None
    if getattr(args, "theta0", None):
        theta0, _ = load_params(args.theta0)
    if getattr(args, "theta1", None):
        theta1, _ = load_params(args.theta1)
    quiet = getattr(args, "quiet", False)
    log = (lambda msg: None) if quiet else print
    result = solve(problem, theta0=theta0, theta1=theta1,
                   on_epoch=lambda k, path, row: save_epoch(run_dir, k, path),
                   progress=log)
    finalize_run(run_dir, problem, result)
    print(f"final action: {float(result.final_action.total):.6f}")
    print(f"run dir: {run_dir}")
    return run_dir


def _fine_action(problem: ProblemConfig, path, n_eval: int = 50) -> dict:
    """Re-evaluate an optimized path on a fine time grid (fixed seed).

    The sample batch is widened past the training width: ablation sweeps
    compare runs at the half-percent level, below the training batch's own
    estimator noise.
    """
    quad = Quadrature(N=n_eval, M=problem.quad.M)
    ref = reference_sampler(problem)
    gen = torch.Generator().manual_seed(problem.seed + 7919)
    z = ref(max(problem.quad.M, 1024), gen)
    val = eval_action(path, z, problem.action, quad, problem.integrator,
                      generator=gen, xi_sampler=xi_sampler_for(problem))
    potential = float(val.linear + val.internal + val.interaction + val.fisher)
    return {"total": float(val.total), "kinetic": float(val.kinetic), "potential": potential}


def _parse_int_list(raw: str, what: str) -> list:
    try:
        vals = [int(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigurationError(f"--{what} expects comma-separated integers, got {raw!r}") from exc
    if not vals:
        raise ConfigurationError(f"--{what} got an empty list")
    return vals


def _ablate(problem: ProblemConfig, args, run_dir: str | None = None) -> str:
    sweep_n = getattr(args, "ablate_N", None) or getattr(args, "N", None)
    sweep_k = getattr(args, "ablate_K", None) or getattr(args, "K", None)
    if not sweep_n and not sweep_k:
        raise ConfigurationError("ablation needs --N or --K with a value list")
    if run_dir is None:
        run_dir = create_run_dir(replace(problem, name=problem.name + "-ablate"),
                                 root=getattr(args, "out_root", None))
        write_config(run_dir, problem)
    quiet = getattr(args, "quiet", False)
    log = (lambda msg: None) if quiet else print

    if sweep_n:
        rows = []
        for n in _parse_int_list(sweep_n, "N"):
            variant = replace(problem, quad=Quadrature(N=n, M=problem.quad.M))
            log(f"ablate N={n}")
            result = solve(variant, progress=lambda msg: None)
            row = {"N": n, **_fine_action(variant, result.path)}
            rows.append(row)
            log(f"  action {row['total']:.4f} kinetic {row['kinetic']:.4f} potential {row['potential']:.4f}")
        _write_rows(os.path.join(run_dir, "ablate-N.csv"), ["N", "total", "kinetic", "potential"], rows)
    if sweep_k:
        rows = []
        for k in _parse_int_list(sweep_k, "K"):
            variant = replace(problem, K=k)
            log(f"ablate K={k}")
            result = solve(variant, progress=lambda msg: None)
            row = {"K": k, **_fine_action(variant, result)}
            rows.append(row)
            log(f"  action {row['total']:.4f} kinetic {row['kinetic']:.4f} potential {row['potential']:.4f}")
        _write_rows(os.path.join(run_dir, "ablate-K.csv"), ["K", "total", "kinetic", "potential"], rows)
    print(f"run dir: {run_dir}")
    return run_dir


def _write_rows(path: str, columns: list, rows: list):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])


def cmd_run(args) -> int:
    problem = _load_problem(args)
    if getattr(args, "ablate_N", None) or getattr(args, "ablate_K", None):
        _ablate(problem, args)
        return 0
    _run_one(problem, args)
    return 0


def cmd_ablate(args) -> int:
    problem = _load_problem(args)
    _ablate(problem, args)
    return 0


def cmd_verify(args) -> int:
    from .verify import run_all

    checks = run_all(seed=args.seed if args.seed is not None else 0,
                     include_slow=not args.fast)
    failed = 0
    for check in checks:
        print(check.line())
        failed += 0 if check.passed else 1
    if failed:
        print(f"{failed} of {len(checks)} checks failed")
        return 1
    print(f"all {len(checks)} checks passed")
    return 0


def cmd_problems(args) -> int:
    for name in problem_names():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densitypath",
        description="Action-minimizing density paths via spline-parameterized transport maps.")
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_problem_args(p):
        p.add_argument("--problem", help="registered problem name")
        p.add_argument("--config", help="path to a YAML config (or a run dir)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--desk", action="store_true",
                       help="shrink budgets to laptop scale")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted config override, repeatable")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("pretrain", help="flow-match a boundary map")
    add_problem_args(p)
    p.add_argument("--boundary", type=int, choices=(0, 1), required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("run", help="optimize a density path and export artifacts")
    add_problem_args(p)
    p.add_argument("--out-root", default=None, help="override the run output root")
    p.add_argument("--theta0", help="pretrained boundary-0 checkpoint")
    p.add_argument("--theta1", help="pretrained boundary-1 checkpoint")
    p.add_argument("--ablate-N", dest="ablate_N", help="comma-separated N sweep")
    p.add_argument("--ablate-K", dest="ablate_K", help="comma-separated K sweep")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="sweep time discretization or control points")
    add_problem_args(p)
    p.add_argument("--out-root", default=None)
    p.add_argument("--N", help="comma-separated N sweep")
    p.add_argument("--K", help="comma-separated K sweep")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", help="run the oracle self-checks")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fast", action="store_true", help="skip the optimization-based checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("problems", help="list registered problems")
    p.set_defaults(func=cmd_problems)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, NumericalBlowupError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
