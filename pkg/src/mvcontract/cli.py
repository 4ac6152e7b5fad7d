"""Command-line front end.

Subcommands:

* ``constants``  model config in, JSON constant report + CSV tabulation out
* ``simulate``   trajectory snapshots to CSV or a binary ledger
* ``transport``  distance between two CSV point clouds, JSON out
* ``contract``   contraction-decay experiment
* ``chaos``      propagation-of-chaos experiment over a grid of system sizes
* ``ergodic``    long-run invariant-law convergence experiment
* ``moments``    moment-boundedness experiment

Experiment subcommands read an :class:`ExperimentConfig` JSON file; the
common flags override individual fields.  Outputs go to ``--out-prefix`` as
``<prefix>.csv`` / ``<prefix>.json`` (and ``<prefix>.svg`` with ``--plot``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .constants import build_pipeline1, build_pipeline2, report_json, write_table_csv
from .experiments import (
    ExperimentConfig,
    plot_series,
    run_chaos,
    run_contraction,
    run_ergodicity,
    run_moment_bound,
)
from .model import load_model_config
from .simulate import (
    CoupledEnsemble,
    ParticleEnsemble,
    StepPlan,
    run_coupled,
    run_particle_system,
    write_ledger,
    write_trajectory_csv,
)
from .transport import EmpiricalMeasure, w1, w_cost


def _add_override_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="ExperimentConfig JSON file")
    p.add_argument("--n", type=int)
    p.add_argument("--h", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["mixed", "synchronous", "reflection", "independent"])
    p.add_argument("--delta", type=float)
    p.add_argument("--replicates", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--pipeline", type=int, choices=[1, 2])
    p.add_argument("--out-prefix", default="experiment")
    p.add_argument("--plot", action="store_true", help="also emit an SVG decay plot")


def _config_from_args(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config)
    overrides = {}
    for name in ("n", "h", "T", "seed", "mode", "delta", "replicates", "stride", "pipeline"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(config, **overrides) if overrides else config


def _emit(result, args, times=None, curves=None):
    result.write_csv(args.out_prefix + ".csv")
    with open(args.out_prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(result.summary(), fh, indent=2)
    if args.plot and times is not None and curves:
        plot_series(args.out_prefix + ".svg", times, curves)
    print(json.dumps(result.summary(), indent=2))


def _cmd_constants(args) -> int:
    model, bundle = load_model_config(args.model_config)
    if args.pipeline == 1:
        report = build_pipeline1(model, bundle, quad_tol=args.quad_tol, seed=args.seed)
    else:
        report = build_pipeline2(
            model, bundle, quad_tol=args.quad_tol,
            initial_moment_cap=args.moment_cap, seed=args.seed,
        )
    doc = report_json(report)
    with open(args.out_json, "w", encoding="utf-8") as fh:
        fh.write(doc + "\n")
    write_table_csv(report, args.out_csv)
    print(doc)
    return 0


def _cmd_simulate(args) -> int:
    config = _config_from_args(args)
    model, _ = config.build()
    plan = StepPlan(h=config.h, steps=config.steps, stride=config.stride, seed=config.seed)

    def emit(snaps, path):
        if args.format == "csv":
            write_trajectory_csv(path, snaps)
        else:
            write_ledger(path, snaps, config.h)

    if args.single:
        x0 = config.initial_x.sample(config.n, model.dim, config.seed, 0, 10)
        snaps = run_particle_system(ParticleEnsemble(x0, model, stream=0), plan)
        emit(snaps, args.out)
        print(f"wrote {len(snaps)} snapshots to {args.out}")
        return 0

    x0 = config.initial_x.sample(config.n, model.dim, config.seed, 0, 10)
    y0 = config.initial_y.sample(config.n, model.dim, config.seed, 0, 11)
    ce = CoupledEnsemble(
        ParticleEnsemble(x0, model, stream=0),
        ParticleEnsemble(y0, model, stream=1),
        delta=config.delta, mode=config.mode, stream=0,
    )
    snaps = run_coupled(ce, plan, diagnostics_at_records=False)
    stem, dot, ext = args.out.rpartition(".")
    base = stem if dot else args.out
    suffix = ("." + ext) if dot else ""
    emit([s.X for s in snaps], base + ".x" + suffix)
    emit([s.Y for s in snaps], base + ".y" + suffix)
    print(f"wrote {len(snaps)} coupled snapshots to {base}.x{suffix} / {base}.y{suffix}")
    return 0


def _cmd_transport(args) -> int:
    mu = EmpiricalMeasure(np.loadtxt(args.mu, delimiter=",", ndmin=2))
    nu = EmpiricalMeasure(np.loadtxt(args.nu, delimiter=",", ndmin=2))
    if args.power == 1.0:
        res = w1(mu, nu, seed=args.seed)
    else:
        res = w_cost(mu, nu, args.power, seed=args.seed)
    doc = json.dumps({"value": res.value, "method": res.method, "gap": res.gap}, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(doc + "\n")
    print(doc)
    return 0


def _cmd_contract(args) -> int:
    result = run_contraction(_config_from_args(args))
    curves = {"w1": result.w1_mean, "bound": result.bound}
    _emit(result, args, result.times, curves)
    return 0 if (result.dominated or not result.bound_applicable) else 1


def _cmd_chaos(args) -> int:
    n_grid = [int(v) for v in args.n_grid.split(",")]
    result = run_chaos(_config_from_args(args), n_grid)
    curves = {"w1": result.w1_mean, "bound": result.bound}
    _emit(result, args, result.n_grid, curves)
    return 0


def _cmd_ergodic(args) -> int:
    result = run_ergodicity(_config_from_args(args))
    _emit(result, args, result.cauchy_s, {"cauchy_w1": result.cauchy_w1})
    return 0 if result.moments_match in (None, True) else 1


def _cmd_moments(args) -> int:
    result = run_moment_bound(_config_from_args(args))
    curves = {"mean_abs": result.mean_abs,
              "ceiling": np.full_like(result.mean_abs, result.ceiling)}
    _emit(result, args, result.times, curves)
    return 0 if result.below_ceiling else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvcontract", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="compute contraction constants")
    p.add_argument("--model-config", required=True, help="model JSON: {name, params}")
    p.add_argument("--pipeline", type=int, choices=[1, 2], default=1)
    p.add_argument("--quad-tol", type=float, default=1e-10)
    p.add_argument("--moment-cap", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-json", default="constants.json")
    p.add_argument("--out-csv", default="constants_table.csv")
    p.set_defaults(func=_cmd_constants)

    p = sub.add_parser("simulate", help="write trajectory snapshots")
    _add_override_flags(p)
    p.add_argument("--single", action="store_true", help="one particle system instead of a coupled pair")
    p.add_argument("--format", choices=["csv", "ledger"], default="csv")
    p.add_argument("--out", default="trajectory.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("transport", help="distance between two CSV point clouds")
    p.add_argument("mu")
    p.add_argument("nu")
    p.add_argument("--power", type=float, default=1.0, help="W_p power (1 = W1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_transport)

    for name, func, extra in (
        ("contract", _cmd_contract, None),
        ("chaos", _cmd_chaos, "n_grid"),
        ("ergodic", _cmd_ergodic, None),
        ("moments", _cmd_moments, None),
    ):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_override_flags(p)
        if extra == "n_grid":
            p.add_argument("--n-grid", default="64,128,256,512,1024,2048")
        p.set_defaults(func=func)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
