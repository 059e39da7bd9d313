"""Command-line front end: offline training, online solves, and benchmarks.

Exit codes: 0 success, 2 configuration error, 3 training failure,
4 solver failure, 5 partial benchmark failure.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import adaptive_solve, uniform_solve
from .descriptions import (
    load_system_description,
    write_fidelity_map_csv,
    write_iteration_csv,
    write_rows_csv,
)
from .library import library_checksum, library_stats, load_library, save_library
from .materials import AluminumConductivity
from .newton import NewtonError
from .reduced import ReducedSolveError
from .thermal_fin import (
    NODE_MAP_REGISTRY,
    build_catalog,
    fin_system,
    reference_spec,
    sample_test_params,
)
from .training import TrainingConfig, TrainingError, train_library

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAIN = 3
EXIT_SOLVE = 4
EXIT_PARTIAL = 5


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _load_trained_library(path):
    lib = load_library(path, NODE_MAP_REGISTRY)
    if not lib.is_trained():
        raise CliError(f"library {path} is not trained", EXIT_CONFIG)
    return lib


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _worker_count(args) -> int:
    env = os.environ.get("COMROM_WORKERS")
    if args.workers is not None:
        return max(1, args.workers)
    if env:
        return max(1, int(env))
    return 1


def cmd_train(args) -> int:
    out = _out_dir(args)
    config = TrainingConfig()
    if args.config:
        try:
            with open(args.config) as fh:
                config = TrainingConfig.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, TrainingError) as exc:
            raise CliError(f"bad training config: {exc}", EXIT_CONFIG) from exc
    if args.seed is not None:
        config.seed = args.seed
    if args.n_sample is not None:
        config.n_sample = args.n_sample

    material = AluminumConductivity()
    catalog = build_catalog()
    log = print if args.verbose else None
    try:
        report = train_library(catalog, config, material, log=log,
                               workers=_worker_count(args))
    except (TrainingError, NewtonError) as exc:
        raise CliError(f"training failed: {exc}", EXIT_TRAIN) from exc

    lib_path = out / args.library
    save_library(catalog, lib_path)
    report["library_file"] = str(lib_path)
    report["library_checksum"] = library_checksum(catalog)
    report["root_seed"] = config.seed
    report["version"] = __version__

    rows = []
    for cid, data in sorted(report["components"].items()):
        stats = data["eta_stats"]
        rows.append(
            [
                cid,
                data["n_bubble_dofs"],
                data["n_truth_points"],
                ";".join(map(str, data["bubble_sizes"])),
                ";".join(str(v) for v in data["rq_points"].values()),
                float(stats["min"]),
                float(stats["median"]),
                float(stats["max"]),
                int(stats["n_invalid"]),
            ]
        )
    write_rows_csv(
        out / "training_report.csv",
        ["component", "n_bubble_dofs", "n_truth_points", "bubble_sizes",
         "rq_points", "eta_min", "eta_median", "eta_max", "eta_invalid"],
        rows,
        header_comment=f"root_seed={config.seed}",
    )
    with open(out / "training_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(f"library written to {lib_path} ({report['library_stats']['total_scalars']} scalars)")
    for row in rows:
        print(f"  {row[0]}: bubble sizes {row[3]}, rq points {row[4]}, "
              f"eta median {row[6]:.3f} (max {row[7]:.3f}, invalid {row[8]})")
    return EXIT_OK


def cmd_adapt(args) -> int:
    out = _out_dir(args)
    lib = _load_trained_library(args.library)
    material = AluminumConductivity()
    try:
        system = load_system_description(args.system, lib)
    except Exception as exc:
        raise CliError(f"bad system description: {exc}", EXIT_CONFIG) from exc

    solver = uniform_solve if args.uniform else adaptive_solve
    kwargs = dict(rel_tol=args.tol, n_ref=args.nref, track_truth=args.truth)
    if not args.uniform:
        kwargs["delta_percent"] = args.delta
    t0 = time.time()
    try:
        solution, state, _reports = solver(system, material, **kwargs)
    except (ReducedSolveError, NewtonError, ValueError) as exc:
        raise CliError(f"solve failed: {exc}", EXIT_SOLVE) from exc
    wall = time.time() - t0

    mode = "uniform" if args.uniform else "adaptive"
    write_iteration_csv(
        out / f"iterations_{mode}.csv",
        state.iterations,
        header_comment=f"mode={mode} tol={args.tol} nref={args.nref} delta={args.delta}",
    )
    write_fidelity_map_csv(out / f"fidelity_map_{mode}.csv", system, state.assignment)

    n_truth = system.n_truth_dofs
    q_truth = sum(c.archetype.space.quad.n_points for c in system.components)
    last = state.iterations[-1]
    summary = {
        "mode": mode,
        "converged": state.converged,
        "stop_reason": state.stop_reason,
        "iterations": state.n_iterations,
        "n_rb": last.n_rb,
        "q_rb": last.q_rb,
        "n_truth_dofs": n_truth,
        "q_truth": q_truth,
        "dof_reduction": n_truth / last.n_rb,
        "quadrature_reduction": q_truth / last.q_rb,
        "estimate": last.estimate,
        "relative_estimate": last.relative_estimate,
        "true_error": last.true_error,
        "true_relative_error": last.true_relative_error,
        "effectivity": last.effectivity,
        "wall_time_s": wall,
        "tol": args.tol,
        "version": __version__,
    }
    with open(out / f"summary_{mode}.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(
        f"{mode}: converged={state.converged} iterations={state.n_iterations} "
        f"n_rb={last.n_rb} rel_estimate={last.relative_estimate:.3e} "
        f"reduction {summary['dof_reduction']:.1f}x / {summary['quadrature_reduction']:.1f}x"
    )
    return EXIT_OK


def _bench_test1(lib, material, n_fin, args, out):
    spec = reference_spec(n_fin, hot_cross=(1, 1))
    system = fin_system(lib, spec)
    solution, state, reports = adaptive_solve(
        system, material, rel_tol=args.tol, n_ref=args.nref,
        delta_percent=args.delta, track_truth=True,
    )
    hot = next(
        ci for ci, c in enumerate(system.components) if c.label == "junction(1,1)"
    )
    dist = system.graph_distances(hot)
    refined = sorted({ci for rec in state.iterations for ci in rec.refined})
    max_dist = max((int(dist[ci]) for ci in refined), default=0)
    write_iteration_csv(out / f"test1_nfin{n_fin}_iterations.csv", state.iterations)
    write_fidelity_map_csv(out / f"test1_nfin{n_fin}_fidelity.csv", system, state.assignment)
    last = state.iterations[-1]
    return {
        "test": 1,
        "n_fin": n_fin,
        "converged": state.converged,
        "iterations": state.n_iterations,
        "max_refined_distance": max_dist,
        "effectivity": last.effectivity,
        "relative_estimate": last.relative_estimate,
        "true_relative_error": last.true_relative_error,
    }


def _bench_test2(lib, material, n_fin, sample_index, spec, args, out):
    system = fin_system(lib, spec)
    results = {}
    for mode, solver in (("adaptive", adaptive_solve), ("uniform", uniform_solve)):
        kwargs = dict(rel_tol=args.tol, n_ref=args.nref, track_truth=True)
        if mode == "adaptive":
            kwargs["delta_percent"] = args.delta
        solution, state, reports = solver(system, material, **kwargs)
        write_iteration_csv(
            out / f"test2_nfin{n_fin}_s{sample_index}_{mode}.csv", state.iterations
        )
        last = state.iterations[-1]
        results[mode] = {
            "converged": state.converged,
            "iterations": state.n_iterations,
            "n_rb": last.n_rb,
            "q_rb": last.q_rb,
            "effectivity": last.effectivity,
            "true_relative_error": last.true_relative_error,
        }
    return {
        "test": 2,
        "n_fin": n_fin,
        "sample": sample_index,
        "adaptive": results["adaptive"],
        "uniform": results["uniform"],
        "adaptive_fewer_dofs": results["adaptive"]["n_rb"] <= results["uniform"]["n_rb"],
    }


def cmd_bench(args) -> int:
    out = _out_dir(args)
    lib = _load_trained_library(args.library)
    material = AluminumConductivity()
    try:
        nfins = [int(t) for t in args.nfin.split(",") if t.strip()]
    except ValueError as exc:
        raise CliError(f"bad --nfin list: {exc}", EXIT_CONFIG) from exc
    if not nfins:
        raise CliError("--nfin list is empty", EXIT_CONFIG)

    rows = []
    failures = []
    for n_fin in nfins:
        try:
            res = _bench_test1(lib, material, n_fin, args, out)
            rows.append(
                ["test1", n_fin, "", res["converged"], res["iterations"],
                 res["max_refined_distance"], float(res["effectivity"] or 0.0),
                 float(res["relative_estimate"]), float(res["true_relative_error"] or 0.0),
                 "", ""]
            )
        except Exception as exc:  # partial failures recorded, run continues
            failures.append(f"test1 n_fin={n_fin}: {exc}")
        for si, spec in enumerate(sample_test_params(n_fin, args.samples, args.seed)):
            try:
                res = _bench_test2(lib, material, n_fin, si, spec, args, out)
                rows.append(
                    ["test2", n_fin, si, res["adaptive"]["converged"],
                     res["adaptive"]["iterations"], "",
                     float(res["adaptive"]["effectivity"] or 0.0), "",
                     float(res["adaptive"]["true_relative_error"] or 0.0),
                     res["adaptive"]["n_rb"], res["uniform"]["n_rb"]]
                )
            except Exception as exc:
                failures.append(f"test2 n_fin={n_fin} sample={si}: {exc}")

    write_rows_csv(
        out / "bench.csv",
        ["test", "n_fin", "sample", "converged", "iterations", "max_refined_distance",
         "effectivity", "relative_estimate", "true_relative_error",
         "n_rb_adaptive", "n_rb_uniform"],
        rows,
        header_comment=f"root_seed={args.seed} samples={args.samples}",
    )
    with open(out / "bench_summary.json", "w") as fh:
        json.dump({"rows": len(rows), "failures": failures, "root_seed": args.seed},
                  fh, indent=2, sort_keys=True)
    print(f"bench: {len(rows)} rows, {len(failures)} failures -> {out / 'bench.csv'}")
    for f in failures:
        print(f"  FAILED {f}")
    return EXIT_PARTIAL if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comrom",
        description="Component-based reduced-order modeling of nonlinear heat conduction",
    )
    parser.add_argument("--version", action="version", version=f"comrom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the offline training pipeline")
    p_train.add_argument("--config", help="JSON training config file")
    p_train.add_argument("--seed", type=int, help="override the root seed")
    p_train.add_argument("--n-sample", type=int, dest="n_sample",
                         help="override the subsystem sample count")
    p_train.add_argument("--library", default="library.npz",
                         help="library filename inside --out")
    p_train.add_argument("--out", default=".", help="output directory")
    p_train.add_argument("--workers", type=int, default=None)
    p_train.add_argument("--verbose", action="store_true")
    p_train.set_defaults(func=cmd_train)

    p_adapt = sub.add_parser("adapt", help="adaptive (or uniform) online solve")
    p_adapt.add_argument("--library", required=True)
    p_adapt.add_argument("--system", required=True, help="system description JSON")
    p_adapt.add_argument("--tol", type=float, default=0.01)
    p_adapt.add_argument("--nref", type=int, default=10)
    p_adapt.add_argument("--delta", type=float, default=10.0)
    p_adapt.add_argument("--uniform", action="store_true")
    p_adapt.add_argument("--truth", action="store_true",
                         help="also track the true error per iteration")
    p_adapt.add_argument("--out", default=".")
    p_adapt.add_argument("--workers", type=int, default=None)
    p_adapt.set_defaults(func=cmd_adapt)

    p_bench = sub.add_parser("bench", help="run the two benchmark tests")
    p_bench.add_argument("--library", required=True)
    p_bench.add_argument("--nfin", required=True, help="comma list, e.g. 2,3")
    p_bench.add_argument("--samples", type=int, default=5)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--tol", type=float, default=0.01)
    p_bench.add_argument("--nref", type=int, default=10)
    p_bench.add_argument("--delta", type=float, default=20.0)
    p_bench.add_argument("--out", default=".")
    p_bench.add_argument("--workers", type=int, default=None)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    from .library import LibraryFormatError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FileNotFoundError, LibraryFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
