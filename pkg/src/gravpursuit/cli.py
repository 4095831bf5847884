"""Command line interface.

Subcommands: ``grid``, ``simulate``, ``solve``, ``path``, ``select``,
``bench`` and ``report``. Scenario configs are JSON objects whose keys
are :class:`~gravpursuit.bench.Scenario` fields.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .bench import (TEST_CASES, Scenario, boxplot_stats, export,
                    load_manifest, read_inefficiency_csv, run_scenario, write_stats_csv)
from .errors import InputError, ParseError, SolverError
from .forward import (apply_forward, build_design_matrix, export_coefficients,
                      height_to_radius, ingest_coefficients, read_grid_csv,
                      reuter_grid, scattered_track_grid, synth_truth, write_grid_csv)
from .rfmp import SolverConfig, run
from .rofmp import run_with_restarts
from .selection import (METHODS, RegularizationPath, SpectralSurrogate, build_path,
                        choose, inefficiency, lambda_grid, max_index_colored,
                        max_index_white)


def _load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return cfg


def _scenario(args):
    """Scenario from ``--config``/``--scenario`` plus command line overrides."""
    cfg = _load_config(getattr(args, "config", None))
    row = getattr(args, "scenario", None)
    if row:
        h, pct, noise, grid = row.strip("()").split(",")
        cfg.update(height_km=float(h), n2s=float(pct) / 100.0, noise=noise, grid=grid)
    s = Scenario.from_dict(cfg)
    if args.desk_scale:
        s = s.desk()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
        over["seeds"] = None
    if args.solver is not None:
        over["solver"] = args.solver
    if args.truth is not None:
        over["truth"] = args.truth
    if getattr(args, "realizations", None) is not None:
        over["realizations"] = args.realizations
        over["seeds"] = None
    if over:
        s = Scenario.from_dict({**s.to_dict(), **over})
    return s


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# simulation directory: grid.csv, data.csv, truth.gfc, meta.json
# --------------------------------------------------------------------------

def _load_sim(directory):
    with open(os.path.join(directory, "meta.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    grid, tracks = read_grid_csv(os.path.join(directory, "grid.csv"), meta["radius"],
                                 kind=meta["grid"])
    # data rows follow the grid file order
    rows = np.loadtxt(os.path.join(directory, "data.csv"), delimiter=",",
                      skiprows=1, ndmin=2)
    matrix = build_design_matrix(grid, meta["max_degree"])
    return meta, grid, tracks, matrix, rows[:, 1], rows[:, 2]


def cmd_grid(args):
    r = height_to_radius(args.height)
    if args.kind == "R":
        grid, tracks = reuter_grid(args.control, r), None
    else:
        grid, tracks = scattered_track_grid(*args.tracks, seed=args.seed or 0, radius=r)
    write_grid_csv(args.out, grid, tracks)
    print(f"{len(grid)} points -> {args.out}")


def cmd_simulate(args):
    s = _scenario(args)
    r = s.radius
    if s.grid == "R":
        grid, tracks = reuter_grid(s.reuter_control, r), None
    else:
        grid, tracks = scattered_track_grid(*s.tracks, seed=s.grid_seed, radius=r)
    os.makedirs(args.out, exist_ok=True)
    gpath = os.path.join(args.out, "grid.csv")
    write_grid_csv(gpath, grid, tracks)
    # reload so the point order matches the file
    grid, tracks = read_grid_csv(gpath, r, kind=s.grid)
    matrix = build_design_matrix(grid, s.max_degree)
    if s.truth == "synth":
        truth = synth_truth(s.max_degree, s.power_exponent, seed=s.truth_seed)
    else:
        truth = ingest_coefficients(s.truth, s.max_degree)
    y = apply_forward(matrix, truth)
    y_eps, info = s.noise_spec().apply(y, grid, tracks, seed=s.noise_seeds[0])
    with open(os.path.join(args.out, "data.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "y_clean", "y_noisy"])
        for i, (a, b) in enumerate(zip(y, y_eps)):
            w.writerow([i, repr(float(a)), repr(float(b))])
    export_coefficients(truth, os.path.join(args.out, "truth.gfc"))
    _write_json(os.path.join(args.out, "meta.json"), {
        "scenario": s.to_dict(), "radius": r, "max_degree": s.max_degree,
        "grid": s.grid, "noise_level": s.noise_spec().level(y, grid),
        "n2s": s.n2s, "seed": s.noise_seeds[0], "alpha": info.get("alpha"),
    })
    print(f"{len(grid)} data points -> {args.out}")


def cmd_solve(args):
    meta, grid, _, matrix, y, y_eps = _load_sim(args.data)
    rho = meta["noise_level"] * np.sqrt(len(grid))
    cfg = SolverConfig(lam=args.lam, stop_residual=rho, stop_alpha=args.stop_alpha,
                       max_iter=args.max_iter, restart=args.restart)
    sol = (run(matrix, y_eps, cfg) if args.solver == "rfmp"
           else run_with_restarts(matrix, y_eps, cfg))
    export_coefficients(sol.model, args.out, name=f"{args.solver}_lam{args.lam:g}")
    if args.diagnostics:
        sol.write_diagnostics(args.diagnostics)
    print(f"{sol.iterations} iterations, stop: {sol.stop_reason}, "
          f"residual {sol.residual_norm:.6g}")


def cmd_path(args):
    meta, grid, _, matrix, y, y_eps = _load_sim(args.data)
    lambdas = lambda_grid(args.n_lambda)
    path = build_path(matrix, y_eps, lambdas, solver=args.solver,
                      stop_residual=meta["noise_level"] * np.sqrt(len(grid)),
                      stop_alpha=args.stop_alpha, max_iter=args.max_iter,
                      restart=args.restart)
    path.save(args.out)
    print(f"{len(path)} solutions -> {args.out}")


def cmd_select(args):
    meta, grid, _, matrix, y, _ = _load_sim(args.data)
    path = RegularizationPath.load(args.path)
    surrogate = SpectralSurrogate.build(args.surrogate, meta["radius"], meta["max_degree"],
                                        len(grid))
    if args.partner:
        k_max = max_index_colored(path, RegularizationPath.load(args.partner))
    else:
        k_max = max_index_white(surrogate, path.lambdas)
    truth = ingest_coefficients(os.path.join(args.data, "truth.gfc"), meta["max_degree"])
    reports = []
    for m in args.methods or METHODS:
        rep = choose(m, path, matrix, meta["noise_level"], surrogate, k_max)
        if rep.k_star is not None:
            rep.inefficiency = inefficiency(path, truth, rep.k_star)
        reports.append(json.loads(rep.to_json()))
        print(f"{m:6s} k*={rep.k_star} ineff={rep.inefficiency}")
    _write_json(args.out, {"k_max": k_max, "reports": reports})


def cmd_bench(args):
    if args.manifest:
        scenarios = [load_manifest(args.manifest)]
    elif args.all:
        scenarios = [_scenario(argparse.Namespace(
            **{**vars(args), "scenario": "({},{},{},{})".format(*row)}))
            for row in TEST_CASES]
    else:
        scenarios = [_scenario(args)]
    for s in scenarios:
        if args.maps:
            s = Scenario.from_dict({**s.to_dict(), "map_resolution": 1.0})
        res = run_scenario(s, workers=args.workers)
        out = args.out if len(scenarios) == 1 else os.path.join(
            args.out, s.label.strip("()").replace(",", "_"))
        export(res, out)
        print(f"{s.label}: {len(res.realizations)} realizations, "
              f"{len(res.failures)} failed -> {out}")
        for m in METHODS:
            v = res.inefficiencies(m)
            v = v[np.isfinite(v)]
            med = f"{np.median(v):.3f}" if v.size else "n/a"
            print(f"  {m:6s} median inefficiency {med}")


def cmd_report(args):
    merged = {}
    for path in args.inputs:
        for label, per in read_inefficiency_csv(path).items():
            for m, vals in per.items():
                merged.setdefault(label, {}).setdefault(m, []).extend(vals)
    stats = {}
    for label, per in merged.items():
        stats[label] = {}
        for m, vals in per.items():
            try:
                stats[label][m] = boxplot_stats(vals)
            except InputError as exc:
                print(f"{label} {m}: skipped ({exc})", file=sys.stderr)
    write_stats_csv(args.out, stats)
    print(f"stats -> {args.out}")


def _scenario_flags(p):
    p.add_argument("--config", help="JSON file with scenario fields")
    p.add_argument("--scenario", help="row label such as '(500,5,wn,R)'")
    p.add_argument("--desk-scale", action="store_true", help="apply the desk-scale preset")
    p.add_argument("--seed", type=int)
    p.add_argument("--solver", choices=["rfmp", "rofmp"])
    p.add_argument("--truth", help="gfc coefficient file, or 'synth'")


def _solver_flags(p):
    p.add_argument("--stop-alpha", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--restart", type=int, default=200)


def build_parser():
    ap = argparse.ArgumentParser(prog="gravpursuit",
                                 description="Greedy Tikhonov downward continuation")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="generate and export a point grid")
    p.add_argument("--kind", choices=["R", "S"], default="R")
    p.add_argument("--control", type=int, default=40, help="Reuter control parameter")
    p.add_argument("--tracks", type=int, nargs=3, default=(28, 20, 250),
                   metavar=("POLAR", "EQUATORIAL", "POINTS"))
    p.add_argument("--height", type=float, default=500.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("simulate", help="truth, orbit data and one noise sample")
    _scenario_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("solve", help="single regularization parameter")
    p.add_argument("--data", required=True, help="simulation directory")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--solver", choices=["rfmp", "rofmp"], default="rfmp")
    _solver_flags(p)
    p.add_argument("--out", required=True, help="gfc file for the solution")
    p.add_argument("--diagnostics", help="CSV with per-iteration diagnostics")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("path", help="solutions for the whole parameter grid")
    p.add_argument("--data", required=True)
    p.add_argument("--solver", choices=["rfmp", "rofmp", "direct"], default="rfmp")
    p.add_argument("--n-lambda", type=int, default=100)
    _solver_flags(p)
    p.add_argument("--out", required=True, help=".npz file")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("select", help="apply parameter choice methods to a stored path")
    p.add_argument("--data", required=True)
    p.add_argument("--path", required=True)
    p.add_argument("--partner", help="second path with independent noise (coloured rule)")
    p.add_argument("--methods", nargs="+", choices=METHODS)
    p.add_argument("--surrogate", choices=["operator", "continuous"], default="operator",
                   help="spectral model for traces and the white-noise maximal index")
    p.add_argument("--out", required=True, help="JSON report")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("bench", help="run a scenario and export its statistics")
    _scenario_flags(p)
    p.add_argument("--manifest", help="rerun the scenario stored in a manifest")
    p.add_argument("--all", action="store_true", help="all eleven test cases")
    p.add_argument("--realizations", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--maps", action="store_true", help="export 1-degree map grids")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="box plot statistics from inefficiency tables")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (InputError, ParseError, SolverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
