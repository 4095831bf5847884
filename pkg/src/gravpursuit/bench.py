"""Scenario benchmark: noisy data sets, regularization paths, method ranking.

A scenario fixes orbit height, noise type and ratio, and grid type. One
truth model is continued upward once; every realization draws a new
noise sample, computes the full regularization path and applies all
parameter choice methods. The inefficiency of each choice is measured
against the best grid index for that realization.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from . import __version__
from .errors import InputError, SolverError
from .forward import (apply_forward, build_design_matrix, height_to_radius,
                      ingest_coefficients, reuter_grid, scattered_track_grid,
                      synth_truth)
from .noise import NoiseSpec
from .selection import (FIRST_CROSSING, METHODS, SpectralSurrogate, TikhonovOracle,
                        build_path, choose, errors_l2, lambda_grid,
                        max_index_colored, max_index_white)
from .sphere import sh_matrix

__all__ = [
    "Scenario",
    "TEST_CASES",
    "full_scenarios",
    "desk_scenarios",
    "RealizationResult",
    "ScenarioResult",
    "BoxplotStats",
    "boxplot_stats",
    "aggregate",
    "run_scenario",
    "export",
    "read_inefficiency_csv",
    "write_stats_csv",
    "map_grid",
    "load_manifest",
]

NOISE_KINDS = {"wn": "white", "cn": "colored", "ln": "local"}

# (height km, N2S in percent, noise, grid) of the eleven test cases
TEST_CASES = (
    (500, 5, "wn", "S"), (500, 5, "cn", "S"), (500, 5, "wn", "R"),
    (500, 1, "wn", "S"), (500, 1, "cn", "S"), (500, 1, "wn", "R"),
    (300, 5, "wn", "S"), (300, 5, "cn", "S"), (300, 5, "wn", "R"),
    (500, 5, "ln", "S"), (500, 5, "ln", "R"),
)

DESK_PRESET = dict(max_degree=30, reuter_control=40, tracks=(16, 12, 100),
                   n_lambda=40, realizations=8, restart=50, max_iter=2000)


@dataclass(frozen=True)
class Scenario:
    """One row of the test matrix together with its numerical budget.

    The defaults are the full-scale setting; :meth:`desk` shrinks it.
    ``tracks`` is ``(polar tracks, equatorial tracks, points per track)``
    of the scattered grid. ``seeds`` may be given explicitly; otherwise
    one noise seed per realization is derived from ``seed``.
    """

    height_km: float = 500.0
    n2s: float = 0.05
    noise: str = "wn"
    grid: str = "S"
    realizations: int = 32
    seed: int = 0
    seeds: tuple = None
    solver: str = "rfmp"
    max_degree: int = 100
    n_lambda: int = 100
    reuter_control: int = 82
    tracks: tuple = (28, 20, 250)
    grid_seed: int = 0
    restart: int = 200
    max_iter: int = 10000
    stop_alpha: float = 1e-6
    n2s_outside: float = 0.01
    ar_alpha: object = "random"
    truth: str = "synth"
    truth_seed: int = 0
    power_exponent: float = 4.0
    surrogate: str = "operator"
    map_method: str = "GCV"
    map_resolution: float = None

    def __post_init__(self):
        if self.noise not in NOISE_KINDS:
            raise InputError(f"noise must be one of {sorted(NOISE_KINDS)}")
        if self.grid not in ("R", "S"):
            raise InputError("grid must be 'R' (Reuter) or 'S' (scattered tracks)")
        if self.noise == "cn" and self.grid != "S":
            raise InputError("coloured noise needs the track grid")
        if self.solver not in ("rfmp", "rofmp", "direct"):
            raise InputError(f"unknown solver {self.solver!r}")
        if self.realizations < 1:
            raise InputError("realizations must be >= 1")
        if self.noise == "cn" and self.realizations < 2:
            raise InputError("coloured noise needs two realizations for the maximal index")
        if self.surrogate not in ("operator", "continuous"):
            raise InputError(f"unknown surrogate {self.surrogate!r}")
        if self.map_method not in METHODS:
            raise InputError(f"unknown map method {self.map_method!r}")
        object.__setattr__(self, "tracks", tuple(int(t) for t in self.tracks))
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        seeds = self.noise_seeds
        if len(seeds) != self.realizations or len(set(seeds)) != len(seeds):
            raise InputError("need one distinct seed per realization")

    @property
    def label(self):
        return f"({self.height_km:g},{100 * self.n2s:g},{self.noise},{self.grid})"

    @property
    def noise_seeds(self):
        if self.seeds is not None:
            return self.seeds
        state = np.random.SeedSequence(self.seed).generate_state(self.realizations)
        return tuple(int(s) for s in state)

    @property
    def radius(self):
        return height_to_radius(self.height_km)

    def noise_spec(self):
        return NoiseSpec(kind=NOISE_KINDS[self.noise], n2s=self.n2s,
                         n2s_outside=self.n2s_outside, ar_alpha=self.ar_alpha)

    def desk(self):
        """Desk-scale copy of this scenario."""
        return replace(self, seeds=None, **DESK_PRESET)

    def to_dict(self):
        d = asdict(self)
        d["tracks"] = list(self.tracks)
        d["seeds"] = list(self.noise_seeds)
        d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names - {"label"}
        if unknown:
            raise InputError(f"unknown scenario fields: {sorted(unknown)}")
        kw = {k: v for k, v in d.items() if k in names}
        for key in ("tracks", "seeds"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        return cls(**kw)

    @classmethod
    def from_row(cls, row, **kw):
        h, pct, noise, grid = row
        return cls(height_km=float(h), n2s=pct / 100.0, noise=noise, grid=grid, **kw)


def full_scenarios(**kw):
    """The eleven test cases at full scale."""
    return [Scenario.from_row(row, **kw) for row in TEST_CASES]


def desk_scenarios(**kw):
    """The eleven test cases at desk scale."""
    return [s.desk() for s in full_scenarios(**kw)]


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

@dataclass
class _Context:
    grid: object
    tracks: object
    matrix: object
    truth: object
    y: np.ndarray
    eps: float
    lambdas: np.ndarray
    surrogate: SpectralSurrogate


def _setup_key(s):
    # only the fields that shape grid, operator and truth
    return (s.grid, s.reuter_control, s.tracks, s.grid_seed, float(s.height_km),
            s.max_degree, s.truth, s.truth_seed, float(s.power_exponent))


@lru_cache(maxsize=4)
def _setup(key):
    grid_kind, control, track_shape, grid_seed, height, N, truth_src, truth_seed, p = key
    r = height_to_radius(height)
    tracks = None
    if grid_kind == "R":
        grid = reuter_grid(control, r)
    else:
        grid, tracks = scattered_track_grid(*track_shape, seed=grid_seed, radius=r)
    matrix = build_design_matrix(grid, N)
    if truth_src == "synth":
        truth = synth_truth(N, p, seed=truth_seed)
    else:
        truth = ingest_coefficients(truth_src, N)
    y = apply_forward(matrix, truth)
    return grid, tracks, matrix, truth, y


def _context(s):
    grid, tracks, matrix, truth, y = _setup(_setup_key(s))
    eps = s.noise_spec().level(y, grid)
    return _Context(grid, tracks, matrix, truth, y, eps, lambda_grid(s.n_lambda),
                    SpectralSurrogate.build(s.surrogate, s.radius, s.max_degree,
                                            len(grid)))


def _realize(s, i):
    """Noise sample ``i`` and its regularization path, or the error text."""
    ctx = _context(s)
    seed = s.noise_seeds[i]
    try:
        y_eps, info = s.noise_spec().apply(ctx.y, ctx.grid, ctx.tracks, seed=seed)
        path = build_path(ctx.matrix, y_eps, ctx.lambdas, solver=s.solver,
                          stop_residual=ctx.eps * np.sqrt(len(ctx.grid)),
                          stop_alpha=s.stop_alpha, max_iter=s.max_iter,
                          restart=s.restart)
    except (InputError, SolverError, np.linalg.LinAlgError) as exc:
        return i, None, None, f"{type(exc).__name__}: {exc}"
    return i, path, info.get("alpha"), None


@dataclass
class RealizationResult:
    """Outcome of one noisy data set."""

    index: int
    seed: int
    alpha: float
    k_opt: int
    k_max: int
    errors: np.ndarray
    reports: dict
    path: object = field(repr=False, default=None)

    def inefficiencies(self):
        return {m: r.inefficiency for m, r in self.reports.items()}


@dataclass
class ScenarioResult:
    scenario: Scenario
    lambdas: np.ndarray
    eps: float
    realizations: list
    failures: list
    maps: dict = None

    def inefficiencies(self, method):
        """Inefficiencies of one method; ``nan`` where it made no selection."""
        return np.array([np.nan if r.reports[method].inefficiency is None
                         else r.reports[method].inefficiency for r in self.realizations])


def _evaluate(s, ctx, oracle, i, path, k_max, alpha):
    err = errors_l2(path, ctx.truth)
    best = err.min()
    reports = {}
    for m in METHODS:
        rep = choose(m, path, ctx.matrix, ctx.eps, ctx.surrogate, k_max, oracle=oracle)
        if rep.k_star is not None:
            e = err[rep.k_star - 1]
            rep.inefficiency = 1.0 if e == best else float(e / best)
        reports[m] = rep
    return RealizationResult(index=i, seed=s.noise_seeds[i], alpha=alpha,
                             k_opt=int(np.argmin(err) + 1), k_max=int(k_max),
                             errors=err, reports=reports, path=path)


def map_grid(resolution=1.0):
    """Latitudes and longitudes (degrees) of a global map grid.

    Latitude runs from 90 down to -90 and longitude from -180 upwards, both
    in steps of ``resolution``; 1 degree gives 181 x 360 nodes.
    """
    n_lat = int(round(180.0 / resolution)) + 1
    n_lon = int(round(360.0 / resolution))
    lat = 90.0 - resolution * np.arange(n_lat)
    lon = -180.0 + resolution * np.arange(n_lon)
    return np.repeat(lat, n_lon), np.tile(lon, n_lat)


def _evaluate_on_map(model, lat, lon, chunk=4096):
    la, lo = np.radians(lat), np.radians(lon)
    dirs = np.column_stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)])
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    out = np.empty(lat.size)
    for a in range(0, lat.size, chunk):
        out[a:a + chunk] = sh_matrix(dirs[a:a + chunk], model.max_degree) @ model.coeffs
    return out


def run_scenario(s, workers=1):
    """Run every realization of scenario ``s``.

    Paths are computed in a process pool when ``workers > 1``; results are
    collected in realization order, so the outcome does not depend on
    ``workers``. Realizations whose simulation or solver fails are listed
    in ``failures`` and left out of the statistics.
    """
    ctx = _context(s)
    idx = range(s.realizations)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_realize, [s] * s.realizations, idx))
    else:
        raw = [_realize(s, i) for i in idx]
    failures = [{"index": i, "seed": s.noise_seeds[i], "error": msg}
                for i, _, _, msg in raw if msg is not None]
    ok = [(i, p, a) for i, p, a, msg in raw if msg is None]

    if s.noise == "cn":
        if len(ok) < 2:
            raise InputError("fewer than two successful realizations for the maximal index")
        # partner: the next successful realization, cyclically
        k_max = [max_index_colored(p, ok[(j + 1) % len(ok)][1])
                 for j, (_, p, _) in enumerate(ok)]
    else:
        k_max = [max_index_white(ctx.surrogate, ctx.lambdas)] * len(ok)

    oracle = TikhonovOracle(ctx.matrix)
    results = [_evaluate(s, ctx, oracle, i, p, km, a)
               for (i, p, a), km in zip(ok, k_max)]
    out = ScenarioResult(scenario=s, lambdas=ctx.lambdas, eps=ctx.eps,
                         realizations=results, failures=failures)
    if s.map_resolution and results:
        first = results[0]
        k = first.reports[s.map_method].k_star or first.k_opt
        lat, lon = map_grid(s.map_resolution)
        truth = _evaluate_on_map(ctx.truth, lat, lon)
        approx = _evaluate_on_map(first.path.model(k), lat, lon)
        out.maps = {"lat": lat, "lon": lon, "truth": truth,
                    "approximation": approx, "difference": truth - approx}
    return out


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------

@dataclass
class BoxplotStats:
    """Box plot summary of ``log10`` inefficiencies with Tukey whiskers."""

    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list
    n: int = 0


def boxplot_stats(values, min_count=4):
    """Statistics of ``log10(values)``; outliers lie beyond 1.5 IQR."""
    v = np.log10(np.asarray(values, dtype=float))
    if v.size < min_count:
        raise InputError(f"need at least {min_count} values, got {v.size}")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    return BoxplotStats(median=float(med), q1=float(q1), q3=float(q3),
                        whisker_low=float(inside.min()), whisker_high=float(inside.max()),
                        outliers=sorted(float(x) for x in v[(v < lo) | (v > hi)]),
                        n=int(v.size))


def aggregate(result, min_count=4):
    """Per-method box plot statistics of a :class:`ScenarioResult`.

    Realizations in which a method made no selection are excluded; a
    method with fewer than ``min_count`` values left raises
    :class:`InputError`.
    """
    out = {}
    for m in METHODS:
        v = result.inefficiencies(m)
        out[m] = boxplot_stats(v[np.isfinite(v)], min_count)
    return out


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

STATS_HEADER = ["scenario", "method", "median", "q1", "q3", "wlow", "whigh", "n_outliers"]
INEFF_HEADER = ["scenario", "realization", "seed", "alpha", "k_opt", "k_max",
                "method", "k_star", "lambda_star", "inefficiency"]


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and not np.isfinite(x)) else repr(x)


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_stats_csv(path, stats_by_scenario):
    """``stats_by_scenario`` maps a label to ``{method: BoxplotStats}``."""
    fh, w = _writer(path)
    with fh:
        w.writerow(STATS_HEADER)
        for label, stats in stats_by_scenario.items():
            for m in METHODS:
                if m not in stats:
                    continue
                b = stats[m]
                w.writerow([label, m, repr(b.median), repr(b.q1), repr(b.q3),
                            repr(b.whisker_low), repr(b.whisker_high), len(b.outliers)])


def read_inefficiency_csv(path):
    """``{scenario label: {method: [inefficiency, ...]}}`` from an export."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            val = row["inefficiency"]
            per = out.setdefault(row["scenario"], {}).setdefault(row["method"], [])
            if val:
                per.append(float(val))
    return out


def export(result, directory, min_count=4):
    """Write manifest, statistics and per-realization tables to ``directory``.

    Files: ``manifest.json``, ``stats.csv``, ``inefficiency.csv``,
    ``errors.csv`` and, when maps were computed, ``map_truth.csv``,
    ``map_approximation.csv`` and ``map_difference.csv``. Statistics are
    skipped (and noted in the manifest) when too few realizations
    succeeded.

    Returns
    -------
    list of str
        Paths written.
    """
    os.makedirs(directory, exist_ok=True)
    s = result.scenario
    label = s.label
    written = []

    def target(name):
        p = os.path.join(directory, name)
        written.append(p)
        return p

    fh, w = _writer(target("inefficiency.csv"))
    with fh:
        w.writerow(INEFF_HEADER)
        for r in result.realizations:
            for m in METHODS:
                rep = r.reports[m]
                w.writerow([label, r.index, r.seed, _fmt(r.alpha), r.k_opt, r.k_max, m,
                            "" if rep.k_star is None else rep.k_star,
                            _fmt(rep.lambda_star), _fmt(rep.inefficiency)])

    fh, w = _writer(target("errors.csv"))
    with fh:
        w.writerow(["realization", "k", "lambda", "error_l2"])
        for r in result.realizations:
            for k, (lam, e) in enumerate(zip(result.lambdas, r.errors), start=1):
                w.writerow([r.index, k, repr(float(lam)), repr(float(e))])

    stats_note = ""
    try:
        stats = aggregate(result, min_count)
    except InputError as exc:
        stats, stats_note = {}, str(exc)
    write_stats_csv(target("stats.csv"), {label: stats})

    if result.maps is not None:
        for key in ("truth", "approximation", "difference"):
            fh, w = _writer(target(f"map_{key}.csv"))
            with fh:
                w.writerow(["lat", "lon", "value"])
                for la, lo, v in zip(result.maps["lat"], result.maps["lon"],
                                     result.maps[key]):
                    w.writerow([repr(float(la)), repr(float(lo)), repr(float(v))])

    manifest = {
        "version": __version__,
        "scenario": s.to_dict(),
        "noise_level": result.eps,
        "realizations": [{"index": r.index, "seed": r.seed, "alpha": r.alpha,
                          "k_opt": r.k_opt, "k_max": r.k_max,
                          "no_selection": [m for m in METHODS
                                           if r.reports[m].k_star is None]}
                         for r in result.realizations],
        "failures": result.failures,
        "n_failures": len(result.failures),
        "stats_note": stats_note,
        "first_crossing_methods": list(FIRST_CROSSING),
    }
    with open(target("manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return written


def load_manifest(path):
    """Scenario stored in an exported manifest."""
    with open(path, encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh)["scenario"])
