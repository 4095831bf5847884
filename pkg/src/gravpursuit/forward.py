"""Data grids, the discretized upward-continuation operator and truth models."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InputError, ParseError
from .sphere import (HarmonicModel, degree_array, flat_index, num_coeffs,
                     sh_matrix)

__all__ = [
    "EARTH_RADIUS_KM",
    "height_to_radius",
    "PointGrid",
    "TrackSet",
    "DesignMatrix",
    "reuter_grid",
    "reuter_count",
    "scattered_track_grid",
    "build_design_matrix",
    "singular_values",
    "apply_forward",
    "read_gfc",
    "ingest_coefficients",
    "export_coefficients",
    "synth_truth",
    "write_grid_csv",
    "read_grid_csv",
]

EARTH_RADIUS_KM = 6371.0


def height_to_radius(height_km):
    """Orbit radius in Earth radii for a satellite height in km."""
    return (EARTH_RADIUS_KM + float(height_km)) / EARTH_RADIUS_KM


def _unit(lat, lon):
    clat = np.cos(lat)
    return np.column_stack([clat * np.cos(lon), clat * np.sin(lon), np.sin(lat)])


@dataclass
class PointGrid:
    """Unit directions of the data points and the common orbit radius."""

    directions: np.ndarray
    radius: float
    kind: str = "scattered"

    def __post_init__(self):
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if self.directions.shape[1] != 3 or self.directions.shape[0] == 0:
            raise InputError("grid needs a nonempty (l, 3) direction array")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InputError("grid directions must be unit vectors")
        if not self.radius >= 1.0:
            raise InputError("radius must be >= 1")

    def __len__(self):
        return self.directions.shape[0]

    @property
    def latitude(self):
        """Latitude in degrees."""
        return np.degrees(np.arcsin(np.clip(self.directions[:, 2], -1, 1)))

    @property
    def longitude(self):
        """Longitude in degrees, range (-180, 180]."""
        return np.degrees(np.arctan2(self.directions[:, 1], self.directions[:, 0]))


@dataclass
class TrackSet:
    """Ordered partition of grid point indices into satellite tracks."""

    tracks: list

    def __post_init__(self):
        self.tracks = [np.asarray(t, dtype=int) for t in self.tracks]

    def validate(self, n_points):
        if not self.tracks:
            raise InputError("track set is empty")
        allidx = np.concatenate(self.tracks)
        if allidx.size != n_points or not np.array_equal(
                np.sort(allidx), np.arange(n_points)):
            raise InputError("tracks do not partition the data points")

    def labels(self, n_points):
        """Track id of every point."""
        lab = np.full(n_points, -1, dtype=int)
        for t, idx in enumerate(self.tracks):
            lab[idx] = t
        return lab

    @classmethod
    def from_labels(cls, labels):
        """Rebuild tracks from per-point ids; file order is chronology."""
        labels = np.asarray(labels, dtype=int)
        ids = sorted(set(labels.tolist()))
        return cls([np.flatnonzero(labels == t) for t in ids])


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

def _reuter_rings(control):
    delta = np.pi / control
    rings = []
    for k in range(1, control):
        theta = k * np.pi / control
        arg = (np.cos(delta) - np.cos(theta) ** 2) / np.sin(theta) ** 2
        arg = np.clip(arg, -1.0, 1.0)
        # the tiny offset keeps exact integer ratios from rounding down
        count = int(np.floor(2.0 * np.pi / np.arccos(arg) + 1e-9))
        rings.append((theta, count))
    return rings


def reuter_count(control):
    """Number of points of the Reuter grid with the given control value."""
    if control < 2:
        raise InputError("Reuter control parameter must be >= 2")
    return 2 + sum(c for _, c in _reuter_rings(control))


def reuter_grid(control, radius):
    """Reuter's quasi-equidistributed grid.

    Latitude rings at colatitudes ``k*pi/control`` carry equispaced
    longitudes whose spacing matches the ring spacing on the sphere;
    consecutive rings are shifted by half a step. Both poles are included.

    Parameters
    ----------
    control : int
        Number of colatitude intervals; >= 2.
    radius : float
        Orbit radius in Earth radii.
    """
    if control < 2:
        raise InputError("Reuter control parameter must be >= 2")
    pts = [np.array([[0.0, 0.0, 1.0]])]
    for k, (theta, count) in enumerate(_reuter_rings(control), start=1):
        phi = (np.arange(count) + 0.5 * (k % 2)) * 2.0 * np.pi / count
        st = np.sin(theta)
        pts.append(np.column_stack([st * np.cos(phi), st * np.sin(phi),
                                    np.full(count, np.cos(theta))]))
    pts.append(np.array([[0.0, 0.0, -1.0]]))
    dirs = np.vstack(pts)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return PointGrid(dirs, radius, kind="reuter")


def _circle_points(node, incl, u):
    cn, sn = np.cos(node), np.sin(node)
    ci, si = np.cos(incl), np.sin(incl)
    cu, su = np.cos(u), np.sin(u)
    return np.column_stack([cn * cu - sn * su * ci,
                            sn * cu + cn * su * ci,
                            su * si])


def scattered_track_grid(n_tracks_polar=28, n_tracks_equatorial=20,
                         pts_per_track=250, seed=0, radius=1.0):
    """Satellite-like scattered grid made of tracks.

    ``n_tracks_equatorial`` near-polar orbits (full revolutions,
    ``pts_per_track`` points each) give the global coverage; their
    ascending nodes are stratified in longitude so the equatorial belt is
    crossed by only ``2 * n_tracks_equatorial`` passes. ``n_tracks_polar``
    short arcs (``pts_per_track // 2`` points, alternating north/south
    caps) add the extra density near the poles. The defaults give 8500
    points.

    Returns
    -------
    grid : PointGrid
    tracks : TrackSet
        Indices of each track in chronological (along-track) order.
    """
    if n_tracks_polar < 0 or n_tracks_equatorial < 0:
        raise InputError("track counts must be >= 0")
    if n_tracks_polar + n_tracks_equatorial == 0:
        raise InputError("at least one track is required")
    if pts_per_track < 1:
        raise InputError("pts_per_track must be >= 1")
    rng = np.random.default_rng(seed)
    blocks, tracks = [], []
    start = 0
    for k in range(n_tracks_equatorial):
        node = np.pi * (k + rng.uniform()) / n_tracks_equatorial
        incl = np.radians(rng.uniform(85.0, 90.0))
        u = rng.uniform(0, 2 * np.pi) + 2 * np.pi * np.arange(pts_per_track) / pts_per_track
        blocks.append(_circle_points(node, incl, u))
        tracks.append(np.arange(start, start + pts_per_track))
        start += pts_per_track
    short = max(pts_per_track // 2, 1)
    for k in range(n_tracks_polar):
        node = rng.uniform(0, 2 * np.pi)
        incl = np.radians(rng.uniform(80.0, 90.0))
        centre = np.pi / 2 if k % 2 == 0 else 3 * np.pi / 2
        u = centre + np.radians(np.linspace(-30.0, 30.0, short))
        blocks.append(_circle_points(node, incl, u))
        tracks.append(np.arange(start, start + short))
        start += short
    dirs = np.vstack(blocks)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    return PointGrid(dirs, radius, kind="scattered"), TrackSet(tracks)


def write_grid_csv(path, grid, tracks=None):
    """Write ``x,y,z,track_id`` rows; ``track_id`` is -1 without tracks."""
    labels = (tracks.labels(len(grid)) if tracks is not None
              else np.full(len(grid), -1))
    order = (np.concatenate(tracks.tracks) if tracks is not None
             else np.arange(len(grid)))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "track_id"])
        for i in order:
            x, y, z = grid.directions[i]
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z)), int(labels[i])])


def read_grid_csv(path, radius, kind="scattered"):
    """Read a grid CSV written by :func:`write_grid_csv`."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = PointGrid(rows[:, :3], radius, kind=kind)
    labels = rows[:, 3].astype(int)
    tracks = None if np.all(labels < 0) else TrackSet.from_labels(labels)
    return grid, tracks


# --------------------------------------------------------------------------
# operator
# --------------------------------------------------------------------------

def singular_values(r, max_degree):
    """Singular values ``r**-n`` of the upward continuation, n = 0..N."""
    if not r > 1.0:
        raise InputError("orbit radius must exceed 1")
    return float(r) ** -np.arange(max_degree + 1, dtype=float)


@dataclass
class DesignMatrix:
    """Dense matrix of the discretized operator.

    ``entries[i, flat_index(n, j)] = r**-(n+1) * Y_{n,j}(xi_i)``: the value
    of the upward-continued harmonic at the i-th orbit point.
    """

    entries: np.ndarray
    max_degree: int
    radius: float
    column_norms: np.ndarray = field(init=False)

    def __post_init__(self):
        self.entries = np.ascontiguousarray(self.entries, dtype=float)
        self.column_norms = np.sqrt(np.einsum("ij,ij->j", self.entries, self.entries))

    @property
    def shape(self):
        return self.entries.shape

    @cached_property
    def gram(self):
        """``A^T A``; shared read-only by the greedy solvers."""
        return self.entries.T @ self.entries

    @cached_property
    def columns(self):
        """Column-major copy for fast single-column access."""
        return np.asfortranarray(self.entries)

    def __matmul__(self, v):
        return self.entries @ v


def build_design_matrix(grid, max_degree):
    """Assemble the operator matrix for ``grid`` up to ``max_degree``."""
    if len(grid) == 0:
        raise InputError("empty grid")
    if max_degree < 0:
        raise InputError("max_degree must be >= 0")
    Y = sh_matrix(grid.directions, max_degree)
    damp = float(grid.radius) ** -(degree_array(max_degree) + 1.0)
    return DesignMatrix(Y * damp[None, :], max_degree, float(grid.radius))


def apply_forward(matrix, model):
    """Data vector ``A @ coeffs`` of a model on the grid of ``matrix``."""
    if model.max_degree != matrix.max_degree:
        raise InputError(
            f"model degree {model.max_degree} != matrix degree {matrix.max_degree}")
    return matrix.entries @ model.coeffs


# --------------------------------------------------------------------------
# truth models
# --------------------------------------------------------------------------

def read_gfc(path, max_degree=None, scale=1.0):
    """Parse a gfc-style coefficient file.

    Header lines are skipped until the first line starting with ``gfc``;
    after that every non-empty, non-comment line must read
    ``gfc n m C S [...]``. ``C_nm`` becomes the coefficient of
    ``Y_{n,m}`` and ``S_nm`` that of ``Y_{n,-m}``, each multiplied by
    ``scale``.

    Returns
    -------
    model : HarmonicModel
    n_missing : int
        Number of ``(n, m)`` pairs up to the maximal degree absent from
        the file; they are left at zero.
    """
    entries = {}
    in_body = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not in_body:
                if line.startswith("gfc"):
                    in_body = True
                else:
                    continue
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] != "gfc" or len(parts) < 5:
                raise ParseError(f"malformed coefficient row: {line!r}", lineno)
            try:
                n, m = int(parts[1]), int(parts[2])
                c = float(parts[3].replace("D", "E").replace("d", "e"))
                s = float(parts[4].replace("D", "E").replace("d", "e"))
            except ValueError:
                raise ParseError(f"malformed coefficient row: {line!r}", lineno) from None
            if n < 0 or m < 0 or m > n:
                raise ParseError(f"invalid degree/order ({n}, {m})", lineno)
            if not (np.isfinite(c) and np.isfinite(s)):
                raise ParseError("non-finite coefficient", lineno)
            entries[(n, m)] = (c, s)
    if max_degree is None:
        max_degree = max((n for n, _ in entries), default=0)
    model = HarmonicModel(max_degree)
    for (n, m), (c, s) in entries.items():
        if n > max_degree:
            continue
        model.coeffs[flat_index(n, m)] = scale * c if scale != 1.0 else c
        if m > 0:
            model.coeffs[flat_index(n, -m)] = scale * s if scale != 1.0 else s
    n_missing = sum(1 for n in range(max_degree + 1) for m in range(n + 1)
                    if (n, m) not in entries)
    return model, n_missing


def ingest_coefficients(path, max_degree=None, scale=1.0):
    """Load a truth model from a gfc file, truncated at ``max_degree``.

    Missing degrees are zero-filled and reported through a warning.
    """
    model, n_missing = read_gfc(path, max_degree, scale)
    if n_missing:
        warnings.warn(f"{n_missing} coefficient pairs missing in {path}; set to 0",
                      stacklevel=2)
    return model


def export_coefficients(model, path, scale=1.0, name="synthetic"):
    """Write ``model`` as a gfc file readable by :func:`read_gfc`."""
    inv = 1.0 / scale
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"modelname {name}\n")
        fh.write(f"max_degree {model.max_degree}\n")
        fh.write("norm fully_normalized\n")
        fh.write("end_of_head " + "=" * 40 + "\n")
        for n in range(model.max_degree + 1):
            for m in range(n + 1):
                c = model.coeffs[flat_index(n, m)]
                s = model.coeffs[flat_index(n, -m)] if m > 0 else 0.0
                if scale != 1.0:
                    c, s = c * inv, s * inv
                fh.write(f"gfc {n} {m} {float(c)!r} {float(s)!r}\n")


def synth_truth(max_degree, power_exponent=4.0, seed=0, amplitude=1.0e3):
    """Random model with a power-law degree-variance spectrum.

    Each degree ``n`` has expected degree variance
    ``amplitude**2 * (n + 1)**-power_exponent``, spread evenly over its
    ``2n + 1`` coefficients.
    """
    if max_degree < 0:
        raise InputError("max_degree must be >= 0")
    rng = np.random.default_rng(seed)
    deg = degree_array(max_degree).astype(float)
    std = amplitude * np.sqrt((deg + 1.0) ** -power_exponent / (2.0 * deg + 1.0))
    return HarmonicModel(max_degree, std * rng.standard_normal(num_coeffs(max_degree)))
