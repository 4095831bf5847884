"""Noise scenarios: white, AR(1)-coloured along tracks, and regional."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import InputError

__all__ = [
    "LatLonBox",
    "WHOLE_SPHERE",
    "DEFAULT_LOCAL_REGION",
    "NoiseSpec",
    "noise_level",
    "add_white",
    "add_colored",
    "add_local",
    "in_region",
]


@dataclass(frozen=True)
class LatLonBox:
    """Closed latitude/longitude box in degrees (longitudes in [-180, 180])."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (-90 <= self.lat_min <= self.lat_max <= 90):
            raise InputError(f"bad latitude range in {self}")
        if not (-180 <= self.lon_min <= self.lon_max <= 180):
            raise InputError(f"bad longitude range in {self}")

    def contains(self, lat, lon):
        lat = np.asarray(lat)
        lon = np.asarray(lon)
        return ((lat >= self.lat_min) & (lat <= self.lat_max)
                & (lon >= self.lon_min) & (lon <= self.lon_max))

    def solid_angle(self):
        dlon = np.radians(self.lon_max - self.lon_min)
        return dlon * (np.sin(np.radians(self.lat_max)) - np.sin(np.radians(self.lat_min)))


WHOLE_SPHERE = (LatLonBox(-90, 90, -180, 180),)
# South Atlantic, stretched down to the South pole
DEFAULT_LOCAL_REGION = (LatLonBox(-90, 0, -90, 0),)


def in_region(grid, region):
    """Boolean mask of grid points inside the union of ``region`` boxes."""
    lat, lon = grid.latitude, grid.longitude
    mask = np.zeros(len(grid), dtype=bool)
    for box in region:
        mask |= box.contains(lat, lon)
    return mask


def noise_level(y, n2s):
    """Noise level ``n2s * ||y|| / sqrt(l)``."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise InputError("empty data vector")
    return float(n2s) * float(np.linalg.norm(y)) / np.sqrt(y.size)


def _relative(y, n2s, eps):
    return (1.0 + n2s * eps) * y


def add_white(y, n2s, seed):
    """Multiply every datum by ``1 + n2s * e_i`` with ``e_i ~ N(0, 1)``."""
    y = np.asarray(y, dtype=float)
    eps = np.random.default_rng(seed).standard_normal(y.size)
    return _relative(y, n2s, eps)


def ar1_sequence(rng, length, alpha):
    """AR(1) path started from a standard normal draw."""
    return lfilter([1.0], [1.0, -alpha], rng.standard_normal(length))


def add_colored(y, tracks, n2s, ar_alpha, seed):
    """Relative noise whose factors follow an AR(1) process along tracks.

    Every track gets its own random substream (spawned from ``seed``), so
    the result does not depend on the order in which tracks are processed.
    With ``ar_alpha="random"`` one coefficient is drawn uniformly from
    (-1, 1) for the whole data set.

    Returns
    -------
    y_noisy : ndarray
    alpha : float
        The AR(1) coefficient actually used.
    """
    y = np.asarray(y, dtype=float)
    tracks.validate(y.size)
    ss = np.random.SeedSequence(seed)
    alpha_ss, *track_ss = ss.spawn(len(tracks.tracks) + 1)
    if isinstance(ar_alpha, str):
        if ar_alpha != "random":
            raise InputError(f"unknown ar_alpha {ar_alpha!r}")
        rng = np.random.default_rng(alpha_ss)
        alpha = -1.0
        while alpha <= -1.0:
            alpha = float(rng.uniform(-1.0, 1.0))
    else:
        alpha = float(ar_alpha)
        if not abs(alpha) < 1.0:
            raise InputError("|ar_alpha| must be < 1")
    eps = np.empty(y.size)
    for idx, s in zip(tracks.tracks, track_ss):
        eps[idx] = ar1_sequence(np.random.default_rng(s), idx.size, alpha)
    return _relative(y, n2s, eps), alpha


def add_local(y, grid, region=DEFAULT_LOCAL_REGION, n2s_in=0.05, n2s_out=0.01, seed=0):
    """White relative noise, stronger inside ``region`` than outside.

    Uses the same normal draws as :func:`add_white` for a given seed.
    """
    y = np.asarray(y, dtype=float)
    if y.size != len(grid):
        raise InputError("data and grid sizes differ")
    ratio = np.where(in_region(grid, region), n2s_in, n2s_out)
    eps = np.random.default_rng(seed).standard_normal(y.size)
    return _relative(y, ratio, eps)


@dataclass
class NoiseSpec:
    """Description of one noise scenario.

    ``kind`` is ``"white"``, ``"colored"`` or ``"local"``. ``n2s`` is the
    noise-to-signal ratio (inside the region for local noise).
    """

    kind: str = "white"
    n2s: float = 0.05
    n2s_outside: float = 0.01
    ar_alpha: object = "random"
    region: tuple = field(default=DEFAULT_LOCAL_REGION)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("white", "colored", "local"):
            raise InputError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.n2s < 1.0:
            raise InputError("n2s must lie in [0, 1)")
        if self.kind == "local" and not 0.0 <= self.n2s_outside < 1.0:
            raise InputError("n2s_outside must lie in [0, 1)")
        if not isinstance(self.ar_alpha, str) and not abs(self.ar_alpha) < 1.0:
            raise InputError("|ar_alpha| must be < 1")
        self.region = tuple(b if isinstance(b, LatLonBox) else LatLonBox(*b)
                            for b in self.region)

    def apply(self, y, grid=None, tracks=None, seed=None):
        """Return ``(y_noisy, info)``; ``info`` holds the alpha drawn, if any."""
        seed = self.seed if seed is None else seed
        if self.kind == "white":
            return add_white(y, self.n2s, seed), {}
        if self.kind == "colored":
            if tracks is None:
                raise InputError("coloured noise needs satellite tracks")
            y_eps, alpha = add_colored(y, tracks, self.n2s, self.ar_alpha, seed)
            return y_eps, {"alpha": alpha}
        if grid is None:
            raise InputError("local noise needs the grid")
        return add_local(y, grid, self.region, self.n2s, self.n2s_outside, seed), {}

    def level(self, y, grid=None):
        """Noise level ``eps`` for the discrepancy-type rules.

        For local noise this is the root mean square of the per-point
        standard deviations ``n2s_i * |y_i|``; otherwise ``n2s*||y||/sqrt(l)``.
        """
        if self.kind != "local":
            return noise_level(y, self.n2s)
        y = np.asarray(y, dtype=float)
        ratio = np.where(in_region(grid, self.region), self.n2s, self.n2s_outside)
        return float(np.sqrt(np.mean((ratio * y) ** 2)))

    def to_dict(self):
        d = asdict(self)
        d["region"] = [list(asdict(b).values()) for b in self.region]
        return d
