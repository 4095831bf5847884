"""Real spherical harmonics on the unit sphere and Sobolev inner products.

Harmonics are real, fully normalized (orthonormal in L2 of the unit sphere)
and carry no Condon-Shortley phase. ``Y_{n,j}`` with ``j >= 0`` uses
``cos(j*phi)``; ``j < 0`` uses ``sin(|j|*phi)``. Coefficient arrays are
indexed by the flat index ``n*n + n + j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "flat_index",
    "index_of",
    "num_coeffs",
    "degree_array",
    "order_array",
    "HarmonicModel",
    "SobolevWeights",
    "eval_sh",
    "sh_matrix",
    "sobolev_inner",
    "sobolev_norm",
    "l2_inner",
    "l2_norm",
]

UNIT_TOL = 1e-12


def flat_index(n, j):
    """Flat position of ``Y_{n,j}`` in a coefficient array."""
    if n < 0 or abs(j) > n:
        raise InputError(f"invalid harmonic index (n={n}, j={j})")
    return n * n + n + j


def index_of(k):
    """Inverse of :func:`flat_index`; returns ``(n, j)``."""
    if k < 0:
        raise InputError(f"negative flat index {k}")
    n = int(np.floor(np.sqrt(k)))
    # guard against sqrt rounding for large k
    while n * n > k:
        n -= 1
    while (n + 1) * (n + 1) <= k:
        n += 1
    return n, k - n * n - n


def num_coeffs(max_degree):
    return (max_degree + 1) ** 2


def degree_array(max_degree):
    """Degree ``n`` of every flat index up to ``max_degree``."""
    return np.repeat(np.arange(max_degree + 1), 2 * np.arange(max_degree + 1) + 1)


def order_array(max_degree):
    """Order ``j`` of every flat index up to ``max_degree``."""
    return np.concatenate([np.arange(-n, n + 1) for n in range(max_degree + 1)])


@dataclass
class HarmonicModel:
    """Coefficients of a function in the real orthonormal harmonic basis.

    Parameters
    ----------
    max_degree : int
        Largest degree ``N`` contained in the expansion.
    coeffs : ndarray, optional
        Array of length ``(N+1)**2`` in flat-index order. Zeros if omitted.
    """

    max_degree: int
    coeffs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.max_degree < 0:
            raise InputError("max_degree must be >= 0")
        m = num_coeffs(self.max_degree)
        if self.coeffs is None:
            self.coeffs = np.zeros(m)
        else:
            self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (m,):
            raise InputError(
                f"expected {m} coefficients for degree {self.max_degree}, "
                f"got shape {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise InputError("coefficients must be finite")

    @classmethod
    def delta(cls, max_degree, n, j, value=1.0):
        """Model with a single nonzero coefficient at ``(n, j)``."""
        model = cls(max_degree)
        model.coeffs[flat_index(n, j)] = value
        return model

    def __getitem__(self, nj):
        n, j = nj
        return self.coeffs[flat_index(n, j)]

    def __setitem__(self, nj, value):
        n, j = nj
        self.coeffs[flat_index(n, j)] = value

    def copy(self):
        return HarmonicModel(self.max_degree, self.coeffs.copy())

    def truncate(self, max_degree):
        """Return the expansion cut (or zero-padded) to ``max_degree``."""
        out = HarmonicModel(max_degree)
        m = min(num_coeffs(max_degree), self.coeffs.size)
        out.coeffs[:m] = self.coeffs[:m]
        return out

    def degree_variances(self):
        """Sum of squared coefficients per degree."""
        deg = degree_array(self.max_degree)
        return np.bincount(deg, weights=self.coeffs ** 2,
                           minlength=self.max_degree + 1)

    def evaluate(self, directions):
        """Evaluate the expansion at unit vectors of shape ``(k, 3)``."""
        return sh_matrix(directions, self.max_degree) @ self.coeffs

    def __add__(self, other):
        _check_same(self, other)
        return HarmonicModel(self.max_degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return HarmonicModel(self.max_degree, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return HarmonicModel(self.max_degree, self.coeffs * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class SobolevWeights:
    """Degree weights ``a_n = (n + 1/2)**2`` of the penalty space."""

    max_degree: int

    @property
    def a(self):
        n = np.arange(self.max_degree + 1, dtype=float)
        return (n + 0.5) ** 2

    @property
    def flat_sq(self):
        """``a_n**2`` expanded to every flat index."""
        return np.repeat(self.a ** 2, 2 * np.arange(self.max_degree + 1) + 1)


def _check_same(A, B):
    if A.max_degree != B.max_degree:
        raise InputError(
            f"degree mismatch: {A.max_degree} != {B.max_degree}")


def sobolev_inner(A, B, w=None):
    """Sobolev inner product ``sum a_n**2 A_nj B_nj``.

    Summed in ascending flat-index order so the result is reproducible.
    """
    _check_same(A, B)
    if w is None:
        w = SobolevWeights(A.max_degree)
    elif w.max_degree != A.max_degree:
        raise InputError("weights and models have different degrees")
    return float(_ordered_sum(w.flat_sq * A.coeffs * B.coeffs))


def _ordered_sum(terms):
    # sequential summation; np.sum uses pairwise blocks
    return np.cumsum(terms)[-1]


def sobolev_norm(A, w=None):
    return float(np.sqrt(sobolev_inner(A, A, w)))


def l2_inner(A, B):
    """L2 inner product on the sphere; Parseval for the orthonormal basis."""
    _check_same(A, B)
    return float(_ordered_sum(A.coeffs * B.coeffs))


def l2_norm(A):
    return float(np.sqrt(l2_inner(A, A)))


def _as_directions(dirs):
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    if dirs.ndim != 2 or dirs.shape[1] != 3:
        raise InputError("directions must have shape (k, 3)")
    norms = np.linalg.norm(dirs, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise InputError("directions must be unit vectors")
    return dirs


def sh_matrix(directions, max_degree):
    """Evaluate all harmonics up to ``max_degree`` at unit vectors.

    Parameters
    ----------
    directions : array_like, shape (k, 3)
        Unit vectors.
    max_degree : int

    Returns
    -------
    ndarray, shape (k, (max_degree+1)**2)
        ``Y[i, flat_index(n, j)] = Y_{n,j}(directions[i])``.
    """
    dirs = _as_directions(directions)
    if max_degree < 0:
        raise InputError("max_degree must be >= 0")
    x, y, z = dirs.T
    t = np.clip(z, -1.0, 1.0)
    s = np.hypot(x, y)
    phi = np.arctan2(y, x)
    k = dirs.shape[0]
    out = np.empty((k, num_coeffs(max_degree)))
    scale = 1.0 / np.sqrt(4.0 * np.pi)

    # 4pi-normalized associated Legendre functions, column recursion per order
    pmm = np.ones(k)
    for m in range(max_degree + 1):
        if m == 1:
            pmm = np.sqrt(3.0) * s
        elif m > 1:
            pmm = np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
        if m == 0:
            trig_c, trig_s = None, None
        else:
            trig_c, trig_s = np.cos(m * phi), np.sin(m * phi)
        p_prev2 = None
        p_prev = pmm
        for n in range(m, max_degree + 1):
            if n == m:
                p = pmm
            elif n == m + 1:
                p = np.sqrt(2.0 * m + 3.0) * t * pmm
            else:
                a = np.sqrt((2.0 * n - 1.0) * (2.0 * n + 1.0) / ((n - m) * (n + m)))
                b = np.sqrt((2.0 * n + 1.0) * (n + m - 1.0) * (n - m - 1.0)
                            / ((n - m) * (n + m) * (2.0 * n - 3.0)))
                p = a * t * p_prev - b * p_prev2
            base = n * n + n
            if m == 0:
                out[:, base] = scale * p
            else:
                out[:, base + m] = scale * p * trig_c
                out[:, base - m] = scale * p * trig_s
            if n > m:
                p_prev2, p_prev = p_prev, p
            else:
                p_prev2, p_prev = None, p
    return out


def eval_sh(n, j, direction):
    """Value of ``Y_{n,j}`` at a single unit vector."""
    col = flat_index(n, j)
    return float(sh_matrix(direction, n)[0, col])
