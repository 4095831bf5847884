"""Regularized functional matching pursuit over the harmonic dictionary.

Every iteration adds one dictionary element ``d`` (a spherical harmonic)
with the coefficient that minimizes the Tikhonov functional

    ||y - A c||^2 + lam * sum_d a_{n(d)}^2 c_d^2

along that single direction, picking the element with the largest
decrease. The data-space correlations ``A^T R`` are updated from the Gram
matrix, so one iteration costs O(M + l) after preprocessing.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, SolverError
from .sphere import HarmonicModel, SobolevWeights, index_of

__all__ = [
    "SolverConfig",
    "DictionaryTables",
    "GreedyState",
    "RegularizedSolution",
    "precompute",
    "select_next",
    "tikhonov_functional",
    "run",
]


@dataclass
class SolverConfig:
    """Regularization parameter and stopping rules.

    Iteration stops once the residual norm drops below ``stop_residual``,
    once ``|alpha|`` of the last step is below ``stop_alpha``, or after
    ``max_iter`` iterations. ``restart`` is the cycle length of the
    orthogonal variant and is ignored by the plain solver.
    """

    lam: float
    stop_residual: float = 0.0
    stop_alpha: float = 1e-6
    max_iter: int = 10000
    restart: int = 200

    def __post_init__(self):
        if self.lam < 0:
            raise InputError("lam must be >= 0")
        if self.stop_residual < 0:
            raise InputError("stop_residual must be >= 0")
        if not self.stop_alpha > 0:
            raise InputError("stop_alpha must be > 0")
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")
        if self.restart < 1:
            raise InputError("restart must be >= 1")


@dataclass
class DictionaryTables:
    """Per-element quantities computed once per design matrix."""

    norms2: np.ndarray
    hweights: np.ndarray
    gram: np.ndarray


def precompute(matrix, weights=None):
    """Squared image norms ``||A d||^2``, penalty weights ``a_n^2`` and ``A^T A``.

    The tables are cached on ``matrix``; repeated calls return the same object.
    """
    if weights is None:
        weights = SobolevWeights(matrix.max_degree)
    cached = getattr(matrix, "_tables", None)
    if cached is not None and cached[0] == weights:
        return cached[1]
    tables = DictionaryTables(norms2=matrix.column_norms ** 2,
                              hweights=weights.flat_sq,
                              gram=matrix.gram)
    matrix._tables = (weights, tables)
    return tables


@dataclass
class GreedyState:
    """Iterate of the plain solver."""

    coeffs: np.ndarray
    residual: np.ndarray
    corr: np.ndarray          # A^T residual
    iteration: int = 0
    history: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)

    @classmethod
    def start(cls, matrix, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (matrix.shape[0],):
            raise InputError(f"data length {y.size} != {matrix.shape[0]} grid points")
        return cls(coeffs=np.zeros(matrix.shape[1]), residual=y.copy(),
                   corr=matrix.entries.T @ y,
                   residual_norms=[float(np.linalg.norm(y))])

    def model(self, max_degree):
        return HarmonicModel(max_degree, self.coeffs.copy())

    def residual_error(self, matrix, y):
        """Relative mismatch between the tracked and the recomputed residual."""
        exact = np.asarray(y) - matrix.entries @ self.coeffs
        scale = max(np.linalg.norm(y), np.finfo(float).tiny)
        return float(np.linalg.norm(exact - self.residual) / scale)


def select_next(state, tables, lam):
    """Best dictionary element and its coefficient.

    Returns ``(d, alpha)`` with ``d`` a flat index, or ``None`` if no
    element decreases the functional. Ties go to the lowest index.
    """
    num = state.corr - lam * tables.hweights * state.coeffs
    den = tables.norms2 + lam * tables.hweights
    valid = den > 0
    obj = np.zeros_like(num)
    obj[valid] = num[valid] ** 2 / den[valid]
    d = int(np.argmax(obj))
    if not obj[d] > 0:
        return None
    return d, float(num[d] / den[d])


def tikhonov_functional(matrix, y, coeffs, lam, weights=None):
    """``||y - A c||^2 + lam * ||c||_H^2``."""
    if weights is None:
        weights = SobolevWeights(matrix.max_degree)
    res = np.asarray(y) - matrix.entries @ coeffs
    return float(res @ res + lam * np.sum(weights.flat_sq * coeffs ** 2))


@dataclass
class RegularizedSolution:
    """Solver output with the diagnostics needed downstream."""

    model: HarmonicModel
    residual: np.ndarray
    iterations: int
    stop_reason: str
    lam: float
    history: list
    residual_norms: list
    cycles: list = field(default_factory=list)

    @property
    def residual_norm(self):
        return float(np.linalg.norm(self.residual))

    def write_diagnostics(self, path):
        """CSV of iteration, residual norm, chosen degree/order, alpha (and cycle)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            header = ["iteration", "residual_norm", "n", "j", "alpha"]
            if self.cycles:
                header.append("cycle")
            w.writerow(header)
            for i, (d, a) in enumerate(self.history):
                n, j = index_of(d)
                row = [i + 1, repr(self.residual_norms[i + 1]), n, j, repr(a)]
                if self.cycles:
                    row.append(self.cycles[i])
                w.writerow(row)


def run(matrix, y, config, weights=None, refresh=1000):
    """Run the plain greedy solver on data ``y``.

    Parameters
    ----------
    matrix : DesignMatrix
    y : ndarray
        Data at the orbit points.
    config : SolverConfig
    weights : SobolevWeights, optional
    refresh : int
        The tracked correlations ``A^T R`` are recomputed from the residual
        every ``refresh`` iterations to bound rounding drift.

    Returns
    -------
    RegularizedSolution
    """
    tables = precompute(matrix, weights)
    state = GreedyState.start(matrix, y)
    cols = matrix.columns
    lam = config.lam
    reason = "max_iter"
    if state.residual_norms[0] == 0.0:
        reason = "converged"
    while reason != "converged":
        step = select_next(state, tables, lam)
        if step is None:
            reason = "converged"
            break
        d, alpha = step
        if not np.isfinite(alpha):
            raise SolverError("non-finite coefficient", state.iteration + 1)
        state.coeffs[d] += alpha
        state.residual -= alpha * cols[:, d]
        state.corr -= alpha * tables.gram[d]
        state.iteration += 1
        if refresh and state.iteration % refresh == 0:
            state.corr = matrix.entries.T @ state.residual
        rnorm = float(np.linalg.norm(state.residual))
        if not np.isfinite(rnorm):
            raise SolverError("non-finite residual", state.iteration)
        state.history.append((d, alpha))
        state.residual_norms.append(rnorm)
        if rnorm < config.stop_residual:
            reason = "residual"
            break
        if abs(alpha) < config.stop_alpha:
            reason = "alpha"
            break
        if state.iteration >= config.max_iter:
            reason = "max_iter"
            break
    return RegularizedSolution(model=state.model(matrix.max_degree),
                               residual=state.residual, iterations=state.iteration,
                               stop_reason=reason, lam=lam, history=state.history,
                               residual_norms=state.residual_norms)
