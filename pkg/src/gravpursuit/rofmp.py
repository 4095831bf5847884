"""Regularized orthogonal functional matching pursuit with restarts.

Within a cycle the images ``A d_1 .. A d_n`` of the chosen elements span
a subspace ``V``. A candidate ``d`` is scored by the Tikhonov decrease of
the prefitting step ``F <- F + alpha (d - B(d))``, where ``B(d)`` is the
combination of chosen elements whose image equals the projection of
``A d`` onto ``V``. The residual therefore moves only along ``P_W A d``
(``W`` the orthogonal complement of ``V``), and all earlier coefficients
are corrected by ``-alpha * beta(d)``.

After ``restart`` iterations the coefficients are frozen, ``V`` is
cleared and a new cycle continues from the current residual.

Per candidate the solver tracks ``Q^T A d`` (rows ``Z``), the expansion
``beta(d) = T^{-1} Q^T A d`` and ``||P_W A d||^2``; each extension of
``V`` updates them with rank-one corrections.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, SolverError
from .rfmp import RegularizedSolution, precompute
from .sphere import HarmonicModel

__all__ = [
    "OrthoState",
    "project",
    "beta_coeffs",
    "select_next",
    "step",
    "run_with_restarts",
    "DEGENERATE_TOL",
]

DEGENERATE_TOL = 1e-10
# below this ratio ||P_W A d|| / ||A d|| the new row of Z is formed from A
# directly instead of through the Gram matrix
_GRAM_ROUTE_TOL = 1e-3


@dataclass
class OrthoState:
    """Iterate of the orthogonal solver.

    ``Q[:, :n]`` is an orthonormal basis of ``V`` and
    ``A[:, chosen] = Q[:, :n] @ T[:n, :n]``.
    """

    matrix: object
    y: np.ndarray
    capacity: int
    coeffs: np.ndarray
    residual: np.ndarray
    corr: np.ndarray
    Q: np.ndarray
    T: np.ndarray
    Z: np.ndarray
    beta: np.ndarray
    s: np.ndarray
    wnorm2: np.ndarray
    chosen: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    base: np.ndarray = None
    cycle: int = 1
    iteration: int = 0

    @classmethod
    def start(cls, matrix, y, capacity):
        y = np.asarray(y, dtype=float)
        l, M = matrix.shape
        if y.shape != (l,):
            raise InputError(f"data length {y.size} != {l} grid points")
        capacity = int(min(capacity, l, M))
        tables = precompute(matrix)
        state = cls(matrix=matrix, y=y, capacity=capacity,
                    coeffs=np.zeros(M), residual=y.copy(),
                    corr=matrix.entries.T @ y,
                    Q=np.zeros((l, capacity)), T=np.zeros((capacity, capacity)),
                    Z=np.zeros((capacity, M)), beta=np.zeros((capacity, M)),
                    s=np.zeros(capacity), wnorm2=tables.norms2.copy())
        state.base = state.coeffs.copy()
        return state

    @property
    def n(self):
        return len(self.chosen)

    def restart(self):
        """Freeze the coefficients and clear the subspace."""
        self.base = self.coeffs.copy()
        self.chosen = []
        self.alphas = []
        self.Q[:] = 0.0
        self.T[:] = 0.0
        self.Z[:] = 0.0
        self.beta[:] = 0.0
        self.s[:] = 0.0
        self.wnorm2 = precompute(self.matrix).norms2.copy()
        self.corr = self.matrix.entries.T @ self.residual
        self.cycle += 1

    def model(self):
        return HarmonicModel(self.matrix.max_degree, self.coeffs.copy())

    def orthonormality_error(self):
        Q = self.Q[:, :self.n]
        return float(np.abs(Q.T @ Q - np.eye(self.n)).max()) if self.n else 0.0

    def factorization_error(self):
        if not self.n:
            return 0.0
        A = self.matrix.entries[:, self.chosen]
        QT = self.Q[:, :self.n] @ self.T[:self.n, :self.n]
        return float(np.abs(A - QT).max() / max(np.abs(A).max(), 1e-300))

    def consistency_error(self):
        """Relative mismatch of ``A c + R`` against the data."""
        fit = self.matrix.entries @ self.coeffs + self.residual
        return float(np.linalg.norm(fit - self.y) / max(np.linalg.norm(self.y), 1e-300))


def project(v, state):
    """Components of ``v`` in ``V`` and in its orthogonal complement."""
    v = np.asarray(v, dtype=float)
    Q = state.Q[:, :state.n]
    pv = Q @ (Q.T @ v)
    return pv, v - pv


def beta_coeffs(d, state):
    """Expansion ``beta`` of ``P_V A d`` in the chosen images, and ``B(d)``.

    Computed afresh from ``Q`` and ``T``; the solver itself uses tracked
    values.
    """
    n = state.n
    a = state.matrix.columns[:, d]
    if n == 0:
        beta = np.zeros(0)
    else:
        beta = solve_triangular(state.T[:n, :n], state.Q[:, :n].T @ a)
    B = HarmonicModel(state.matrix.max_degree)
    for i, di in enumerate(state.chosen):
        B.coeffs[di] += beta[i]
    return beta, B


def _scores(state, lam):
    tables = precompute(state.matrix)
    n = state.n
    h = tables.hweights
    p = state.corr - state.Z[:n].T @ state.s[:n]
    num = p - lam * h * state.coeffs
    den = state.wnorm2 + lam * h
    if n:
        beta = state.beta[:n]
        hc = h[state.chosen]
        num = num + lam * (beta.T @ (hc * state.coeffs[state.chosen]))
        den = den + lam * ((beta ** 2).T @ hc)
    ok = state.wnorm2 > (DEGENERATE_TOL ** 2) * tables.norms2
    ok &= den > 0
    if n:
        ok[state.chosen] = False
    return num, den, ok


def select_next(state, lam):
    """Best candidate ``(d, alpha)``, or ``None`` if every column is degenerate.

    Columns whose image lies in ``V`` (relative size of ``P_W A d`` at most
    ``DEGENERATE_TOL``), including those already chosen, are skipped.
    """
    norms2 = precompute(state.matrix).norms2
    while True:
        num, den, ok = _scores(state, lam)
        obj = np.where(ok, num ** 2 / np.where(ok, den, 1.0), 0.0)
        d = int(np.argmax(obj))
        if not obj[d] > 0:
            return None
        # the tracked ||P_W A d||^2 suffers from cancellation; verify the winner
        _, pw = project(state.matrix.columns[:, d], state)
        exact = float(pw @ pw)
        if exact <= DEGENERATE_TOL ** 2 * norms2[d]:
            state.wnorm2[d] = 0.0
            continue
        if abs(exact - state.wnorm2[d]) > 1e-8 * norms2[d]:
            state.wnorm2[d] = exact
            continue
        return d, float(num[d] / den[d])


def step(state, d, alpha):
    """Apply the prefitting update for element ``d`` with coefficient ``alpha``."""
    matrix = state.matrix
    tables = precompute(matrix)
    n = state.n
    if n >= state.capacity:
        raise InputError("subspace is full; restart first")
    a = matrix.columns[:, d]
    Q = state.Q[:, :n]

    # modified Gram-Schmidt with one re-orthogonalization pass
    v = a.copy()
    hsum = np.zeros(n)
    for _ in range(2):
        for i in range(n):
            c = Q[:, i] @ v
            v -= c * Q[:, i]
            hsum[i] += c
    tau = float(np.linalg.norm(v))
    if not tau > DEGENERATE_TOL * np.sqrt(tables.norms2[d]):
        raise InputError(f"column {d} is degenerate in the current subspace")

    if tau > _GRAM_ROUTE_TOL * np.sqrt(tables.norms2[d]):
        zr = tables.gram[d] - state.Z[:n].T @ hsum
    else:
        zr = matrix.entries.T @ v
    beta_d = state.beta[:n, d].copy()

    # coefficients: earlier ones corrected, new one appended
    for i, di in enumerate(state.chosen):
        state.alphas[i] -= alpha * beta_d[i]
        state.coeffs[di] -= alpha * beta_d[i]
    state.coeffs[d] += alpha
    state.alphas.append(alpha)
    state.chosen.append(d)

    proj_r = float(v @ state.residual)
    state.residual -= alpha * v
    state.corr -= alpha * zr

    q = v / tau
    z = zr / tau
    state.Q[:, n] = q
    state.T[:n, n] = hsum
    state.T[n, n] = tau
    if n:
        x = solve_triangular(state.T[:n, :n], hsum)
        state.beta[:n] -= np.outer(x / tau, z)
    state.beta[n] = z / tau
    state.Z[n] = z
    state.s[n] = proj_r / tau - alpha * tau
    state.wnorm2 = state.wnorm2 - z ** 2
    state.iteration += 1
    if not (np.isfinite(alpha) and np.all(np.isfinite(state.residual))):
        raise SolverError("non-finite values", state.iteration)
    return state


def run_with_restarts(matrix, y, config, weights=None):
    """Orthogonal solver with a restart every ``config.restart`` iterations.

    The residual and iteration limits are checked after every iteration.
    A step with ``|alpha| < config.stop_alpha`` ends the current cycle;
    it stops the solver when it happens on the first step of a cycle.

    Returns
    -------
    RegularizedSolution
        ``cycles`` records the cycle index of every iteration.
    """
    if weights is not None:
        precompute(matrix, weights)
    K = config.restart
    state = OrthoState.start(matrix, y, K)
    lam = config.lam
    history, cycles = [], []
    norms = [float(np.linalg.norm(state.residual))]
    reason = "converged" if norms[0] == 0.0 else None
    while reason is None:
        if state.n >= state.capacity:
            state.restart()
        pick = select_next(state, lam)
        if pick is None:
            if state.n == 0:
                reason = "converged"
                break
            state.restart()
            continue
        d, alpha = pick
        first_in_cycle = state.n == 0
        step(state, d, alpha)
        rnorm = float(np.linalg.norm(state.residual))
        history.append((d, alpha))
        cycles.append(state.cycle)
        norms.append(rnorm)
        if rnorm < config.stop_residual:
            reason = "residual"
        elif state.iteration >= config.max_iter:
            reason = "max_iter"
        elif abs(alpha) < config.stop_alpha:
            if first_in_cycle:
                reason = "alpha"
            else:
                state.restart()
    return RegularizedSolution(model=state.model(), residual=state.residual.copy(),
                               iterations=state.iteration, stop_reason=reason,
                               lam=lam, history=history, residual_norms=norms,
                               cycles=cycles)
