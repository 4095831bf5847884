"""Regularization paths and parameter choice methods.

The path holds one regularized solution per grid value ``lambda_k``
(``k = 1..K``, decreasing ``lambda``). Trace and determinant terms of the
influence operator come from a spectral surrogate: one singular value
per degree ``n`` with multiplicity ``2n + 1``. The matrix SVD of the
point-wise operator is not used for them.

Indices ``k`` in reports are 1-based, as on the parameter grid.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import rfmp, rofmp
from .errors import InputError
from .forward import singular_values
from .sphere import HarmonicModel, SobolevWeights

__all__ = [
    "LAMBDA0",
    "Q_LAMBDA",
    "TDP_GAMMA",
    "DEFAULT_TUNING",
    "METHODS",
    "lambda_grid",
    "direct_tikhonov",
    "TikhonovOracle",
    "SpectralSurrogate",
    "surrogate_traces",
    "rho2",
    "max_index_white",
    "max_index_colored",
    "RegularizationPath",
    "build_path",
    "SelectionReport",
    "criterion_values",
    "choose",
    "errors_l2",
    "optimal_index",
    "inefficiency",
]

LAMBDA0 = 1.3849
Q_LAMBDA = 0.7221
TDP_GAMMA = ((1 / 4) ** (1 / 4) * (3 / 4) ** (3 / 4)) ** 2

DEFAULT_TUNING = {
    "tau": 1.5,
    "tdp_b": 1.5 * TDP_GAMMA,
    "rgcv_gamma": 0.1,
    "srgcv_gamma": 0.95,
    "mgcv_c": 3.0,
}

FIRST_CROSSING = ("DP", "TDP")
MINIMIZERS = ("QOC", "LC", "EEM", "RM", "GML", "GCV", "RGCV", "SRGCV", "MGCV")
METHODS = FIRST_CROSSING + MINIMIZERS


def lambda_grid(count=100, smallest=1e-14):
    """Geometric grid ``lambda_k = lambda_0 * q**k``, ``k = 1..count``.

    For 100 values the published constants ``lambda_0 = 1.3849`` and
    ``q = 0.7221`` are used. Other counts keep ``lambda_1 = 1`` and
    ``lambda_count = smallest``.
    """
    if count < 2:
        raise InputError("need at least two grid values")
    k = np.arange(1, count + 1, dtype=float)
    if count == 100 and smallest == 1e-14:
        return LAMBDA0 * Q_LAMBDA ** k
    q = smallest ** (1.0 / (count - 1))
    return q ** (k - 1.0)


def direct_tikhonov(y, lam, matrix, weights=None):
    """Solve ``(A^T A + lam G) x = A^T y`` with ``G = diag(a_n^2)``.

    This is the Tikhonov solution with the Sobolev penalty, i.e. the limit
    of both greedy solvers. Cholesky factorization; fails only for
    singular systems.
    """
    if weights is None:
        weights = SobolevWeights(matrix.max_degree)
    if lam < 0:
        raise InputError("lam must be >= 0")
    H = matrix.gram + lam * np.diag(weights.flat_sq)
    try:
        factor = cho_factor(H)
    except np.linalg.LinAlgError as exc:
        raise InputError(f"normal matrix not positive definite at lam={lam}") from exc
    return HarmonicModel(matrix.max_degree,
                         cho_solve(factor, matrix.entries.T @ np.asarray(y, dtype=float)))


class TikhonovOracle:
    """All Tikhonov solutions of one design matrix via a generalized eigensystem.

    With ``A^T A V = G V diag(mu)`` and ``V^T G V = I``, the solution for any
    ``lam`` is ``V diag(1/(mu + lam)) V^T A^T y``.
    """

    def __init__(self, matrix, weights=None):
        if weights is None:
            weights = SobolevWeights(matrix.max_degree)
        self.matrix = matrix
        self.weights = weights
        ginv = 1.0 / np.sqrt(weights.flat_sq)
        mu, U = np.linalg.eigh(ginv[:, None] * matrix.gram * ginv[None, :])
        self.mu = np.clip(mu, 0.0, None)
        self.V = ginv[:, None] * U

    def _rhs(self, v):
        return self.V.T @ (self.matrix.entries.T @ np.asarray(v, dtype=float))

    def solve(self, v, lam):
        """Coefficients of ``R_lam v``."""
        return self.V @ (self._rhs(v) / (self.mu + lam))

    def hnorm(self, v, lam):
        """Sobolev norm of ``R_lam v``."""
        return float(np.linalg.norm(self._rhs(v) / (self.mu + lam)))


@dataclass
class SpectralSurrogate:
    """Singular values ``sigma_n`` (multiplicity ``2n+1``) and data count ``l``."""

    sigma: np.ndarray
    l: int

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.l < 1:
            raise InputError("l must be >= 1")

    @classmethod
    def from_radius(cls, radius, max_degree, l):
        """Singular values ``r**-n`` of the continuous operator on L2."""
        return cls(singular_values(radius, max_degree), l)

    @classmethod
    def for_operator(cls, radius, max_degree, l, weights=None):
        """Singular values of the discrete operator seen by the solvers.

        On ``l`` quasi-uniform points ``A^T A ~ (l / 4 pi) diag(r**-(2n+2))``,
        and the Sobolev penalty rescales degree ``n`` by ``1 / a_n``, so the
        filter factors become those of the penalized problem actually solved.
        """
        if weights is None:
            weights = SobolevWeights(max_degree)
        sigma = (np.sqrt(l / (4 * np.pi)) * singular_values(radius, max_degree)
                 / float(radius) / weights.a)
        return cls(sigma, l)

    @classmethod
    def build(cls, kind, radius, max_degree, l):
        """``kind`` is ``"operator"`` or ``"continuous"``."""
        if kind == "operator":
            return cls.for_operator(radius, max_degree, l)
        if kind == "continuous":
            return cls.from_radius(radius, max_degree, l)
        raise InputError(f"unknown surrogate {kind!r}")

    @property
    def multiplicity(self):
        return 2 * np.arange(self.sigma.size) + 1.0

    @property
    def M(self):
        return int(self.multiplicity.sum())


def surrogate_traces(s, lam):
    """Trace and determinant terms of the influence operator ``F R_lam``.

    Returns a dict with ``tr_FR``, ``tr_FR2``, ``tr_I_FR`` (``tr(I - F R)``),
    ``logdet_I_FR`` (log of the product of nonzero eigenvalues of
    ``I - F R``) and ``tr_BB`` (``tr B*B`` with ``B = F(I - R F)``).
    """
    if not lam > 0:
        raise InputError("lam must be > 0")
    mult = s.multiplicity
    s2 = s.sigma ** 2
    f = s2 / (s2 + lam)
    return {
        "tr_FR": float(np.sum(mult * f)),
        "tr_FR2": float(np.sum(mult * f ** 2)),
        "tr_I_FR": float((s.l - s.M) + np.sum(mult * (1.0 - f))),
        "logdet_I_FR": float(np.sum(mult * np.log(lam / (s2 + lam)))),
        "tr_BB": float(np.sum(mult * s2 * (1.0 - f) ** 2)),
    }


def rho2(s, lam):
    """White-noise variance factor ``sum (2n+1) (sigma_n/(sigma_n^2+lam))^2``.

    ``lam = 0`` gives the limit ``sum (2n+1) / sigma_n^2``.
    """
    lam = np.asarray(lam, dtype=float)
    sig = s.sigma
    terms = (sig[None, :] / (sig[None, :] ** 2 + lam.reshape(-1, 1))) ** 2
    out = terms @ s.multiplicity
    return out.reshape(lam.shape) if lam.ndim else float(out[0])


def max_index_white(s, lambdas):
    """Largest 1-based ``k`` with ``rho(k) < rho(inf) / 2``; 0 if there is none."""
    rho = np.sqrt(rho2(s, np.asarray(lambdas)))
    rho_inf = np.sqrt(rho2(s, 0.0))
    ok = np.flatnonzero(rho < 0.5 * rho_inf)
    return int(ok[-1] + 1) if ok.size else 0


def colored_rho(path1, path2):
    """Estimate of ``eps * rho(k)``: ``sqrt(||x_k1 - x_k2||_H^2 / 2)``."""
    if path1.coeffs.shape != path2.coeffs.shape or not np.array_equal(
            path1.lambdas, path2.lambdas):
        raise InputError("paths use different grids")
    w = SobolevWeights(path1.max_degree).flat_sq
    diff = path1.coeffs - path2.coeffs
    return np.sqrt(0.5 * (diff ** 2 @ w))


def max_index_colored(path1, path2):
    """Maximal index from two paths with independent noise.

    ``rho(inf)`` is taken at the smallest ``lambda`` of the grid. Identical
    paths give a zero estimate everywhere; the full grid is then admitted.
    """
    rho = colored_rho(path1, path2)
    rho_inf = rho[-1]
    if rho_inf == 0.0:
        return int(rho.size)
    ok = np.flatnonzero(rho < 0.5 * rho_inf)
    return int(ok[-1] + 1) if ok.size else 0


@dataclass
class RegularizationPath:
    """Regularized solutions for every value of a parameter grid."""

    lambdas: np.ndarray
    coeffs: np.ndarray
    data: np.ndarray
    max_degree: int
    residual_norms: np.ndarray = None
    iterations: list = field(default_factory=list)
    stop_reasons: list = field(default_factory=list)
    solver: str = "rfmp"

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        self.data = np.asarray(self.data, dtype=float)
        if self.coeffs.shape[0] != self.lambdas.size:
            raise InputError("one solution per grid value is required")

    def __len__(self):
        return self.lambdas.size

    def model(self, k):
        """Solution for the 1-based grid index ``k``."""
        return HarmonicModel(self.max_degree, self.coeffs[k - 1].copy())

    def residuals(self, matrix):
        """Rows ``A x_k - y``."""
        return self.coeffs @ matrix.entries.T - self.data[None, :]

    def fill_residual_norms(self, matrix):
        self.residual_norms = np.linalg.norm(self.residuals(matrix), axis=1)
        return self

    def hnorms(self):
        w = SobolevWeights(self.max_degree).flat_sq
        return np.sqrt(self.coeffs ** 2 @ w)

    def save(self, path):
        np.savez(path, lambdas=self.lambdas, coeffs=self.coeffs, data=self.data,
                 max_degree=self.max_degree,
                 residual_norms=(self.residual_norms if self.residual_norms is not None
                                 else np.zeros(0)),
                 iterations=np.asarray(self.iterations, dtype=int),
                 stop_reasons=np.asarray(self.stop_reasons, dtype=str),
                 solver=self.solver)

    @classmethod
    def load(cls, path):
        with np.load(path) as f:
            rn = f["residual_norms"]
            return cls(lambdas=f["lambdas"], coeffs=f["coeffs"], data=f["data"],
                       max_degree=int(f["max_degree"]),
                       residual_norms=rn if rn.size else None,
                       iterations=f["iterations"].tolist(),
                       stop_reasons=f["stop_reasons"].tolist(),
                       solver=str(f["solver"]))


def build_path(matrix, y, lambdas, solver="rfmp", stop_residual=0.0,
               stop_alpha=1e-6, max_iter=10000, restart=200, oracle=None):
    """Solve for every ``lambda`` independently, starting from zero.

    ``solver`` is ``"rfmp"``, ``"rofmp"`` or ``"direct"``; the last one
    substitutes the exact Tikhonov solution (dense oracle).
    """
    y = np.asarray(y, dtype=float)
    lambdas = np.asarray(lambdas, dtype=float)
    coeffs = np.empty((lambdas.size, matrix.shape[1]))
    iters, reasons = [], []
    if solver == "direct":
        oracle = oracle or TikhonovOracle(matrix)
        for i, lam in enumerate(lambdas):
            coeffs[i] = oracle.solve(y, lam)
            iters.append(0)
            reasons.append("direct")
    elif solver in ("rfmp", "rofmp"):
        for i, lam in enumerate(lambdas):
            cfg = rfmp.SolverConfig(lam=float(lam), stop_residual=stop_residual,
                                    stop_alpha=stop_alpha, max_iter=max_iter,
                                    restart=restart)
            if solver == "rfmp":
                sol = rfmp.run(matrix, y, cfg)
            else:
                sol = rofmp.run_with_restarts(matrix, y, cfg)
            coeffs[i] = sol.model.coeffs
            iters.append(sol.iterations)
            reasons.append(sol.stop_reason)
    else:
        raise InputError(f"unknown solver {solver!r}")
    path = RegularizationPath(lambdas, coeffs, y, matrix.max_degree,
                              iterations=iters, stop_reasons=reasons, solver=solver)
    return path.fill_residual_norms(matrix)


# --------------------------------------------------------------------------
# parameter choice
# --------------------------------------------------------------------------

@dataclass
class SelectionReport:
    """Outcome of one parameter choice method on one path."""

    method: str
    k_star: int = None
    lambda_star: float = None
    inefficiency: float = None
    criterion_values: list = field(default_factory=list)
    k_max: int = None
    note: str = ""

    def to_json(self):
        return json.dumps(asdict(self), allow_nan=True)


def _surrogate_table(s, lambdas):
    rows = [surrogate_traces(s, lam) for lam in lambdas]
    return {key: np.array([r[key] for r in rows]) for key in rows[0]}


def _ratio(num, den):
    out = np.full(np.broadcast(num, den).shape, np.nan)
    ok = (den != 0) & np.isfinite(den)
    np.divide(num, den, out=out, where=ok)
    return out


def criterion_values(method, path, matrix, eps, surrogate, oracle=None, tuning=None):
    """Per-``k`` quantity a method thresholds or minimizes.

    For DP and TDP the values are the left-hand side divided by the
    threshold, so a value ``<= 1`` satisfies the rule. NaN marks an
    undefined value (zero denominator, or no successor for QOC).
    """
    t = dict(DEFAULT_TUNING)
    if tuning:
        t.update(tuning)
    lambdas = path.lambdas
    l = path.data.size
    res = path.residual_norms
    if res is None:
        res = path.fill_residual_norms(matrix).residual_norms
    sqrt_l = np.sqrt(l)
    if method == "DP":
        return _ratio(res, t["tau"] * eps * sqrt_l)
    if method == "TDP":
        oracle = oracle or TikhonovOracle(matrix)
        R = path.residuals(matrix)
        lhs = np.array([oracle.hnorm(R[i], lam) for i, lam in enumerate(lambdas)])
        return _ratio(lhs, t["tdp_b"] * eps * sqrt_l / np.sqrt(lambdas))
    if method == "QOC":
        w = SobolevWeights(path.max_degree).flat_sq
        d = np.diff(path.coeffs, axis=0)
        out = np.full(lambdas.size, np.nan)
        out[:-1] = np.sqrt(d ** 2 @ w)
        return out
    if method == "LC":
        return res * path.hnorms()
    if method == "EEM":
        R = path.residuals(matrix)
        w = SobolevWeights(path.max_degree).flat_sq
        adj = np.sqrt(((R @ matrix.entries) ** 2) @ (1.0 / w))
        return _ratio(res ** 2, adj)
    tr = _surrogate_table(surrogate, lambdas)
    if method == "RM":
        return _ratio(res, tr["tr_BB"] ** 0.25)
    if method == "GML":
        # res^2 / det+^(1/l) in log space
        return np.exp(2.0 * np.log(res) - tr["logdet_I_FR"] / l)
    gcv = _ratio(res ** 2, (tr["tr_I_FR"] / l) ** 2)
    if method == "GCV":
        return gcv
    if method == "RGCV":
        g = t["rgcv_gamma"]
        return gcv * (g + (1 - g) * tr["tr_FR2"] / l)
    if method == "SRGCV":
        g = t["srgcv_gamma"]
        return gcv * (g + (1 - g) * tr["tr_FR2"] / l)
    if method == "MGCV":
        return _ratio(res ** 2, ((l - t["mgcv_c"] * tr["tr_FR"]) / l) ** 2)
    raise InputError(f"unknown method {method!r}")


def choose(method, path, matrix, eps, surrogate, k_max, oracle=None, tuning=None):
    """Apply one parameter choice method.

    DP and TDP return the first ``k`` (scanning upwards) meeting their
    rule; the minimizers return the smallest ``argmin`` over
    ``k <= k_max``. Undefined criterion values are skipped.
    """
    vals = criterion_values(method, path, matrix, eps, surrogate, oracle, tuning)
    report = SelectionReport(method=method, k_max=int(k_max),
                             criterion_values=[None if not np.isfinite(v) else float(v)
                                               for v in vals])
    if method in FIRST_CROSSING:
        hits = np.flatnonzero(np.isfinite(vals) & (vals <= 1.0))
        if hits.size:
            report.k_star = int(hits[0] + 1)
        else:
            report.note = "no selection: rule never satisfied"
    else:
        window = vals[:max(int(k_max), 0)]
        finite = np.isfinite(window)
        if finite.any():
            masked = np.where(finite, window, np.inf)
            report.k_star = int(np.argmin(masked) + 1)
        else:
            report.note = "no selection: no admissible index"
    if report.k_star is not None:
        report.lambda_star = float(path.lambdas[report.k_star - 1])
    return report


def errors_l2(path, truth):
    """``||x - x_k||`` in L2 for every grid index."""
    return np.linalg.norm(path.coeffs - truth.coeffs[None, :], axis=1)


def optimal_index(path, truth):
    """1-based index minimizing the L2 error to the known truth."""
    return int(np.argmin(errors_l2(path, truth)) + 1)


def inefficiency(path, truth, k_star):
    """Error at ``k_star`` relative to the optimal error on the grid."""
    err = errors_l2(path, truth)
    best = err.min()
    if best == 0.0:
        return 1.0 if err[k_star - 1] == 0.0 else np.inf
    return float(err[k_star - 1] / best)
