"""Exact Gaussian inference for low-rank basis-function models.

With ``C_Z = Phi K Phi' + C_xi`` and ``C_xi`` diagonal, every solve goes
through the ``r x r`` capacitance matrix. Writing ``K = L L'`` the symmetric
form ``B = I + L' Phi' C_xi^-1 Phi L`` is factored once, after which

    C_Z^-1 v   = C_xi^-1 v - C_xi^-1 Phi L B^-1 L' Phi' C_xi^-1 v
    log|C_Z|   = log|B| + sum(log diag C_xi)
    Sigma_alpha = cov(alpha | Z) = L B^-1 L'

so the cost is ``O(n r^2)`` to build and ``O(n r)`` per application.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, sparse
from scipy.spatial.distance import cdist
from scipy.stats import norm

from .basis import BasisSet
from .covariance import KModel, MaternParams, NoiseParams, k_matrix, matern
from .data import SpatialDataset, as_locations

__all__ = [
    "SingularModelError",
    "SreParams",
    "FittedSolve",
    "PredictiveResult",
    "factor_psd",
    "build_solve",
    "fitted_solve",
    "smw_apply",
    "log_likelihood",
    "predict",
    "predict_from_solve",
    "kriging_baseline",
    "fit_matern_ml",
    "write_predictions",
]

log = logging.getLogger(__name__)


class SingularModelError(ArithmeticError):
    """The covariance parameters make ``C_Z`` (numerically) singular."""


@dataclass(frozen=True)
class SreParams:
    """Fixed effects ``beta``, coefficient covariance model and noise variances."""

    beta: np.ndarray
    k_model: KModel
    noise: NoiseParams

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        b.setflags(write=False)
        object.__setattr__(self, "beta", b)

    @property
    def p(self) -> int:
        return self.beta.size


def factor_psd(K: np.ndarray) -> np.ndarray:
    """Return ``L`` with ``L L' = K`` for a symmetric PSD ``K``.

    Cholesky is tried first; a rank-deficient ``K`` (including ``K = 0``)
    falls back to the symmetric eigen-factor, which stays exact.
    """
    K = np.asarray(K, dtype=float)
    try:
        return linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        pass
    lam, V = linalg.eigh(K)
    scale = max(np.abs(lam).max(initial=0.0), 1e-300)
    if lam[0] < -1e-8 * scale:
        raise ValueError(f"K is not positive semidefinite (smallest eigenvalue {lam[0]:.3g})")
    return V * np.sqrt(np.clip(lam, 0.0, None))


@dataclass(eq=False)
class FittedSolve:
    """Cached capacitance factorisation for one ``(Phi, K, C_xi)`` triple.

    When built with a residual vector ``Z - X beta`` it also carries the
    posterior moments of the coefficients and ``C_Z^-1 (Z - X beta)``.
    """

    Phi: sparse.csr_matrix
    K: np.ndarray
    xi: np.ndarray
    L: np.ndarray
    B_chol: tuple
    G: np.ndarray
    Sigma_alpha: np.ndarray
    resid: np.ndarray | None = None
    PhiT_Cinv_resid: np.ndarray | None = None
    mu_alpha: np.ndarray | None = None
    w: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def r(self) -> int:
        return self.Phi.shape[1]

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """``C_Z^-1 v`` for a vector or an ``(n, k)`` block."""
        v = np.asarray(v, dtype=float)
        vec = v.ndim == 1
        V = v.reshape(self.n, -1)
        Dv = V / self.xi[:, None]
        t = self.L.T @ (self.Phi.T @ Dv)
        t = linalg.cho_solve(self.B_chol, t)
        out = Dv - (self.Phi @ (self.L @ t)) / self.xi[:, None]
        return out.ravel() if vec else out

    def logdet(self) -> float:
        """``log|C_Z|`` via the matrix determinant lemma."""
        return 2.0 * np.log(np.diag(self.B_chol[0])).sum() + np.log(self.xi).sum()


def build_solve(Phi, K: np.ndarray, xi, resid=None) -> FittedSolve:
    """Factor the capacitance matrix for ``C_Z = Phi K Phi' + diag(xi)``."""
    Phi = sparse.csr_matrix(Phi)
    n, r = Phi.shape
    K = np.asarray(K, dtype=float)
    if K.shape != (r, r):
        raise ValueError(f"K is {K.shape} but Phi has {r} columns")
    xi = np.broadcast_to(np.asarray(xi, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(xi)) or np.any(xi <= 0):
        raise SingularModelError("C_xi must have finite, strictly positive diagonal")
    L = factor_psd(K)
    PhiD = sparse.diags(1.0 / xi) @ Phi
    G = (Phi.T @ PhiD).toarray()
    G = 0.5 * (G + G.T)
    B = np.eye(r) + L.T @ G @ L
    try:
        B_chol = linalg.cho_factor(B, lower=False)
    except linalg.LinAlgError as exc:
        raise SingularModelError(f"capacitance matrix is singular: {exc}") from None
    if not np.all(np.isfinite(B_chol[0])):
        raise SingularModelError("capacitance factorisation is not finite")
    Sigma = L @ linalg.cho_solve(B_chol, L.T)
    Sigma = 0.5 * (Sigma + Sigma.T)
    out = FittedSolve(Phi, K, xi, L, B_chol, G, Sigma)
    if resid is not None:
        resid = np.asarray(resid, dtype=float).reshape(n)
        b = np.asarray(Phi.T @ (resid / xi)).ravel()
        mu = Sigma @ b
        out.resid = resid
        out.PhiT_Cinv_resid = b
        out.mu_alpha = mu
        out.w = (resid - Phi @ mu) / xi
    return out


def smw_apply(solve: FittedSolve, v) -> np.ndarray:
    """``C_Z^-1 v`` through the Sherman-Morrison-Woodbury identity."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != solve.n:
        raise ValueError(f"vector has length {v.shape[0]}, solve was built for n={solve.n}")
    return solve.apply_inv(v)


def _check_params(ds: SpatialDataset, basis: BasisSet, params: SreParams):
    if ds.d != basis.dim:
        raise ValueError(f"dataset is {ds.d}-dimensional, basis is {basis.dim}-dimensional")
    if params.p != ds.p:
        raise ValueError(f"beta has {params.p} entries, dataset has {ds.p} covariates")


def fitted_solve(ds: SpatialDataset, basis: BasisSet, params: SreParams, Phi=None) -> FittedSolve:
    """Build the :class:`FittedSolve` for a dataset under ``params``.

    The cached ``Phi' C_xi^-1 Z`` and ``Phi' C_xi^-1 X`` products land in
    ``extras``.
    """
    _check_params(ds, basis, params)
    if Phi is None:
        Phi = basis.evaluate(ds.locations)
    K = k_matrix(params.k_model, basis)
    xi = params.noise.sigma2_xi
    resid = ds.z - ds.X @ params.beta
    solve = build_solve(Phi, K, xi, resid)
    solve.extras["PhiT_Cinv_Z"] = np.asarray(solve.Phi.T @ ds.z).ravel() / xi
    solve.extras["PhiT_Cinv_X"] = np.asarray(solve.Phi.T @ ds.X) / xi
    return solve


def log_likelihood(ds: SpatialDataset, basis: BasisSet, params: SreParams, solve: FittedSolve | None = None) -> float:
    """Gaussian log-density of ``Z`` under ``Gau(X beta, C_Z)``."""
    if solve is None:
        solve = fitted_solve(ds, basis, params)
    r = solve.resid
    quad = float(r @ solve.apply_inv(r))
    val = -0.5 * (ds.n * np.log(2.0 * np.pi) + solve.logdet() + quad)
    if not np.isfinite(val):
        raise SingularModelError("log-likelihood is not finite")
    return val


@dataclass(frozen=True, eq=False)
class PredictiveResult:
    """Per-target predictive mean, variance and central interval at ``level``."""

    locations: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.9
    mc_se: np.ndarray | None = None
    samples: np.ndarray | None = None

    @classmethod
    def gaussian(cls, locations, mean, variance, level: float = 0.9) -> "PredictiveResult":
        if not 0 < level < 1:
            raise ValueError(f"interval level must be in (0, 1), got {level}")
        variance = np.clip(np.asarray(variance, dtype=float), 0.0, None)
        q = norm.ppf(0.5 + level / 2.0)
        sd = np.sqrt(variance)
        mean = np.asarray(mean, dtype=float)
        return cls(np.asarray(locations, dtype=float), mean, variance, mean - q * sd, mean + q * sd, level)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def __len__(self) -> int:
        return self.mean.shape[0]

    def shifted(self, offset: float) -> "PredictiveResult":
        return replace(self, mean=self.mean + offset, lower=self.lower + offset, upper=self.upper + offset)


def _coord_index(locs: np.ndarray) -> dict:
    idx: dict = {}
    for i, row in enumerate(locs):
        idx.setdefault(row.tobytes(), []).append(i)
    return idx


def match_rows(data_locs: np.ndarray, targets: np.ndarray, offset: int = 0) -> list:
    """For each target, the data row (plus ``offset``) whose nugget it shares.

    A diagonal ``C_delta`` gives every data row its own nugget, so a target
    is identified with the first row having bitwise-equal coordinates.
    Sharing with several duplicate rows would make the joint covariance
    indefinite.
    """
    data_locs = np.ascontiguousarray(data_locs, dtype=float)
    targets = np.ascontiguousarray(targets, dtype=float)
    index = _coord_index(data_locs)
    return [np.asarray(index.get(t.tobytes(), ())[:1], dtype=int) + offset for t in targets]


def predict_from_solve(
    solve: FittedSolve,
    Phi0,
    fixed0: np.ndarray,
    delta0: float,
    matches: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance at targets with basis rows ``Phi0``.

    ``fixed0`` is the fixed-effect mean at each target and ``delta0`` the
    nugget variance of the predicted process. ``matches[j]`` lists data rows
    whose nugget is shared with target ``j`` (same process, same coordinates).
    """
    P0 = Phi0.toarray() if sparse.issparse(Phi0) else np.asarray(Phi0, dtype=float)
    S = solve.Sigma_alpha
    mean = fixed0 + P0 @ solve.mu_alpha
    PS = P0 @ S
    var = np.einsum("ij,ij->i", PS, P0) + delta0
    if matches is not None and delta0 > 0:
        Phi = solve.Phi
        for j, rows in enumerate(matches):
            if rows.size == 0:
                continue
            g = np.asarray(Phi[rows].T @ (1.0 / solve.xi[rows])).ravel()
            s_m = (1.0 / solve.xi[rows]).sum()
            mean[j] += delta0 * solve.w[rows].sum()
            var[j] -= 2.0 * delta0 * (g @ PS[j]) + delta0 ** 2 * (s_m - g @ S @ g)
    return mean, np.clip(var, 0.0, None)


def predict(
    ds: SpatialDataset,
    basis: BasisSet,
    params: SreParams,
    targets,
    level: float = 0.9,
    target_covariates=None,
    solve: FittedSolve | None = None,
) -> PredictiveResult:
    """Kriging predictor of the hidden process ``Y`` at each target location.

    ``beta`` is treated as known. ``target_covariates`` is required when the
    model has covariates.
    """
    targets = as_locations(targets, basis.dim)
    m = targets.shape[0]
    if m == 0:
        raise ValueError("no prediction targets")
    if params.p:
        if target_covariates is None:
            raise ValueError("covariates are required at the targets")
        X0 = np.asarray(target_covariates, dtype=float).reshape(m, params.p)
        fixed0 = X0 @ params.beta
    else:
        fixed0 = np.zeros(m)
    if solve is None:
        solve = fitted_solve(ds, basis, params)
    delta0 = params.noise.sigma2_delta
    matches = match_rows(ds.locations, targets) if delta0 > 0 else None
    mean, var = predict_from_solve(solve, basis.evaluate(targets), fixed0, delta0, matches)
    return PredictiveResult.gaussian(targets, mean, var, level)


def kriging_baseline(
    ds: SpatialDataset,
    p: MaternParams,
    sigma2_eps: float,
    targets,
    level: float = 0.9,
    max_n: int = 20000,
) -> PredictiveResult:
    """Dense simple kriging of a zero-mean Matérn process observed with noise."""
    if ds.n > max_n:
        raise ValueError(f"dense kriging limited to n <= {max_n}, got n = {ds.n}")
    targets = as_locations(targets, ds.d)
    C = matern(cdist(ds.locations, ds.locations), p)
    C[np.diag_indices_from(C)] += sigma2_eps
    try:
        cf = linalg.cho_factor(C, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularModelError(f"Matérn Gram matrix is singular: {exc}") from None
    c0 = matern(cdist(targets, ds.locations), p)
    mean = c0 @ linalg.cho_solve(cf, ds.z)
    var = p.sigma2 - np.einsum("ij,ji->i", c0, linalg.cho_solve(cf, c0.T))
    return PredictiveResult.gaussian(targets, mean, var, level)


def _matern_nll(theta: np.ndarray, D: np.ndarray, z: np.ndarray, nu: float) -> float:
    s2, rho, e2 = np.exp(theta)
    C = matern(D, MaternParams(s2, rho, nu))
    C[np.diag_indices_from(C)] += e2
    try:
        cf = linalg.cho_factor(C, lower=True)
    except linalg.LinAlgError:
        return 1e300
    a = linalg.cho_solve(cf, z)
    return float(np.log(np.diag(cf[0])).sum() + 0.5 * z @ a)


def fit_matern_ml(ds: SpatialDataset, nu: float = 1.5, max_n: int = 4000) -> tuple[MaternParams, float]:
    """Maximum-likelihood sill, range and noise variance for zero-mean ``ds.z``.

    Works on the dense ``n x n`` likelihood, so the first ``max_n`` rows are used.
    """
    sub = ds if ds.n <= max_n else ds.subset(np.arange(max_n))
    D = cdist(sub.locations, sub.locations)
    z = sub.z
    v = max(float(np.var(z)), 1e-12)
    span = max(float(D.max()), 1e-12)
    x0 = np.log([0.8 * v, 0.1 * span, 0.2 * v])
    bounds = [(np.log(1e-6 * v), np.log(1e3 * v)), (np.log(1e-4 * span), np.log(10 * span)),
              (np.log(1e-8 * v), np.log(1e3 * v))]
    res = optimize.minimize(_matern_nll, x0, args=(D, z, nu), method="L-BFGS-B", bounds=bounds)
    s2, rho, e2 = np.exp(res.x)
    return MaternParams(float(s2), float(rho), nu), float(e2)


def write_predictions(result: PredictiveResult, path, coord_names: Sequence[str] | None = None) -> None:
    """CSV with target coordinates, mean, se, lower, upper (and mc_se if present)."""
    d = result.locations.shape[1]
    names = list(coord_names) if coord_names else [f"s{i + 1}" for i in range(d)]
    header = [*names, "mean", "se", "lower", "upper"]
    if result.mc_se is not None:
        header.append("mc_se")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        se = result.se
        for j in range(len(result)):
            row = [*result.locations[j], result.mean[j], se[j], result.lower[j], result.upper[j]]
            if result.mc_se is not None:
                row.append(result.mc_se[j])
            w.writerow([repr(float(x)) for x in row])
