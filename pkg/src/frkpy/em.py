"""Maximum-likelihood fitting of the spatial mixed effects model by E-M.

The coefficients ``alpha`` are the missing data. Given the E-step moments
``mu = E(alpha | Z)`` and ``Sigma = var(alpha | Z)`` the expected
complete-data log-likelihood is, up to a constant,

    q = -1/2 [ n log s2 + (|Z - X b - Phi mu|^2 + tr(Phi' Phi Sigma)) / s2 ]
        -1/2 [ log|K| + tr(K^-1 (Sigma + mu mu')) ]

with ``s2 = sigma2_delta + sigma2_eps``. The two brackets separate, so the
M-step is exact: ``b`` is least squares on ``Z - Phi mu``, ``s2`` is the mean
expected squared residual, and ``K`` maximises the second bracket (closed
form for unstructured and scaled-identity ``K``; a bounded 1-D search over
the correlation parameter otherwise).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import pdist

from .basis import BasisSet
from .covariance import (
    Ar1PerResolution,
    ExpCentroid,
    KModel,
    NoiseParams,
    ScaledIdentity,
    Unstructured,
    correlation_matrix,
    k_matrix,
)
from .data import SpatialDataset
from .engine import SreParams, fitted_solve, log_likelihood

__all__ = [
    "EmConfig",
    "FitResult",
    "EmMonotonicityError",
    "e_step",
    "m_step",
    "expected_loglik",
    "fit_em",
    "initial_params",
    "params_to_dict",
    "params_from_dict",
    "save_fit",
    "load_fit",
]

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-9


class EmMonotonicityError(RuntimeError):
    """The log-likelihood decreased between E-M iterations."""


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 200
    tol: float = 1e-6
    param_tol: float = 1e-5
    init: str = "ols_moments"
    free_beta: bool = True
    free_k: bool = True
    free_sigma2_delta: bool = False
    free_sigma2_eps: bool = True
    merge_nugget: bool = False

    def __post_init__(self):
        if not (self.tol > 0 and self.param_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.free_sigma2_delta and self.free_sigma2_eps and not self.merge_nugget:
            raise ValueError(
                "sigma2_delta and sigma2_eps are not separately identifiable; "
                "fix one of them or set merge_nugget"
            )
        if self.init != "ols_moments":
            raise ValueError(f"unknown initialisation rule {self.init!r}")


@dataclass
class FitResult:
    params: SreParams
    loglik_trace: list
    iterations: int
    converged: bool
    reason: str
    flags: list = field(default_factory=list)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def e_step(ds: SpatialDataset, basis: BasisSet, params: SreParams, Phi=None):
    """Posterior mean and covariance of the basis coefficients given ``Z``."""
    solve = fitted_solve(ds, basis, params, Phi)
    return solve.mu_alpha, solve.Sigma_alpha


def _k_objective(R: np.ndarray, S: np.ndarray) -> tuple[float, float]:
    """Profile ``log|K| + tr(K^-1 S)`` over the scale of ``K = s * R``.

    Returns the optimal scale and the profiled objective ``r log s + log|R|``.
    """
    r = R.shape[0]
    try:
        cf = linalg.cho_factor(R, lower=True)
    except linalg.LinAlgError:
        return np.nan, np.inf
    s = np.trace(linalg.cho_solve(cf, S)) / r
    if not s > 0:
        return np.nan, np.inf
    return s, r * np.log(s) + 2.0 * np.log(np.diag(cf[0])).sum()


def _search_bounds(model: KModel, basis: BasisSet):
    if isinstance(model, Ar1PerResolution):
        return -0.999, 0.999, lambda x: x, lambda rho: Ar1PerResolution(1.0, rho)
    c = basis.centers
    span = pdist(c).max() if c.shape[0] > 1 else 1.0
    return (np.log(1e-3 * span), np.log(10.0 * span), np.exp,
            lambda ell: ExpCentroid(1.0, ell))


def _m_step_k(model: KModel, basis: BasisSet, S: np.ndarray) -> KModel:
    if isinstance(model, Unstructured):
        return Unstructured(S)
    if isinstance(model, ScaledIdentity):
        return ScaledIdentity(float(np.trace(S)) / basis.r)
    lo, hi, to_param, make = _search_bounds(model, basis)
    theta0 = model.rho if isinstance(model, Ar1PerResolution) else model.length_scale

    def f(x):
        return _k_objective(correlation_matrix(make(to_param(x)), basis), S)[1]

    x0 = theta0 if isinstance(model, Ar1PerResolution) else np.log(theta0)
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    # keep the current correlation parameter unless the search improves on it
    x = res.x if res.fun < f(x0) else x0
    theta = to_param(x)
    s, _ = _k_objective(correlation_matrix(make(theta), basis), S)
    if isinstance(model, Ar1PerResolution):
        return Ar1PerResolution(float(s), float(theta))
    return ExpCentroid(float(s), float(theta))


def _expected_sq_resid(ds, Phi, beta, mu, Sigma) -> float:
    e = ds.z - ds.X @ beta - Phi @ mu
    PtP = (Phi.T @ Phi).toarray() if hasattr(Phi, "toarray") else Phi.T @ Phi
    return float(e @ e + np.sum(PtP * Sigma))


def m_step(
    ds: SpatialDataset,
    basis: BasisSet,
    moments: tuple,
    config: EmConfig,
    current: SreParams,
    Phi=None,
    flags: list | None = None,
) -> SreParams:
    """Maximise the expected complete-data log-likelihood over the free parameters."""
    mu, Sigma = moments
    if Phi is None:
        Phi = basis.evaluate(ds.locations)
    if mu.shape != (basis.r,) or Sigma.shape != (basis.r, basis.r):
        raise ValueError("moments do not match the basis size")
    beta = current.beta
    if config.free_beta and ds.p:
        beta = np.linalg.lstsq(ds.X, ds.z - Phi @ mu, rcond=None)[0]

    k_model = current.k_model
    if config.free_k:
        S = Sigma + np.outer(mu, mu)
        S = 0.5 * (S + S.T)
        k_model = _m_step_k(current.k_model, basis, S)
        assert np.linalg.eigvalsh(k_matrix(k_model, basis))[0] > -1e-8 * max(1.0, np.trace(S)), \
            "M-step produced a non-PSD K"

    s2 = _expected_sq_resid(ds, Phi, beta, mu, Sigma) / ds.n
    floor = 1e-12 * max(np.var(ds.z), 1e-300)
    nz = current.noise
    d, e = nz.sigma2_delta, nz.sigma2_eps

    def clamp(v, name):
        if v < floor:
            if flags is not None:
                flags.append(f"{name} clamped to {floor:.3g}")
            return floor
        return v

    if config.merge_nugget:
        frac = d / nz.sigma2_xi if nz.sigma2_xi > 0 else 0.5
        s2 = clamp(s2, "sigma2_xi")
        d, e = frac * s2, (1.0 - frac) * s2
    elif config.free_sigma2_eps:
        e = clamp(s2 - d, "sigma2_eps")
    elif config.free_sigma2_delta:
        d = clamp(s2 - e, "sigma2_delta")
    return SreParams(beta, k_model, NoiseParams(float(d), float(e)))


def expected_loglik(ds, basis, params: SreParams, moments, Phi=None) -> float:
    """The E-M objective ``q(params | moments)`` without its constant."""
    mu, Sigma = moments
    if Phi is None:
        Phi = basis.evaluate(ds.locations)
    s2 = params.noise.sigma2_xi
    data = ds.n * np.log(s2) + _expected_sq_resid(ds, Phi, params.beta, mu, Sigma) / s2
    K = k_matrix(params.k_model, basis)
    S = Sigma + np.outer(mu, mu)
    cf = linalg.cho_factor(K, lower=True)
    proc = 2.0 * np.log(np.diag(cf[0])).sum() + np.trace(linalg.cho_solve(cf, S))
    return -0.5 * (data + proc)


def _param_vector(params: SreParams) -> np.ndarray:
    km = params.k_model
    if isinstance(km, Unstructured):
        kv = km.K.ravel()
    elif isinstance(km, ScaledIdentity):
        kv = [km.sigma2]
    elif isinstance(km, Ar1PerResolution):
        kv = [km.sigma2, km.rho]
    else:
        kv = [km.sigma2, km.length_scale]
    return np.concatenate([params.beta, np.asarray(kv, dtype=float),
                           [params.noise.sigma2_delta, params.noise.sigma2_eps]])


def _param_change(old: SreParams, new: SreParams) -> float:
    a, b = _param_vector(old), _param_vector(new)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-8 * np.abs(a).max())))


def fit_em(ds: SpatialDataset, basis: BasisSet, init: SreParams, config: EmConfig = EmConfig()) -> FitResult:
    """Alternate E- and M-steps from ``init`` until a stopping rule fires.

    Stops when the relative log-likelihood change falls below ``config.tol``,
    when the largest relative parameter change falls below
    ``config.param_tol``, or after ``config.max_iter`` M-steps. A decrease of
    the log-likelihood beyond 1e-9 raises :class:`EmMonotonicityError`.
    """
    Phi = basis.evaluate(ds.locations)
    params = init
    solve = fitted_solve(ds, basis, params, Phi)
    trace = [log_likelihood(ds, basis, params, solve)]
    flags: list = []
    reason = "max_iter"
    converged = False
    it = 0
    while it < config.max_iter:
        new = m_step(ds, basis, (solve.mu_alpha, solve.Sigma_alpha), config, params, Phi, flags)
        it += 1
        solve = fitted_solve(ds, basis, new, Phi)
        ll = log_likelihood(ds, basis, new, solve)
        if ll < trace[-1] - MONOTONE_SLACK:
            raise EmMonotonicityError(
                f"log-likelihood decreased at iteration {it}: {trace[-1]!r} -> {ll!r}"
            )
        trace.append(ll)
        dparam = _param_change(params, new)
        params = new
        if abs(ll - trace[-2]) <= config.tol * abs(trace[-2]):
            converged, reason = True, "loglik_tol"
            break
        if dparam <= config.param_tol:
            converged, reason = True, "param_tol"
            break
    log.info("E-M stopped after %d iterations (%s), loglik %.6f", it, reason, trace[-1])
    return FitResult(params, trace, it, converged, reason, flags)


def initial_params(
    ds: SpatialDataset,
    basis: BasisSet,
    k_template: KModel,
    sigma2_delta: float | None = None,
    sigma2_eps: float | None = None,
    Phi=None,
) -> SreParams:
    """Deterministic starting values.

    ``beta`` by ordinary least squares; each noise variance defaults to half
    the OLS residual variance; the scale of ``K`` matches the mean variance
    of the least-squares projection of the residuals onto the basis, keeping
    the correlation structure of ``k_template``.
    """
    if Phi is None:
        Phi = basis.evaluate(ds.locations)
    if ds.p:
        beta = np.linalg.lstsq(ds.X, ds.z, rcond=None)[0]
    else:
        beta = np.zeros(0)
    res = ds.z - ds.X @ beta
    v = float(res @ res) / max(ds.n - ds.p, 1)
    d = 0.5 * v if sigma2_delta is None else sigma2_delta
    e = 0.5 * v if sigma2_eps is None else sigma2_eps
    PtP = (Phi.T @ Phi).toarray()
    ridge = 1e-8 * max(np.trace(PtP) / basis.r, 1e-300)
    a_hat = linalg.solve(PtP + ridge * np.eye(basis.r), Phi.T @ res, assume_a="pos")
    explained = float(np.mean((Phi @ a_hat) ** 2))
    if isinstance(k_template, Unstructured):
        R = np.eye(basis.r)
    else:
        R = correlation_matrix(k_template, basis)
    per_unit = float(np.mean(np.asarray(Phi.multiply(Phi @ R).sum(axis=1))))
    s = explained / per_unit if per_unit > 0 else v
    s = max(s, 1e-6 * v, 1e-300)
    if isinstance(k_template, Unstructured):
        km = Unstructured(s * np.eye(basis.r))
    else:
        km = replace(k_template, sigma2=s)
    return SreParams(beta, km, NoiseParams(float(d), float(e)))


def params_to_dict(params: SreParams) -> dict:
    km = params.k_model
    if isinstance(km, Unstructured):
        k = {"type": "unstructured", "K": km.K.tolist()}
    elif isinstance(km, ScaledIdentity):
        k = {"type": "scaled_identity", "sigma2": km.sigma2}
    elif isinstance(km, Ar1PerResolution):
        k = {"type": "ar1", "sigma2": km.sigma2, "rho": km.rho}
    else:
        k = {"type": "exp_centroid", "sigma2": km.sigma2, "length_scale": km.length_scale}
    return {"beta": params.beta.tolist(), "k_model": k,
            "sigma2_delta": params.noise.sigma2_delta, "sigma2_eps": params.noise.sigma2_eps}


def k_model_from_dict(k: dict) -> KModel:
    kind = k.get("type")
    if kind == "unstructured":
        return Unstructured(np.array(k["K"], dtype=float))
    if kind == "scaled_identity":
        return ScaledIdentity(float(k["sigma2"]))
    if kind == "ar1":
        return Ar1PerResolution(float(k["sigma2"]), float(k["rho"]))
    if kind == "exp_centroid":
        return ExpCentroid(float(k["sigma2"]), float(k["length_scale"]))
    raise ValueError(f"unknown K model type {kind!r}")


def params_from_dict(d: dict) -> SreParams:
    return SreParams(np.array(d["beta"], dtype=float), k_model_from_dict(d["k_model"]),
                     NoiseParams(float(d["sigma2_delta"]), float(d["sigma2_eps"])))


def save_fit(result: FitResult, path) -> None:
    doc = {"params": params_to_dict(result.params), "loglik_trace": result.loglik_trace,
           "iterations": result.iterations, "converged": result.converged,
           "reason": result.reason, "flags": result.flags}
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_fit(path) -> FitResult:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return FitResult(params_from_dict(doc["params"]), list(doc["loglik_trace"]),
                     int(doc["iterations"]), bool(doc["converged"]), doc["reason"],
                     list(doc.get("flags", [])))
