"""Coefficient covariance models, the implied process covariance, and Matérn.

The process ``Y(s) = x(s)'beta + phi(s)'alpha + delta(s)`` with
``cov(alpha) = K`` and a nugget ``delta`` has covariance

    C_Y(s, u) = phi(s)' K phi(u) + sigma2_delta * [s == u]

which is positive semidefinite whenever ``K`` is.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from .basis import BasisSet
from .data import as_location, as_locations

__all__ = [
    "Unstructured",
    "ScaledIdentity",
    "Ar1PerResolution",
    "ExpCentroid",
    "KModel",
    "NoiseParams",
    "MaternParams",
    "PsdReport",
    "k_matrix",
    "correlation_matrix",
    "cov_y",
    "cov_y_matrix",
    "psd_check",
    "matern",
]


@dataclass(frozen=True, eq=False)
class Unstructured:
    K: np.ndarray

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError(f"K must be square, got shape {K.shape}")
        if not np.allclose(K, K.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(K).max(initial=0.0))):
            raise ValueError("K must be symmetric")
        K = 0.5 * (K + K.T)
        K.setflags(write=False)
        object.__setattr__(self, "K", K)


@dataclass(frozen=True)
class ScaledIdentity:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"variance must be non-negative, got {self.sigma2}")


@dataclass(frozen=True)
class Ar1PerResolution:
    """AR(1) correlation ``rho**|i - j|`` over basis order within each resolution."""

    sigma2: float
    rho: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"variance must be non-negative, got {self.sigma2}")
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")


@dataclass(frozen=True)
class ExpCentroid:
    """Exponential correlation ``exp(-|c_i - c_j| / length_scale)`` between centres of one resolution."""

    sigma2: float
    length_scale: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"variance must be non-negative, got {self.sigma2}")
        if not self.length_scale > 0:
            raise ValueError(f"length scale must be positive, got {self.length_scale}")


KModel = Union[Unstructured, ScaledIdentity, Ar1PerResolution, ExpCentroid]


@dataclass(frozen=True)
class NoiseParams:
    """Fine-scale (nugget) and measurement-error variances."""

    sigma2_delta: float = 0.0
    sigma2_eps: float = 1.0

    def __post_init__(self):
        if not (self.sigma2_delta >= 0 and self.sigma2_eps >= 0):
            raise ValueError("noise variances must be non-negative")

    @property
    def sigma2_xi(self) -> float:
        return self.sigma2_delta + self.sigma2_eps


@dataclass(frozen=True)
class MaternParams:
    sigma2: float = 1.0
    rho: float = 1.0
    nu: float = 0.5

    def __post_init__(self):
        if self.nu not in (0.5, 1.5, 2.5):
            raise ValueError(f"smoothness must be one of 0.5, 1.5, 2.5, got {self.nu}")
        if not self.rho > 0:
            raise ValueError("range must be positive")
        if not self.sigma2 >= 0:
            raise ValueError("sill must be non-negative")


def correlation_matrix(model: KModel, basis: BasisSet) -> np.ndarray:
    """``K / sigma2`` for the parametric models (block diagonal over resolutions)."""
    r = basis.r
    res = basis.resolutions
    same = res[:, None] == res[None, :]
    if isinstance(model, ScaledIdentity):
        return np.eye(r)
    if isinstance(model, Ar1PerResolution):
        pos = np.empty(r)
        for lv in np.unique(res):
            (idx,) = np.nonzero(res == lv)
            pos[idx] = np.arange(idx.size)
        lag = np.abs(pos[:, None] - pos[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            R = np.where(lag == 0, 1.0, np.float_power(model.rho, lag))
        return np.where(same, R, 0.0)
    if isinstance(model, ExpCentroid):
        c = basis.centers
        return np.where(same, np.exp(-cdist(c, c) / model.length_scale), 0.0)
    raise TypeError(f"no correlation structure for {type(model).__name__}")


def k_matrix(model: KModel, basis: BasisSet) -> np.ndarray:
    """The ``r x r`` coefficient covariance implied by ``model`` on ``basis``."""
    if isinstance(model, Unstructured):
        if model.K.shape != (basis.r, basis.r):
            raise ValueError(f"K is {model.K.shape}, basis has r={basis.r}")
        return model.K.copy()
    return model.sigma2 * correlation_matrix(model, basis)


def _phi_rows(basis: BasisSet, locs) -> np.ndarray:
    return basis.evaluate(as_locations(locs, basis.dim)).toarray()


def cov_y(s, u, basis: BasisSet, K: np.ndarray, noise: NoiseParams) -> float:
    """``C_Y(s, u)``; the nugget enters only when ``s`` and ``u`` are bitwise equal."""
    s = as_location(s)
    u = as_location(u)
    if s.size != basis.dim or u.size != basis.dim:
        raise ValueError("location dimension does not match the basis")
    K = np.asarray(K, dtype=float)
    if K.shape != (basis.r, basis.r):
        raise ValueError(f"K is {K.shape}, basis has r={basis.r}")
    val = basis.phi(s) @ K @ basis.phi(u)
    if np.array_equal(s, u):
        val += noise.sigma2_delta
    return float(val)


def cov_y_matrix(basis: BasisSet, K: np.ndarray, noise: NoiseParams, a, b=None) -> np.ndarray:
    """Matrix of ``C_Y`` between rows of ``a`` and rows of ``b`` (default ``b = a``)."""
    A = as_locations(a, basis.dim)
    B = A if b is None else as_locations(b, basis.dim)
    Pa = _phi_rows(basis, A)
    Pb = Pa if b is None else _phi_rows(basis, B)
    C = Pa @ K @ Pb.T
    if noise.sigma2_delta:
        eq = np.all(A[:, None, :] == B[None, :, :], axis=2)
        C = C + noise.sigma2_delta * eq
    return C


class PsdReport(NamedTuple):
    ok: bool
    min_eig: float


def psd_check(M) -> PsdReport:
    """Certify a symmetric matrix as PSD up to ``-1e-10 * max(1, ||M||_inf)``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, np.abs(M).max(initial=0.0))
    if np.abs(M - M.T).max(initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]) if M.size else 0.0
    norm_inf = np.abs(M).sum(axis=1).max(initial=0.0)
    return PsdReport(lam >= -1e-10 * max(1.0, norm_inf), lam)


def matern(h, p: MaternParams):
    """Matérn covariance at distance(s) ``h`` for half-integer smoothness."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("distances must be non-negative")
    x = np.sqrt(2.0 * p.nu) * h / p.rho
    if p.nu == 0.5:
        poly = 1.0
    elif p.nu == 1.5:
        poly = 1.0 + x
    else:
        poly = 1.0 + x + x * x / 3.0
    out = p.sigma2 * poly * np.exp(-x)
    return float(out) if out.ndim == 0 else out
