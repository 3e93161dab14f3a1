"""Box-Cox trans-Gaussian prediction.

The data are mapped to the Gaussian scale with ``g(y) = (y**lam - 1) / lam``
(``log y`` when ``lam == 0``), the low-rank Gaussian engine predicts there,
and predictive distributions are carried back by Monte Carlo through
``g^-1``. Inputs are assumed pre-scaled to be unitless; ``lam`` is given.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import exprel

from .basis import BasisSet
from .data import SpatialDataset, as_locations
from .engine import PredictiveResult, SreParams, predict

__all__ = [
    "BoxCox",
    "McConfig",
    "TransformDomainError",
    "bc_forward",
    "bc_inverse",
    "transform_dataset",
    "predict_trans",
]

MAX_INVALID_FRACTION = 0.01


class TransformDomainError(ValueError):
    """Input outside the domain of the Box-Cox transform or its inverse."""


def bc_forward(y, lam: float):
    """Box-Cox transform of positive data."""
    y = np.asarray(y, dtype=float)
    if lam <= 0 and np.any(y <= 0):
        raise TransformDomainError(f"Box-Cox with lambda={lam} needs y > 0")
    if np.any(y < 0):
        raise TransformDomainError("Box-Cox needs non-negative y")
    with np.errstate(divide="ignore"):
        logy = np.log(y)
    if lam == 0:
        out = logy
    else:
        # log(y) * (e^x - 1) / x with x = lam log(y) stays accurate as lam -> 0
        pos = y > 0
        ly = np.where(pos, logy, 0.0)
        out = np.where(pos, ly * exprel(lam * ly), -1.0 / lam)
    return float(out) if out.ndim == 0 else out


def _log1p_rel(u):
    """``log1p(u) / u`` with the removable singularity at 0 filled in."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < 1e-8
    safe = np.where(small, 1.0, u)
    return np.where(small, 1.0 - 0.5 * u, np.log1p(safe) / safe)


def bc_inverse(w, lam: float):
    """Inverse Box-Cox transform; needs ``lam * w + 1 > 0`` when ``lam != 0``."""
    w = np.asarray(w, dtype=float)
    if lam == 0:
        out = np.exp(w)
    else:
        base = lam * w + 1.0
        if np.any(base <= 0):
            raise TransformDomainError(f"lambda * w + 1 must be positive for lambda={lam}")
        out = np.exp(w * _log1p_rel(lam * w))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoxCox:
    lam: float

    def forward(self, y):
        return bc_forward(y, self.lam)

    def inverse(self, w):
        return bc_inverse(w, self.lam)


@dataclass(frozen=True)
class McConfig:
    n_samples: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 100:
            raise ValueError("at least 100 Monte Carlo samples are required")


def transform_dataset(ds: SpatialDataset, lam: float) -> SpatialDataset:
    return SpatialDataset(ds.locations, bc_forward(ds.z, lam), ds.covariates)


def _valid(w: np.ndarray, lam: float) -> np.ndarray:
    if lam == 0:
        return np.ones(w.shape, dtype=bool)
    return lam * w + 1.0 > 0


def _draw(mu: float, sd: float, lam: float, n: int, rng: np.random.Generator) -> np.ndarray:
    w = mu + sd * rng.standard_normal(n)
    ok = _valid(w, lam)
    bad = n - int(ok.sum())
    if bad > MAX_INVALID_FRACTION * n:
        raise TransformDomainError(
            f"{bad / n:.1%} of predictive samples fall outside the inverse Box-Cox domain"
        )
    while bad:
        fresh = mu + sd * rng.standard_normal(bad)
        w[~ok] = fresh
        ok = _valid(w, lam)
        bad = n - int(ok.sum())
    return bc_inverse(w, lam)


def predict_trans(
    ds: SpatialDataset,
    basis: BasisSet,
    params: SreParams,
    lam: float,
    targets,
    mc: McConfig = McConfig(),
    level: float = 0.9,
    target_covariates=None,
    keep_samples: bool = False,
) -> PredictiveResult:
    """Predict ``Y = g^-1(W)`` on the original scale.

    ``ds`` is on the original (positive) scale and ``params`` describe the
    Gaussian model for the transformed data. Per target, samples of the
    Gaussian predictive distribution are pushed through ``g^-1``; the result
    holds their mean, variance, empirical central interval and Monte Carlo
    standard error of the mean. Target ``j`` draws from a generator seeded
    with ``(mc.seed, j)``.
    """
    targets = as_locations(targets, basis.dim)
    gauss = predict(transform_dataset(ds, lam), basis, params, targets, level, target_covariates)
    m, N = len(gauss), mc.n_samples
    sd = gauss.se
    samples = np.empty((m, N))
    for j in range(m):
        rng = np.random.default_rng(np.random.SeedSequence([mc.seed, j]))
        samples[j] = _draw(gauss.mean[j], sd[j], lam, N, rng)
    a = (1.0 - level) / 2.0
    lower, upper = np.quantile(samples, [a, 1.0 - a], axis=1)
    var = samples.var(axis=1, ddof=1)
    return PredictiveResult(
        targets, samples.mean(axis=1), var, lower, upper, level,
        mc_se=np.sqrt(var / N), samples=samples if keep_samples else None,
    )
