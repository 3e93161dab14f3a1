"""Synthetic data from the spatial mixed effects model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet
from .covariance import k_matrix
from .data import SpatialDataset, as_locations
from .engine import SreParams, factor_psd

__all__ = ["Simulation", "simulate_sre", "uniform_locations"]


@dataclass(frozen=True)
class Simulation:
    data: SpatialDataset
    y: np.ndarray
    alpha: np.ndarray


def uniform_locations(n: int, lower, upper, rng: np.random.Generator) -> np.ndarray:
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    return lower + (upper - lower) * rng.random((n, lower.size))


def simulate_sre(
    basis: BasisSet,
    params: SreParams,
    locations,
    seed=None,
    covariates=None,
) -> Simulation:
    """Draw ``alpha ~ Gau(0, K)``, then ``Y = X beta + Phi alpha + delta`` and ``Z = Y + eps``.

    Returns the data together with the hidden ``Y`` and ``alpha``.
    """
    rng = np.random.default_rng(seed)
    locs = as_locations(locations, basis.dim)
    n = locs.shape[0]
    K = k_matrix(params.k_model, basis)
    L = factor_psd(K)
    alpha = L @ rng.standard_normal(L.shape[1])
    X = np.zeros((n, 0)) if covariates is None else np.asarray(covariates, dtype=float).reshape(n, -1)
    if X.shape[1] != params.p:
        raise ValueError(f"beta has {params.p} entries, covariates have {X.shape[1]} columns")
    nz = params.noise
    y = X @ params.beta + basis.evaluate(locs) @ alpha + np.sqrt(nz.sigma2_delta) * rng.standard_normal(n)
    z = y + np.sqrt(nz.sigma2_eps) * rng.standard_normal(n)
    return Simulation(SpatialDataset(locs, z, X if X.shape[1] else None), y, alpha)
