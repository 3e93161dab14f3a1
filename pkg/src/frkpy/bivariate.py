"""Bivariate basis-function models built by conditioning.

``alpha_1 ~ Gau(0, K11)`` and ``alpha_2 | alpha_1 ~ Gau(A alpha_1, K2|1)``
give the joint coefficient covariance

    K = [[K11,      K11 A'          ],
         [A K11,    K2|1 + A K11 A' ]]

which is PSD for any real ``A`` once ``K11`` and ``K2|1`` are. Both processes
are zero-mean; their nuggets are independent of each other.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .basis import BasisSet
from .data import SpatialDataset, as_location, as_locations
from .engine import PredictiveResult, build_solve, match_rows, predict_from_solve

__all__ = ["BivariateModel", "BivariateDataset", "assemble_joint_k", "cross_cov", "cokrige"]


def _sym_psd(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max(initial=0.0))):
        raise ValueError(f"{name} must be symmetric")
    M = 0.5 * (M + M.T)
    if M.size and np.linalg.eigvalsh(M)[0] < -1e-10 * max(1.0, np.abs(M).sum(axis=1).max()):
        raise ValueError(f"{name} must be positive semidefinite")
    return M


@dataclass(frozen=True, eq=False)
class BivariateModel:
    basis1: BasisSet
    basis2: BasisSet
    K11: np.ndarray
    A: np.ndarray
    K2_1: np.ndarray
    sigma2_delta1: float = 0.0
    sigma2_delta2: float = 0.0
    sigma2_eps1: float = 1.0
    sigma2_eps2: float = 1.0

    def __post_init__(self):
        r1, r2 = self.basis1.r, self.basis2.r
        K11 = _sym_psd(self.K11, "K11")
        K21 = _sym_psd(self.K2_1, "K2|1")
        A = np.asarray(self.A, dtype=float).reshape(r2, r1) if np.size(self.A) == r1 * r2 else None
        if K11.shape != (r1, r1) or K21.shape != (r2, r2) or A is None:
            raise ValueError(
                f"shape mismatch: expected K11 {r1}x{r1}, A {r2}x{r1}, K2|1 {r2}x{r2}"
            )
        for name in ("sigma2_delta1", "sigma2_delta2", "sigma2_eps1", "sigma2_eps2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        object.__setattr__(self, "K11", K11)
        object.__setattr__(self, "K2_1", K21)
        object.__setattr__(self, "A", A)

    def basis(self, i: int) -> BasisSet:
        return (self.basis1, self.basis2)[_proc(i)]

    def delta(self, i: int) -> float:
        return (self.sigma2_delta1, self.sigma2_delta2)[_proc(i)]

    def xi(self, i: int) -> float:
        return (self.sigma2_delta1 + self.sigma2_eps1, self.sigma2_delta2 + self.sigma2_eps2)[_proc(i)]


def _proc(i: int) -> int:
    if i not in (1, 2):
        raise ValueError(f"process index must be 1 or 2, got {i}")
    return i - 1


@dataclass(frozen=True)
class BivariateDataset:
    """Data for each process; either may be ``None`` (no observations)."""

    z1: SpatialDataset | None = None
    z2: SpatialDataset | None = None

    def get(self, i: int) -> SpatialDataset | None:
        return (self.z1, self.z2)[_proc(i)]


def assemble_joint_k(m: BivariateModel) -> np.ndarray:
    """Joint ``(r1 + r2)``-square covariance of ``(alpha_1, alpha_2)``."""
    K12 = m.K11 @ m.A.T
    K22 = m.K2_1 + m.A @ m.K11 @ m.A.T
    K = np.block([[m.K11, K12], [K12.T, K22]])
    return 0.5 * (K + K.T)


def _block(m: BivariateModel, i: int, j: int, K: np.ndarray | None = None) -> np.ndarray:
    K = assemble_joint_k(m) if K is None else K
    r1 = m.basis1.r
    rows = slice(0, r1) if i == 1 else slice(r1, None)
    cols = slice(0, r1) if j == 1 else slice(r1, None)
    return K[rows, cols]


def cross_cov(m: BivariateModel, i: int, j: int, s, u) -> float:
    """``cov(Y_i(s), Y_j(u)) = phi_i(s)' K_ij phi_j(u)`` plus the nugget when ``i == j`` and ``s == u``."""
    _proc(i)
    _proc(j)
    s = as_location(s)
    u = as_location(u)
    val = float(m.basis(i).phi(s) @ _block(m, i, j) @ m.basis(j).phi(u))
    if i == j and np.array_equal(s, u):
        val += m.delta(i)
    return val


def cokrige(
    m: BivariateModel,
    data: BivariateDataset,
    target: int,
    targets,
    level: float = 0.9,
) -> PredictiveResult:
    """Predict ``Y_target`` at ``targets`` from the stacked data of both processes."""
    _proc(target)
    r1, r2 = m.basis1.r, m.basis2.r
    blocks, z, xi = [], [], []
    n1 = 0
    for i in (1, 2):
        ds = data.get(i)
        if ds is None or ds.n == 0:
            blocks.append(None)
            continue
        if ds.p:
            raise ValueError("bivariate processes are zero-mean; covariates are not supported")
        P = m.basis(i).evaluate(ds.locations)
        pad = sparse.csr_matrix((ds.n, r2 if i == 1 else r1))
        blocks.append(sparse.hstack([P, pad] if i == 1 else [pad, P]))
        z.append(ds.z)
        xi.append(np.full(ds.n, m.xi(i)))
        if i == 1:
            n1 = ds.n
    if not z:
        raise ValueError("cokriging needs at least one observation")
    Phi = sparse.vstack([b for b in blocks if b is not None]).tocsr()
    solve = build_solve(Phi, assemble_joint_k(m), np.concatenate(xi), np.concatenate(z))

    tb = m.basis(target)
    targets = as_locations(targets, tb.dim)
    P0 = tb.evaluate(targets)
    pad = sparse.csr_matrix((targets.shape[0], r2 if target == 1 else r1))
    P0 = sparse.hstack([P0, pad] if target == 1 else [pad, P0]).tocsr()

    delta0 = m.delta(target)
    matches = None
    own = data.get(target)
    if delta0 > 0 and own is not None and own.n:
        matches = match_rows(own.locations, targets, offset=0 if target == 1 else n1)
    mean, var = predict_from_solve(solve, P0, np.zeros(targets.shape[0]), delta0, matches)
    return PredictiveResult.gaussian(targets, mean, var, level)
