"""Dynamic spatio-temporal basis-function models.

Coefficients evolve as ``alpha_t = M alpha_{t-1} + omega_t`` with
``omega_t ~ Gau(0, C_omega)`` and ``alpha_1 ~ Gau(m0, P0)``; each time slice
is observed as ``Z_t = X_t beta + Phi_t alpha_t + delta_t + eps_t``. The
nugget and measurement error are folded into one observation variance
``sigma2_delta + sigma2_eps``, so filtering and smoothing run on ``alpha_t``
alone. Per-slice updates go through the low-rank capacitance solve, so a
slice with ``n_t`` observations costs ``O(n_t r^2)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .basis import BasisSet
from .covariance import NoiseParams, Unstructured
from .data import SpatialDataset, StDataset, as_locations
from .engine import PredictiveResult, SreParams, build_solve, factor_psd, predict

__all__ = [
    "DynamicStModel",
    "StateTrajectory",
    "simulate_dynamic",
    "kalman_filter",
    "kalman_smoother",
    "predict_st",
    "transient_growth_diag",
    "descriptive_st_predict",
    "st_targets",
    "save_trajectory",
]


def _square(M, r: int, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (r, r):
        raise ValueError(f"{name} must be {r}x{r}, got {M.shape}")
    return M


@dataclass(frozen=True, eq=False)
class DynamicStModel:
    basis: BasisSet
    M: np.ndarray
    C_omega: np.ndarray
    m0: np.ndarray
    P0: np.ndarray
    sigma2_delta: float = 0.0
    sigma2_eps: float = 1.0
    beta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        r = self.basis.r
        object.__setattr__(self, "M", _square(self.M, r, "M"))
        for name in ("C_omega", "P0"):
            S = _square(getattr(self, name), r, name)
            if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(S)[0] < -1e-10 * max(1.0, np.abs(S).sum(axis=1).max()):
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, 0.5 * (S + S.T))
        m0 = np.asarray(self.m0, dtype=float).reshape(-1)
        if m0.shape != (r,):
            raise ValueError(f"m0 must have length {r}")
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not (self.sigma2_delta >= 0 and self.sigma2_eps >= 0):
            raise ValueError("noise variances must be non-negative")

    @property
    def r(self) -> int:
        return self.basis.r

    @property
    def obs_var(self) -> float:
        return self.sigma2_delta + self.sigma2_eps


@dataclass(eq=False)
class StateTrajectory:
    """Moments of ``alpha_t`` for ``t = 1..T`` (row ``t - 1``).

    ``pred_*`` hold the one-step predictions ``alpha_t | Z_1..Z_{t-1}``,
    ``filt_*`` the filtered moments, and ``smooth_*`` the smoothed moments
    once :func:`kalman_smoother` has run.
    """

    pred_mean: np.ndarray
    pred_cov: np.ndarray
    filt_mean: np.ndarray
    filt_cov: np.ndarray
    smooth_mean: np.ndarray | None = None
    smooth_cov: np.ndarray | None = None
    innovations: list = field(default_factory=list)
    loglik: float = 0.0

    @property
    def T(self) -> int:
        return self.filt_mean.shape[0]

    def mean(self, t: int) -> np.ndarray:
        src = self.smooth_mean if self.smooth_mean is not None else self.filt_mean
        return src[t - 1]

    def cov(self, t: int) -> np.ndarray:
        src = self.smooth_cov if self.smooth_cov is not None else self.filt_cov
        return src[t - 1]


def _fixed(model: DynamicStModel, ds: SpatialDataset) -> np.ndarray:
    if model.beta.size == 0:
        if ds.p:
            raise ValueError("slice has covariates but the model has no beta")
        return np.zeros(ds.n)
    if ds.p != model.beta.size:
        raise ValueError(f"slice has {ds.p} covariates, beta has {model.beta.size}")
    return ds.X @ model.beta


def simulate_dynamic(
    model: DynamicStModel,
    T: int,
    locations: Sequence | np.ndarray,
    seed=None,
    covariates: Sequence | None = None,
):
    """Simulate states and data for ``t = 1..T``.

    ``locations`` is either one ``(n, d)`` array reused at every time or a
    length-``T`` sequence of arrays. Returns ``(data, states, y)`` with
    ``states`` of shape ``(T, r)`` and ``y`` the list of hidden ``Y_t``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(locations, np.ndarray) and locations.ndim == 2:
        locs = [locations] * T
    else:
        locs = list(locations)
        if len(locs) != T:
            raise ValueError(f"need {T} location sets, got {len(locs)}")
    Lp = factor_psd(model.P0)
    Lw = factor_psd(model.C_omega)
    r = model.r
    states = np.empty((T, r))
    slices, ys = [], []
    a = model.m0 + Lp @ rng.standard_normal(r)
    for t in range(T):
        if t > 0:
            a = model.M @ a + Lw @ rng.standard_normal(r)
        states[t] = a
        L = as_locations(locs[t], model.basis.dim)
        n = L.shape[0]
        X = None if covariates is None else np.asarray(covariates[t], dtype=float).reshape(n, -1)
        fixed = np.zeros(n) if X is None else X @ model.beta
        y = fixed + model.basis.evaluate(L) @ a + np.sqrt(model.sigma2_delta) * rng.standard_normal(n)
        z = y + np.sqrt(model.sigma2_eps) * rng.standard_normal(n)
        ys.append(y)
        slices.append(SpatialDataset(L, z, X) if n else None)
    return StDataset(tuple(slices)), states, ys


def kalman_filter(model: DynamicStModel, data: StDataset, whiten: bool = False) -> StateTrajectory:
    """Forward recursion with a Joseph-form covariance update.

    With ``whiten`` the innovations are also returned premultiplied by the
    inverse Cholesky factor of their covariance (dense in ``n_t``).
    """
    T, r = data.T, model.r
    pm, pc = np.empty((T, r)), np.empty((T, r, r))
    fm, fc = np.empty((T, r)), np.empty((T, r, r))
    innov = []
    loglik = 0.0
    d = model.obs_var
    I = np.eye(r)
    for t in range(T):
        if t == 0:
            m, P = model.m0.copy(), model.P0.copy()
        else:
            m = model.M @ fm[t - 1]
            P = model.M @ fc[t - 1] @ model.M.T + model.C_omega
            P = 0.5 * (P + P.T)
        pm[t], pc[t] = m, P
        ds = data.slices[t]
        if ds is None or ds.n == 0:
            fm[t], fc[t] = m, P
            innov.append(np.zeros(0))
            continue
        if ds.d != model.basis.dim:
            raise ValueError(f"slice {t + 1} has dimension {ds.d}, basis has {model.basis.dim}")
        Phi = model.basis.evaluate(ds.locations)
        v = ds.z - _fixed(model, ds) - Phi @ m
        solve = build_solve(Phi, P, d, v)
        Sig = solve.Sigma_alpha
        H = Sig @ solve.G  # gain times Phi
        fm[t] = m + solve.mu_alpha
        IH = I - H
        Pf = IH @ P @ IH.T + Sig @ solve.G @ Sig
        fc[t] = 0.5 * (Pf + Pf.T)
        loglik += -0.5 * (ds.n * np.log(2 * np.pi) + solve.logdet() + v @ solve.apply_inv(v))
        if whiten:
            Pd = Phi.toarray()
            S = Pd @ P @ Pd.T + d * np.eye(ds.n)
            innov.append(linalg.solve_triangular(linalg.cholesky(S, lower=True), v, lower=True))
        else:
            innov.append(v)
    return StateTrajectory(pm, pc, fm, fc, innovations=innov, loglik=float(loglik))


def kalman_smoother(model: DynamicStModel, data: StDataset, filtered: StateTrajectory | None = None) -> StateTrajectory:
    """Rauch-Tung-Striebel backward pass over a filtered trajectory."""
    traj = kalman_filter(model, data) if filtered is None else filtered
    T = traj.T
    sm, sc = traj.filt_mean.copy(), traj.filt_cov.copy()
    for t in range(T - 2, -1, -1):
        Pp = traj.pred_cov[t + 1]
        cross = model.M @ traj.filt_cov[t]  # cov(alpha_{t+1}, alpha_t | Z_1..Z_t)
        try:
            Jt = linalg.solve(Pp, cross, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            Jt = np.linalg.lstsq(Pp, cross, rcond=None)[0]
        J = Jt.T
        sm[t] = traj.filt_mean[t] + J @ (sm[t + 1] - traj.pred_mean[t + 1])
        C = traj.filt_cov[t] + J @ (sc[t + 1] - Pp) @ J.T
        sc[t] = 0.5 * (C + C.T)
    return StateTrajectory(traj.pred_mean, traj.pred_cov, traj.filt_mean, traj.filt_cov,
                           sm, sc, traj.innovations, traj.loglik)


def st_targets(targets) -> np.ndarray:
    """Normalise ``(location, t)`` pairs or an ``(m, d + 1)`` array to an array with time last."""
    if isinstance(targets, np.ndarray):
        return as_locations(targets)
    rows = [np.concatenate([np.atleast_1d(np.asarray(s, dtype=float)), [float(t)]]) for s, t in targets]
    return as_locations(np.vstack(rows))


def predict_st(
    model: DynamicStModel,
    traj: StateTrajectory,
    targets,
    level: float = 0.9,
    covariates=None,
) -> PredictiveResult:
    """Predict ``Y_t(s)`` at ``(s, t)`` targets; ``t > T`` are forecasts.

    In-sample targets use smoothed moments when available. Forecasts
    propagate the time-``T`` moments through ``M`` and ``C_omega``.
    """
    tg = st_targets(targets)
    t_idx = tg[:, -1]
    if np.any(t_idx < 1) or np.any(t_idx != np.round(t_idx)):
        raise ValueError("target times must be integers >= 1")
    t_idx = t_idx.astype(int)
    m = tg.shape[0]
    if model.beta.size:
        if covariates is None:
            raise ValueError("covariates are required at the targets")
        fixed = np.asarray(covariates, dtype=float).reshape(m, -1) @ model.beta
    else:
        fixed = np.zeros(m)
    Phi0 = model.basis.evaluate(tg[:, :-1]).toarray()
    T = traj.T
    means = {t: traj.mean(t) for t in range(1, T + 1)}
    covs = {t: traj.cov(t) for t in range(1, T + 1)}
    mu, P = traj.mean(T), traj.cov(T)
    for t in range(T + 1, int(t_idx.max(initial=T)) + 1):
        mu = model.M @ mu
        P = model.M @ P @ model.M.T + model.C_omega
        means[t], covs[t] = mu, 0.5 * (P + P.T)
    mean = np.empty(m)
    var = np.empty(m)
    for j in range(m):
        t = t_idx[j]
        mean[j] = fixed[j] + Phi0[j] @ means[t]
        var[j] = Phi0[j] @ covs[t] @ Phi0[j] + model.sigma2_delta
    return PredictiveResult.gaussian(tg, mean, var, level)


def transient_growth_diag(M) -> tuple[bool, float]:
    """Whether ``M`` is normal, and its largest one-step energy amplification ``sigma_max(M)**2``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    fro = np.linalg.norm(M, "fro")
    is_normal = bool(np.linalg.norm(M.T @ M - M @ M.T, "fro") <= 1e-10 * fro ** 2)
    amp = float(np.linalg.norm(M, 2) ** 2) if M.size else 0.0
    return is_normal, amp


def descriptive_st_predict(
    st_basis: BasisSet,
    K: np.ndarray,
    noise: NoiseParams,
    data: StDataset,
    targets,
    level: float = 0.9,
    beta=None,
    target_covariates=None,
) -> PredictiveResult:
    """Kriging with a space-time basis by flattening ``(s, t)`` into one domain."""
    flat = data.flatten()
    b = np.zeros(flat.p) if beta is None else beta
    params = SreParams(b, Unstructured(K), noise)
    return predict(flat, st_basis, params, st_targets(targets), level, target_covariates)


def save_trajectory(traj: StateTrajectory, path) -> None:
    """Dump filtered (and smoothed) moments as JSON for inspection."""
    doc = {"T": traj.T, "loglik": traj.loglik,
           "filtered": [{"t": t + 1, "mean": traj.filt_mean[t].tolist(), "cov": traj.filt_cov[t].tolist()}
                        for t in range(traj.T)]}
    if traj.smooth_mean is not None:
        doc["smoothed"] = [{"t": t + 1, "mean": traj.smooth_mean[t].tolist(), "cov": traj.smooth_cov[t].tolist()}
                           for t in range(traj.T)]
    Path(path).write_text(json.dumps(doc), encoding="utf-8")
