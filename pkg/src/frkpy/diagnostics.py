"""Out-of-sample validation scores for probabilistic spatial predictions.

RMSPE, empirical interval coverage, the interval score of Gneiting and
Raftery (2007), and the continuous ranked probability score (closed form
for Gaussian predictions, empirical-CDF estimator for samples).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

__all__ = [
    "Diagnostics",
    "TABLE_COLUMNS",
    "rmspe",
    "coverage_and_interval_score",
    "crps_gaussian",
    "crps_sample",
    "diagnose",
    "write_table",
    "format_table",
]

TABLE_COLUMNS = ("Method", "RMSPE", "COV90", "IS90", "CRPS", "Run Time")


def _pair(a, b):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("need at least one prediction")
    return a, b


def rmspe(pred, truth) -> float:
    """Root mean squared prediction error."""
    p, z = _pair(pred, truth)
    return float(np.sqrt(np.mean((p - z) ** 2)))


def coverage_and_interval_score(lower, upper, truth, alpha: float = 0.1) -> tuple[float, float]:
    """Empirical coverage of ``[lower, upper]`` and the mean interval score.

    The interval score of one point is
    ``(u - l) + (2/alpha)(l - z)[z < l] + (2/alpha)(z - u)[z > u]``.
    """
    l, z = _pair(lower, truth)
    u, _ = _pair(upper, truth)
    if np.any(l > u):
        raise ValueError("lower bound exceeds upper bound")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    below = z < l
    above = z > u
    cov = float(np.mean(~below & ~above))
    score = (u - l) + (2.0 / alpha) * (l - z) * below + (2.0 / alpha) * (z - u) * above
    return cov, float(np.mean(score))


def crps_gaussian(mu, sigma, z):
    """CRPS of ``Gau(mu, sigma^2)`` at ``z``; ``sigma = 0`` gives ``|z - mu|``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be non-negative")
    mu, sigma, z = np.broadcast_arrays(mu, sigma, z)
    shape = mu.shape
    mu, sigma, z = mu.ravel(), sigma.ravel(), z.ravel()
    out = np.abs(z - mu)
    pos = sigma > 0
    w = (z[pos] - mu[pos]) / sigma[pos]
    out[pos] = sigma[pos] * (w * (2.0 * norm.cdf(w) - 1.0) + 2.0 * norm.pdf(w) - 1.0 / np.sqrt(np.pi))
    return float(out[0]) if shape == () else out.reshape(shape)


def crps_sample(samples, z):
    """Empirical CRPS ``E|X - z| - E|X - X'| / 2`` over each row of ``samples``."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if X.shape[0] != z.shape[0]:
        raise ValueError("one sample row per observation is required")
    m = X.shape[1]
    Xs = np.sort(X, axis=1)
    term1 = np.mean(np.abs(Xs - z[:, None]), axis=1)
    # E|X - X'| from sorted samples: (2 / m^2) sum_i (2i - m - 1) x_(i)
    k = 2.0 * np.arange(1, m + 1) - m - 1
    term2 = (Xs @ k) * 2.0 / m ** 2
    return term1 - 0.5 * term2


@dataclass(frozen=True)
class Diagnostics:
    method: str
    rmspe: float
    cov90: float
    is90: float
    crps: float
    run_time: float

    def __post_init__(self):
        vals = (self.rmspe, self.cov90, self.is90, self.crps, self.run_time)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("diagnostics must be finite")

    def row(self) -> tuple:
        return (self.method, self.rmspe, self.cov90, self.is90, self.crps, self.run_time)


def diagnose(method: str, result, truth, run_time: float = 0.0, alpha: float = 0.1) -> Diagnostics:
    """Score a :class:`~frkpy.engine.PredictiveResult` against held-out values.

    CRPS uses the stored Monte Carlo samples when present, otherwise the
    Gaussian closed form.
    """
    truth = np.asarray(truth, dtype=float)
    cov, isc = coverage_and_interval_score(result.lower, result.upper, truth, alpha)
    if getattr(result, "samples", None) is not None:
        crps = float(np.mean(crps_sample(result.samples, truth)))
    else:
        crps = float(np.mean(crps_gaussian(result.mean, np.sqrt(result.variance), truth)))
    return Diagnostics(method, rmspe(result.mean, truth), cov, isc, crps, float(run_time))


def write_table(rows: Sequence[Diagnostics], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for d in rows:
            w.writerow([d.method, *(repr(float(v)) for v in d.row()[1:])])


def format_table(rows: Sequence[Diagnostics]) -> str:
    """Fixed-width text rendering; run time in seconds."""
    head = f"{'Method':<14}{'RMSPE':>10}{'COV90':>10}{'IS90':>10}{'CRPS':>10}{'Run Time':>12}"
    lines = [head, "-" * len(head)]
    for d in rows:
        lines.append(f"{d.method:<14}{d.rmspe:>10.4f}{d.cov90:>10.4f}{d.is90:>10.4f}"
                     f"{d.crps:>10.4f}{d.run_time:>11.2f}s")
    return "\n".join(lines)
