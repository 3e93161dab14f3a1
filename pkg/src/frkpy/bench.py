"""Wall-time scaling of low-rank versus dense prediction.

Each run simulates ``n`` observations on the unit square from a fixed
``r``-function bisquare basis, then times the full prediction path (design
matrix, factorisation, predictions at a fixed target set). The dense path
builds and Cholesky-factors the ``n x n`` covariance and is skipped above
``dense_max``.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .basis import BasisSet, MultiResSpec, build_multires
from .covariance import ExpCentroid, NoiseParams, k_matrix
from .engine import SreParams, predict
from .simulate import simulate_sre, uniform_locations

__all__ = ["BenchRow", "bench_basis", "run_bench", "loglog_slope", "write_bench", "format_bench"]


@dataclass(frozen=True)
class BenchRow:
    n: int
    r: int
    smw_seconds: float
    dense_seconds: float  # nan when skipped


def bench_basis(r: int) -> BasisSet:
    """Single-resolution square grid with ``round(sqrt(r))**2`` functions."""
    m = max(1, int(round(math.sqrt(r))))
    return build_multires(MultiResSpec([(m, m)], (0.0, 0.0), (1.0, 1.0)))


def _dense_predict(basis, K, noise, locs, z, targets):
    Phi = basis.evaluate(locs).toarray()
    C = Phi @ K @ Phi.T
    C[np.diag_indices_from(C)] += noise.sigma2_xi
    cf = linalg.cho_factor(C, lower=True)
    P0 = basis.evaluate(targets).toarray()
    c0 = P0 @ K @ Phi.T
    mean = c0 @ linalg.cho_solve(cf, z)
    var = np.einsum("ij,jk,ik->i", P0, K, P0) + noise.sigma2_delta
    var -= np.einsum("ij,ji->i", c0, linalg.cho_solve(cf, c0.T))
    return mean, var


def _best_of(fn, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(
    sizes: Sequence[int] = (1_000, 10_000, 100_000),
    r: int = 100,
    n_targets: int = 1000,
    dense_max: int = 4000,
    repeats: int = 3,
    seed: int = 0,
) -> list[BenchRow]:
    """Best-of-``repeats`` timings for each ``n`` in ``sizes``."""
    basis = bench_basis(r)
    params = SreParams(np.zeros(0), ExpCentroid(1.0, 0.3), NoiseParams(0.05, 0.2))
    K = k_matrix(params.k_model, basis)
    rng = np.random.default_rng(seed)
    targets = uniform_locations(n_targets, (0, 0), (1, 1), rng)
    rows = []
    for n in sizes:
        sim = simulate_sre(basis, params, uniform_locations(int(n), (0, 0), (1, 1), rng), seed=rng)
        ds = sim.data
        t_smw = _best_of(lambda: predict(ds, basis, params, targets), repeats)
        t_dense = math.nan
        if n <= dense_max:
            t_dense = _best_of(
                lambda: _dense_predict(basis, K, params.noise, ds.locations, ds.z, targets), repeats
            )
        rows.append(BenchRow(int(n), basis.r, t_smw, t_dense))
    return rows


def loglog_slope(n, seconds) -> float:
    """Least-squares slope of ``log(seconds)`` against ``log(n)``."""
    n = np.asarray(n, dtype=float)
    t = np.asarray(seconds, dtype=float)
    if n.size < 2:
        raise ValueError("need at least two sizes")
    return float(np.polyfit(np.log(n), np.log(t), 1)[0])


def write_bench(rows: Sequence[BenchRow], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "r", "smw_seconds", "dense_seconds"])
        for b in rows:
            w.writerow([b.n, b.r, repr(b.smw_seconds), repr(b.dense_seconds)])


def format_bench(rows: Sequence[BenchRow]) -> str:
    lines = [f"{'n':>9}{'r':>6}{'SMW (s)':>12}{'dense (s)':>12}"]
    for b in rows:
        dense = "skipped" if math.isnan(b.dense_seconds) else f"{b.dense_seconds:.4f}"
        lines.append(f"{b.n:>9}{b.r:>6}{b.smw_seconds:>12.4f}{dense:>12}")
    if len(rows) >= 2:
        slope = loglog_slope([b.n for b in rows], [b.smw_seconds for b in rows])
        lines.append(f"log-log slope (SMW): {slope:.3f}")
    return "\n".join(lines)
