"""Shared builders and dense reference computations for the test suite."""
from __future__ import annotations

import numpy as np
import pytest
from scipy import linalg

from frkpy.basis import BasisSet, BisquareFn


def random_basis(rng: np.random.Generator, r: int, d: int = 2, lo: float = 0.0, hi: float = 1.0) -> BasisSet:
    """``r`` bisquares with random centres in the box and apertures wide enough to overlap."""
    centers = rng.uniform(lo, hi, size=(r, d))
    apertures = rng.uniform(0.3, 0.8, size=r) * (hi - lo)
    return BasisSet([BisquareFn(c, a) for c, a in zip(centers, apertures)])


def random_psd(rng: np.random.Generator, r: int, rank: int | None = None, scale: float = 1.0) -> np.ndarray:
    W = rng.standard_normal((r, r if rank is None else rank))
    return scale * (W @ W.T) / W.shape[1]


def dense_cz(Phi, K, xi) -> np.ndarray:
    P = Phi.toarray() if hasattr(Phi, "toarray") else np.asarray(Phi)
    C = P @ K @ P.T
    C[np.diag_indices_from(C)] += xi
    return C


def dense_condition(mean_t, mean_d, C_tt, C_td, C_dd, z):
    """Gaussian conditioning of targets on data, by plain dense solves."""
    A = linalg.solve(C_dd, C_td.T, assume_a="pos")
    mean = mean_t + A.T @ (z - mean_d)
    cov = C_tt - C_td @ A
    return mean, np.diag(cov)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_predict_y(basis, K, delta, eps, locs, z, X, beta, targets, X0=None):
    """Mean and variance of ``Y(targets) | Z`` built from full covariance matrices.

    A target shares its nugget with the first data row at bitwise-equal
    coordinates.
    """
    Phi = basis.evaluate(locs).toarray()
    P0 = basis.evaluate(targets).toarray()
    C_dd = Phi @ K @ Phi.T + (delta + eps) * np.eye(len(z))
    C_td = P0 @ K @ Phi.T
    C_tt = P0 @ K @ P0.T + delta * np.eye(len(targets))
    for j, t in enumerate(targets):
        hits = np.nonzero(np.all(locs == t, axis=1))[0]
        if hits.size:
            C_td[j, hits[0]] += delta
    mean_d = X @ beta if X is not None else np.zeros(len(z))
    mean_t = X0 @ beta if X0 is not None else np.zeros(len(targets))
    return dense_condition(mean_t, mean_d, C_tt, C_td, C_dd, z)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Context manager factory recording one PASS/FAIL line per acceptance criterion."""
    from contextlib import contextmanager

    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    @contextmanager
    def record(number: int, title: str):
        detail = {}
        try:
            yield detail
        except BaseException as exc:
            msg = " ".join(str(exc).split())[:160]
            lines.append((number, f"criterion {number:>2} FAIL  {title}: {msg}"))
            print(lines[-1][1])
            raise
        extra = detail.get("info", "")
        lines.append((number, f"criterion {number:>2} PASS  {title}" + (f" ({extra})" if extra else "")))
        print(lines[-1][1])

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
