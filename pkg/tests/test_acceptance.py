"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line; the lines are also collected in
the ``acceptance criteria`` section of the pytest terminal summary.
"""
import time

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from frkpy.basis import MultiResSpec, Resolution, build_multires
from frkpy.bench import format_bench, loglog_slope, run_bench
from frkpy.bivariate import BivariateDataset, BivariateModel, cokrige
from frkpy.cli import run_pipeline, validate_config
from frkpy.covariance import ExpCentroid, NoiseParams, Unstructured, cov_y
from frkpy.data import SpatialDataset
from frkpy.diagnostics import coverage_and_interval_score, crps_gaussian, rmspe
from frkpy.dynamic import kalman_smoother
from frkpy.em import EmConfig, fit_em, initial_params
from frkpy.engine import SreParams, build_solve, predict, smw_apply
from frkpy.simulate import simulate_sre, uniform_locations
from frkpy.transgauss import McConfig, bc_forward, bc_inverse, predict_trans

from conftest import dense_cz, dense_predict_y, random_basis, random_psd
from test_dynamic import batch_oracle, random_model, simulate_slices


def test_c01_smw_dense_equivalence(criterion):
    with criterion(1, "SMW solve equals dense solve on 50 instances") as rep:
        rng = np.random.default_rng(101)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(50):
            n, r = int(rng.integers(1, 501)), int(rng.integers(1, 51))
            Phi = random_basis(rng, r).evaluate(rng.random((n, 2)))
            K = random_psd(rng, r, rank=int(rng.integers(1, r + 1)))
            xi = rng.uniform(0.01, 2.0, n)
            v = rng.standard_normal(n)
            x = smw_apply(build_solve(Phi, K, xi), v)
            worst = max(worst, np.linalg.norm(dense_cz(Phi, K, xi) @ x - v) / np.linalg.norm(v))
        elapsed = time.perf_counter() - t0
        rep["info"] = f"max residual {worst:.1e}, {elapsed:.1f}s"
        assert worst <= 1e-8
        assert elapsed < 30


def test_c02_prediction_oracle(criterion):
    with criterion(2, "predict equals dense Gaussian conditioning on 50 instances") as rep:
        rng = np.random.default_rng(202)
        worst = 0.0
        for _ in range(50):
            n, r = int(rng.integers(1, 201)), int(rng.integers(1, 21))
            b = random_basis(rng, r)
            locs = rng.random((n, 2))
            X = np.column_stack([np.ones(n), rng.standard_normal(n)])
            ds = SpatialDataset(locs, rng.standard_normal(n), X)
            K = random_psd(rng, r)
            delta, eps = rng.uniform(0, 0.5), rng.uniform(0.01, 0.5)
            params = SreParams(rng.standard_normal(2), Unstructured(K), NoiseParams(delta, eps))
            t = np.vstack([rng.random((6, 2)), locs[: min(n, 3)]])
            X0 = np.column_stack([np.ones(len(t)), rng.standard_normal(len(t))])
            res = predict(ds, b, params, t, target_covariates=X0)
            mean, var = dense_predict_y(b, K, delta, eps, locs, ds.z, X, params.beta, t, X0)
            for got, ref in ((res.mean, mean), (res.variance, var)):
                worst = max(worst, np.abs(got - ref).max() / np.abs(ref).max())
        rep["info"] = f"max relative error {worst:.1e}"
        assert worst <= 1e-8


def test_c03_em_monotone_and_recovers_noise(criterion):
    with criterion(3, "E-M monotone, noise variance recovered in >= 8/10 seeds") as rep:
        basis = build_multires(MultiResSpec([(10, 5)], (0, 0), (2, 1)))
        assert basis.r == 50
        truth = SreParams(np.array([2.0]), ExpCentroid(1.0, 0.4), NoiseParams(0.05, 0.2))
        hits, slowest, worst_drop = 0, 0.0, 0.0
        for seed in range(10):
            rng = np.random.default_rng(seed)
            locs = uniform_locations(2000, (0, 0), (2, 1), rng)
            ds = simulate_sre(basis, truth, locs, seed=rng, covariates=np.ones((2000, 1))).data
            init = initial_params(ds, basis, ExpCentroid(1.0, 0.3), sigma2_delta=0.05)
            t0 = time.perf_counter()
            fit = fit_em(ds, basis, init, EmConfig())
            slowest = max(slowest, time.perf_counter() - t0)
            worst_drop = max(worst_drop, -np.diff(fit.loglik_trace).min())
            hits += abs(fit.params.noise.sigma2_eps / 0.2 - 1) <= 0.2
        rep["info"] = f"{hits}/10 within 20%, slowest fit {slowest:.1f}s, worst step {-worst_drop:.1e}"
        assert worst_drop <= 1e-9
        assert hits >= 8
        assert slowest < 60


def test_c04_scaling_contract(criterion):
    with criterion(4, "prediction time slope over n = 1e3, 1e4, 1e5 at r = 100") as rep:
        t0 = time.perf_counter()
        rows = run_bench((1_000, 10_000, 100_000), r=100, n_targets=1000, dense_max=4000, repeats=3)
        total = time.perf_counter() - t0
        slope = loglog_slope([b.n for b in rows], [b.smw_seconds for b in rows])
        print(format_bench(rows))
        rep["info"] = f"slope {slope:.2f}, {total:.0f}s"
        assert rows[0].r == 100
        assert slope <= 1.3
        assert total < 600


def test_c05_coverage_calibration(criterion, tmp_path):
    with criterion(5, "simulate-fit-predict-validate COV90 in [0.85, 0.95]") as rep:
        cfg = validate_config({"seed": 0, "sim_n": 8000, "sim_test_fraction": 0.5,
                               "sigma2_eps": 0.2, "free_sigma2_eps": False, "free_sigma2_delta": True})
        for cmd in ("simulate", "fit", "predict", "validate"):
            status, _ = run_pipeline(cmd, cfg, tmp_path)
            assert status == 0, cmd
        header, row = (tmp_path / "diagnostics.csv").read_text().splitlines()[:2]
        values = dict(zip(header.split(","), row.split(",")))
        n_test = len((tmp_path / "test.csv").read_text().splitlines()) - 1
        cov = float(values["COV90"])
        rep["info"] = f"COV90 {cov:.4f} on n_test = {n_test}"
        assert n_test == 4000
        assert 0.85 <= cov <= 0.95


def test_c06_overlap_artefact(criterion):
    with criterion(6, "disjoint supports give zero covariance, ratio 1.5 gives positive") as rep:
        rng = np.random.default_rng(6)
        spec = dict(lower=(0.0, 0.0), upper=(1.0, 1.0))
        narrow = build_multires(MultiResSpec([Resolution((4, 4), 0.45)], **spec))
        wide = build_multires(MultiResSpec([Resolution((4, 4), 1.5)], **spec))
        K = np.diag(rng.uniform(0.5, 2.0, 16))
        nz = NoiseParams()
        checked = 0
        pts = rng.random((400, 2))
        P = narrow.evaluate(pts).toarray() > 0
        for i in range(0, 400, 7):
            for j in range(1, 400, 11):
                if P[i].any() and P[j].any() and not (P[i] & P[j]).any():
                    assert cov_y(pts[i], pts[j], narrow, K, nz) == 0.0
                    checked += 1
        c = wide.centers
        mids = 0
        for a in range(16):
            for b in range(16):
                if np.isclose(np.linalg.norm(c[a] - c[b]), 0.25):
                    m = 0.5 * (c[a] + c[b])
                    assert cov_y(c[a], m, wide, K, nz) > 0 and cov_y(m, c[b], wide, K, nz) > 0
                    assert cov_y(c[a], c[b], narrow, K, nz) == 0.0
                    mids += 1
        rep["info"] = f"{checked} disjoint pairs, {mids} adjacent-centre pairs"
        assert checked > 100 and mids == 48


def test_c07_kalman_batch_equivalence(criterion):
    with criterion(7, "Kalman filter and smoother equal batch conditioning") as rep:
        worst = 0.0
        for seed in range(10):
            rng = np.random.default_rng(700 + seed)
            m = random_model(rng)
            data, _, _ = simulate_slices(m, rng, 5, n_max=30)
            ks = kalman_smoother(m, data)
            mean, cov = batch_oracle(m, data)
            worst = max(worst, np.abs(ks.filt_mean[-1] - mean[-4:]).max(),
                        np.abs(ks.smooth_mean.ravel() - mean).max(),
                        max(np.abs(ks.smooth_cov[t] - cov[4 * t:4 * t + 4, 4 * t:4 * t + 4]).max() for t in range(5)))
        rep["info"] = f"max abs error {worst:.1e}"
        assert worst <= 1e-8


def test_c08_bivariate_variance_reduction(criterion):
    with criterion(8, "cokriging never worse than univariate; equal when A = 0") as rep:
        worst_gap, worst_eq = -np.inf, 0.0
        for seed in range(10):
            rng = np.random.default_rng(800 + seed)
            b1, b2 = random_basis(rng, 6), random_basis(rng, 5)
            K11, K21 = random_psd(rng, 6), random_psd(rng, 5) + 0.05 * np.eye(5)
            d1 = SpatialDataset(rng.random((40, 2)), rng.standard_normal(40))
            d2 = SpatialDataset(rng.random((20, 2)), rng.standard_normal(20))
            t = np.vstack([rng.random((15, 2)), d2.locations[:3]])
            for A in (rng.standard_normal((5, 6)), np.zeros((5, 6))):
                m = BivariateModel(b1, b2, K11, A, K21, 0.05, 0.1, 0.2, 0.3)
                both = cokrige(m, BivariateDataset(d1, d2), 2, t).variance
                alone = cokrige(m, BivariateDataset(None, d2), 2, t).variance
                if np.any(A):
                    worst_gap = max(worst_gap, (both - alone).max())
                else:
                    worst_eq = max(worst_eq, (np.abs(both - alone) / alone).max())
        rep["info"] = f"max(var_both - var_alone) {worst_gap:.1e}, A = 0 relative gap {worst_eq:.1e}"
        assert worst_gap <= 1e-10
        assert worst_eq <= 1e-12


def test_c09_metric_oracles(criterion):
    with criterion(9, "RMSPE, COV90, IS90 brute force; CRPS quadrature") as rep:
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(1, 100))
            p, z = rng.standard_normal(n), rng.standard_normal(n)
            l = p - rng.exponential(size=n)
            u = p + rng.exponential(size=n)
            assert rmspe(p, z) == np.sqrt(np.mean((p - z) ** 2))
            cov, isc = coverage_and_interval_score(l, u, z, 0.1)
            assert cov == np.mean((z >= l) & (z <= u))
            brute = np.mean([(ui - li) + 20 * max(li - zi, 0) + 20 * max(zi - ui, 0) for li, ui, zi in zip(l, u, z)])
            assert isc == pytest.approx(brute, rel=1e-13)
        worst = 0.0
        for mu, sd, zz in rng.normal(size=(25, 3)) * [1, 0, 2] + [0, 1, 0] + rng.uniform(0, 2, (25, 3)) * [0, 1, 0]:
            quad = (integrate.quad(lambda x: norm.cdf(x, mu, sd) ** 2, -np.inf, zz, epsabs=1e-12)[0]
                    + integrate.quad(lambda x: norm.sf(x, mu, sd) ** 2, zz, np.inf, epsabs=1e-12)[0])
            worst = max(worst, abs(crps_gaussian(mu, sd, zz) - quad))
        at_zero = crps_gaussian(0.0, 1.0, 0.0)
        rep["info"] = f"CRPS(0; 0, 1) = {at_zero:.6f}, max quadrature gap {worst:.1e}"
        assert worst <= 1e-6
        assert abs(at_zero - 0.233695) < 5e-7


def test_c10_boxcox(criterion):
    with criterion(10, "Box-Cox round trip and lambda = 1 back-transform") as rep:
        y = np.geomspace(0.01, 100, 200)
        worst = max(np.abs(bc_inverse(bc_forward(y, lam), lam) - y).max() / y.max()
                    for lam in np.linspace(-1, 2, 31))
        assert worst <= 1e-12
        rng = np.random.default_rng(10)
        b = build_multires(MultiResSpec([(3, 3)], (0, 0), (1, 1)))
        params = SreParams(np.array([3.0]), ExpCentroid(0.3, 0.3), NoiseParams(0.02, 0.05))
        locs = rng.random((200, 2))
        gauss = simulate_sre(b, params, locs, seed=rng, covariates=np.ones((200, 1))).data
        positive = SpatialDataset(locs, gauss.z + 1.0, gauss.covariates)
        t = rng.random((20, 2))
        X0 = np.ones((20, 1))
        tr = predict_trans(positive, b, params, 1.0, t, McConfig(4000, 10), target_covariates=X0)
        g = predict(gauss, b, params, t, target_covariates=X0)
        z = np.abs(tr.mean - (g.mean + 1.0)) / tr.mc_se
        rep["info"] = f"round trip {worst:.1e}, max |mean gap| {z.max():.2f} MC s.e."
        assert np.all(z <= 3)
