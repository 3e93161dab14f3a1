import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist
from scipy.stats import multivariate_normal

from frkpy.basis import BasisSet, BisquareFn
from frkpy.covariance import MaternParams, NoiseParams, ScaledIdentity, Unstructured, matern
from frkpy.data import SpatialDataset
from frkpy.em import e_step
from frkpy.engine import (
    SingularModelError, SreParams, build_solve, factor_psd, fit_matern_ml, kriging_baseline,
    log_likelihood, match_rows, predict, smw_apply, write_predictions,
)

from conftest import dense_condition, dense_cz, dense_predict_y, random_basis, random_psd


def test_zero_k_gives_plain_diagonal_solve(rng):
    Phi = random_basis(rng, 5).evaluate(rng.random((30, 2)))
    xi = rng.uniform(0.5, 2.0, 30)
    v = rng.standard_normal(30)
    np.testing.assert_array_equal(smw_apply(build_solve(Phi, np.zeros((5, 5)), xi), v), v / xi)


def test_scalar_solve():
    s = build_solve(np.array([[1.0]]), np.array([[3.0]]), 0.5)
    assert smw_apply(s, np.array([2.0]))[0] == pytest.approx(2.0 / 3.5, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 200), r=st.integers(1, 20), low_rank=st.booleans())
def test_smw_matches_dense(seed, n, r, low_rank):
    rng = np.random.default_rng(seed)
    Phi = random_basis(rng, r).evaluate(rng.random((n, 2)))
    K = random_psd(rng, r, rank=max(1, r // 3) if low_rank else None)
    xi = rng.uniform(0.05, 2.0, n)
    v = rng.standard_normal((n, 3))
    x = smw_apply(build_solve(Phi, K, xi), v)
    C = dense_cz(Phi, K, xi)
    assert np.linalg.norm(C @ x - v) / np.linalg.norm(v) <= 1e-8
    logdet = np.linalg.slogdet(C)[1]
    assert build_solve(Phi, K, xi).logdet() == pytest.approx(logdet, rel=1e-10, abs=1e-8)


def test_nonpositive_noise_is_singular(rng):
    with pytest.raises(SingularModelError):
        build_solve(np.eye(3), np.eye(3), 0.0)


def test_factor_psd_handles_rank_deficiency(rng):
    K = random_psd(rng, 6, rank=2)
    L = factor_psd(K)
    np.testing.assert_allclose(L @ L.T, K, atol=1e-12)
    L0 = factor_psd(np.zeros((3, 3)))
    assert np.all(L0 == 0)
    with pytest.raises(ValueError):
        factor_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def _far_basis():
    return BasisSet([BisquareFn([100.0], 1.0)])


def test_loglik_standard_normal_point():
    ds = SpatialDataset([[0.0]], [0.0])
    params = SreParams(np.zeros(0), ScaledIdentity(1.0), NoiseParams(0.4, 0.6))
    assert log_likelihood(ds, _far_basis(), params) == pytest.approx(-0.5 * np.log(2 * np.pi), rel=1e-15)


def _random_problem(rng, n, r, p=2):
    b = random_basis(rng, r)
    locs = rng.random((n, 2))
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    z = rng.standard_normal(n) + X @ np.arange(1.0, p + 1)
    ds = SpatialDataset(locs, z, X)
    params = SreParams(rng.standard_normal(p), Unstructured(random_psd(rng, r)),
                       NoiseParams(rng.uniform(0, 0.5), rng.uniform(0.05, 0.5)))
    return b, ds, params


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 200), r=st.integers(1, 15))
def test_loglik_matches_dense_density(seed, n, r):
    rng = np.random.default_rng(seed)
    b, ds, params = _random_problem(rng, n, r)
    C = dense_cz(b.evaluate(ds.locations), params.k_model.K, params.noise.sigma2_xi)
    ref = multivariate_normal(ds.X @ params.beta, C).logpdf(ds.z)
    assert log_likelihood(ds, b, params) == pytest.approx(ref, abs=1e-8)


def test_loglik_permutation_invariant(rng):
    b, ds, params = _random_problem(rng, 80, 10)
    perm = rng.permutation(80)
    ds2 = SpatialDataset(ds.locations[perm], ds.z[perm], ds.X[perm])
    assert log_likelihood(ds2, b, params) == pytest.approx(log_likelihood(ds, b, params), rel=1e-12)


def test_no_random_effects_gives_fixed_mean_and_zero_variance(rng):
    b, ds, _ = _random_problem(rng, 20, 4)
    params = SreParams(np.array([1.0, -2.0]), Unstructured(np.zeros((4, 4))), NoiseParams(0.0, 0.3))
    t = rng.random((6, 2))
    X0 = np.column_stack([np.ones(6), rng.standard_normal(6)])
    res = predict(ds, b, params, t, target_covariates=X0)
    np.testing.assert_allclose(res.mean, X0 @ params.beta, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(res.variance, 0.0)


def test_scalar_conditioning():
    b = BasisSet([BisquareFn([0.0], 10.0)])
    k, e, z = 2.0, 0.5, 1.7
    ds = SpatialDataset([[0.0]], [z])
    res = predict(ds, b, SreParams(np.zeros(0), Unstructured(np.array([[k]])), NoiseParams(0.0, e)), [[0.0]])
    assert res.mean[0] == pytest.approx(k * z / (k + e), rel=1e-14)
    assert res.variance[0] == pytest.approx(k - k * k / (k + e), rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 200), r=st.integers(1, 15))
def test_predict_matches_dense_conditioning(seed, n, r):
    rng = np.random.default_rng(seed)
    b, ds, params = _random_problem(rng, n, r)
    k = min(n, 4)
    t = np.vstack([rng.random((5, 2)), ds.locations[:k]])
    X0 = np.column_stack([np.ones(5 + k), rng.standard_normal(5 + k)])
    res = predict(ds, b, params, t, target_covariates=X0)
    mean, var = dense_predict_y(b, params.k_model.K, params.noise.sigma2_delta, params.noise.sigma2_eps,
                                ds.locations, ds.z, ds.X, params.beta, t, X0)
    np.testing.assert_allclose(res.mean, mean, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(res.variance, var, rtol=1e-8, atol=1e-10)
    assert np.all(res.lower <= res.mean) and np.all(res.mean <= res.upper)


def test_duplicate_data_coordinates_share_one_nugget(rng):
    b = random_basis(rng, 5)
    locs = np.vstack([rng.random((10, 2)), [[0.5, 0.5], [0.5, 0.5]]])
    ds = SpatialDataset(locs, rng.standard_normal(12))
    assert [m.tolist() for m in match_rows(ds.locations, np.array([[0.5, 0.5], [0.1, 0.1]]))] == [[10], []]
    params = SreParams(np.zeros(0), Unstructured(random_psd(rng, 5)), NoiseParams(0.3, 0.2))
    res = predict(ds, b, params, [[0.5, 0.5]])
    mean, var = dense_predict_y(b, params.k_model.K, 0.3, 0.2, locs, ds.z, None, np.zeros(0), np.array([[0.5, 0.5]]))
    np.testing.assert_allclose([res.mean[0], res.variance[0]], [mean[0], var[0]], rtol=1e-10)
    assert res.variance[0] > 0


def test_interpolation_limit(rng):
    b = random_basis(rng, 6)
    ds = SpatialDataset(rng.random((15, 2)), rng.standard_normal(15))
    params = SreParams(np.zeros(0), Unstructured(random_psd(rng, 6)), NoiseParams(0.5, 1e-10))
    res = predict(ds, b, params, ds.locations[:5])
    np.testing.assert_allclose(res.mean, ds.z[:5], atol=1e-7)
    assert np.all(res.variance < 1e-8)


def test_covariates_required_at_targets(rng):
    b, ds, params = _random_problem(rng, 10, 3)
    with pytest.raises(ValueError, match="covariates"):
        predict(ds, b, params, [[0.1, 0.2]])


def test_posterior_moment_examples():
    no_info = SpatialDataset([[0.0]], [3.0])
    mu, S = e_step(no_info, _far_basis(), SreParams(np.zeros(0), ScaledIdentity(1.0), NoiseParams(0, 1)))
    assert mu[0] == 0.0 and S[0, 0] == 1.0
    scalar = SpatialDataset([[100.0]], [2.0])
    mu, S = e_step(scalar, _far_basis(), SreParams(np.zeros(0), ScaledIdentity(1.0), NoiseParams(0, 1)))
    assert S[0, 0] == pytest.approx(0.5, rel=1e-15) and mu[0] == pytest.approx(1.0, rel=1e-15)


def test_posterior_moments_match_dense(rng):
    b, ds, params = _random_problem(rng, 40, 6)
    mu, S = e_step(ds, b, params)
    Phi = b.evaluate(ds.locations).toarray()
    K = params.k_model.K
    C = dense_cz(Phi, K, params.noise.sigma2_xi)
    mean, _ = dense_condition(np.zeros(6), ds.X @ params.beta, K, K @ Phi.T, C, ds.z)
    np.testing.assert_allclose(mu, mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(S, K - K @ Phi.T @ np.linalg.solve(C, Phi @ K), atol=1e-10)


def test_kriging_baseline_single_point():
    p = MaternParams(1.3, 0.4, 1.5)
    ds = SpatialDataset([[0.0, 0.0]], [2.0])
    res = kriging_baseline(ds, p, 0.2, [[0.3, 0.4]])
    assert res.mean[0] == pytest.approx(matern(0.5, p) / (1.3 + 0.2) * 2.0, rel=1e-14)


def test_kriging_baseline_matches_dense(rng):
    p = MaternParams(0.8, 0.3, 2.5)
    locs = rng.random((60, 2))
    ds = SpatialDataset(locs, rng.standard_normal(60))
    t = rng.random((7, 2))
    res = kriging_baseline(ds, p, 0.1, t)
    C = matern(cdist(locs, locs), p) + 0.1 * np.eye(60)
    mean, var = dense_condition(np.zeros(7), np.zeros(60), matern(cdist(t, t), p), matern(cdist(t, locs), p), C, ds.z)
    np.testing.assert_allclose(res.mean, mean, rtol=1e-10)
    np.testing.assert_allclose(res.variance, var, rtol=1e-10)
    with pytest.raises(ValueError):
        kriging_baseline(ds, p, 0.1, t, max_n=10)


def test_matern_ml_beats_truth(rng):
    truth = MaternParams(1.0, 0.2, 1.5)
    locs = rng.random((300, 2))
    C = matern(cdist(locs, locs), truth) + 0.1 * np.eye(300)
    z = np.linalg.cholesky(C) @ rng.standard_normal(300)
    ds = SpatialDataset(locs, z)
    fit, e2 = fit_matern_ml(ds, 1.5)
    fitted = multivariate_normal(np.zeros(300), matern(cdist(locs, locs), fit) + e2 * np.eye(300)).logpdf(z)
    assert fitted >= multivariate_normal(np.zeros(300), C).logpdf(z) - 1e-6
    assert 0.05 < fit.rho < 0.8


def test_write_predictions(tmp_path, rng):
    b, ds, params = _random_problem(rng, 20, 3, p=1)
    res = predict(ds, b, params, rng.random((4, 2)), target_covariates=np.ones((4, 1)))
    write_predictions(res, tmp_path / "p.csv", ["x", "y"])
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "x,y,mean,se,lower,upper" and len(lines) == 5
    back = np.loadtxt(tmp_path / "p.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back[:, 2], res.mean)
