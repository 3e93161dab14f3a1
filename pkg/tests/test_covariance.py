import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frkpy.basis import BasisSet, BisquareFn, MultiResSpec, build_multires
from frkpy.covariance import (
    Ar1PerResolution, ExpCentroid, MaternParams, NoiseParams, ScaledIdentity, Unstructured,
    correlation_matrix, cov_y, cov_y_matrix, k_matrix, matern, psd_check,
)

from conftest import dense_cz, random_basis, random_psd


def line_basis(m):
    return build_multires(MultiResSpec([(m,)], (0.0,), (1.0,)))


def test_ar1_zero_rho_is_scaled_identity():
    b = line_basis(4)
    np.testing.assert_array_equal(k_matrix(Ar1PerResolution(2.0, 0.0), b), 2.0 * np.eye(4))


def test_ar1_closed_form():
    K = k_matrix(Ar1PerResolution(1.0, 0.5), line_basis(3))
    np.testing.assert_allclose(K, [[1, .5, .25], [.5, 1, .5], [.25, .5, 1]], rtol=0, atol=1e-15)


def test_ar1_blocks_do_not_cross_resolutions():
    b = build_multires(MultiResSpec([(2,), (3,)], (0.0,), (1.0,)))
    K = k_matrix(Ar1PerResolution(1.0, 0.9), b)
    assert np.all(K[:2, 2:] == 0)
    assert K[2, 4] == pytest.approx(0.81)


def test_invalid_models_rejected():
    with pytest.raises(ValueError):
        Ar1PerResolution(1.0, 1.0)
    with pytest.raises(ValueError):
        ExpCentroid(1.0, 0.0)
    with pytest.raises(ValueError):
        Unstructured(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        MaternParams(1.0, 1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), r=st.integers(1, 40), ell=st.floats(0.01, 5.0))
def test_exp_centroid_is_psd(seed, r, ell):
    b = random_basis(np.random.default_rng(seed), r)
    rep = psd_check(k_matrix(ExpCentroid(1.3, ell), b))
    assert rep.ok


def test_scaled_identity():
    np.testing.assert_array_equal(k_matrix(ScaledIdentity(0.7), line_basis(3)), 0.7 * np.eye(3))
    np.testing.assert_array_equal(correlation_matrix(ScaledIdentity(3.0), line_basis(2)), np.eye(2))


def test_cov_y_examples(rng):
    b = random_basis(rng, 6)
    zero = np.zeros((6, 6))
    assert cov_y([0.1, 0.2], [0.5, 0.5], b, zero, NoiseParams(0.3, 1.0)) == 0.0
    K = random_psd(rng, 6)
    s = np.array([0.4, 0.6])
    expected = b.phi(s) @ K @ b.phi(s) + 0.3
    assert cov_y(s, s, b, K, NoiseParams(0.3, 1.0)) == pytest.approx(expected, rel=1e-14)


def test_cov_y_matrix_matches_assembled(rng):
    b = random_basis(rng, 8)
    K = random_psd(rng, 8)
    g = np.linspace(0, 1, 6)
    locs = np.array([[x, y] for x in g for y in g])
    C = cov_y_matrix(b, K, NoiseParams(0.2, 0.1), locs)
    np.testing.assert_allclose(C, dense_cz(b.evaluate(locs), K, 0.2), rtol=1e-13, atol=1e-14)
    i, j = 3, 17
    assert C[i, j] == pytest.approx(cov_y(locs[i], locs[j], b, K, NoiseParams(0.2, 0.1)), rel=1e-13)


def test_psd_check_examples():
    assert psd_check(np.eye(3)) == (True, 1.0)
    rep = psd_check(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert not rep.ok and rep.min_eig == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        psd_check(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 60), r=st.integers(1, 15))
def test_implied_covariance_always_psd(seed, n, r):
    rng = np.random.default_rng(seed)
    b = random_basis(rng, r)
    K = random_psd(rng, r, rank=max(1, r // 2))
    C = dense_cz(b.evaluate(rng.random((n, 2))), K, rng.uniform(0.01, 1.0))
    assert psd_check(C).ok


def test_matern_examples():
    assert matern(0.0, MaternParams(2.5, 0.3, 1.5)) == 2.5
    assert matern(1.0, MaternParams(1.0, 1.0, 0.5)) == pytest.approx(np.exp(-1.0), rel=1e-15)


def _matern_bessel(h, s2, rho, nu):
    x = mpmath.sqrt(2 * nu) * h / rho
    return s2 * 2 ** (1 - nu) / mpmath.gamma(nu) * x ** nu * mpmath.besselk(nu, x)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_matern_matches_bessel_form(nu):
    mpmath.mp.dps = 30
    p = MaternParams(1.7, 0.8, nu)
    h = np.linspace(0.05, 4.0, 10)
    ref = np.array([float(_matern_bessel(mpmath.mpf(x), 1.7, 0.8, nu)) for x in h])
    np.testing.assert_allclose(matern(h, p), ref, rtol=1e-12)


def test_disjoint_supports_give_zero_covariance_overlap_gives_positive():
    centres = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    for ratio, positive in ((0.4, False), (1.5, True)):
        b = BasisSet([BisquareFn([c], ratio * 0.2) for c in centres])
        K = np.diag([1.0, 2.0, 0.5, 1.0, 3.0])
        for a, c in zip(centres[:-1], centres[1:]):
            mid = 0.5 * (a + c)
            vals = [cov_y([a], [c], b, K, NoiseParams()), cov_y([a], [mid], b, K, NoiseParams())]
            if positive:
                assert min(vals) > 0
            else:
                assert vals == [0.0, 0.0]
