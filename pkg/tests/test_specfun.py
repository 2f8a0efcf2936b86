import math

import mpmath
import numpy as np
import pytest
import scipy.special as sc
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import erf_series
from rerorisk.exceptions import DomainError
from rerorisk.specfun import (
    chi_squared_cdf,
    chi_squared_quantile,
    inverse_regularized_gamma_p,
    regularized_gamma_p,
)

shapes = st.floats(min_value=1e-3, max_value=1e5)
probs = st.floats(min_value=1e-12, max_value=1 - 1e-12)


def mp_lower_gamma(a: float, x: float) -> float:
    """P(a, x) from its power series in 50-digit arithmetic."""
    with mpmath.workdps(50):
        a, x = mpmath.mpf(a), mpmath.mpf(x)
        term = total = 1 / a
        k = 0
        while term > total * mpmath.mpf(10) ** -40:
            k += 1
            term *= x / (a + k)
            total += term
        return float(total * mpmath.exp(a * mpmath.log(x) - x - mpmath.loggamma(a)))


def root_is_normal(a: float, gamma: float) -> bool:
    # P(a, x) ~ x**a / Gamma(a + 1) near zero
    return (math.log(gamma) + math.lgamma(a + 1.0)) / a > math.log(1e-300)


class TestRegularizedGammaP:
    def test_lower_limit(self):
        assert regularized_gamma_p(1, 0) == 0.0

    def test_exponential_median(self):
        assert regularized_gamma_p(1, math.log(2)) == pytest.approx(0.5, abs=1e-15)

    def test_half_shape_is_erf(self):
        assert regularized_gamma_p(0.5, 1.0) == pytest.approx(erf_series(1.0), abs=1e-14)
        assert erf_series(1.0) == pytest.approx(0.842701, abs=1e-6)

    def test_scalar_in_scalar_out(self):
        assert isinstance(regularized_gamma_p(2.0, 1.0), float)

    def test_broadcasting(self):
        a = np.array([[0.5], [1.0], [7.0]])
        x = np.linspace(0, 20, 11)
        out = regularized_gamma_p(a, x)
        assert out.shape == (3, 11)
        np.testing.assert_allclose(out, sc.gammainc(a, x), rtol=0, atol=1e-14)

    @pytest.mark.parametrize("a", [1e-3, 0.1, 0.5, 1.0, 3.3, 10.0, 55.5, 1e3, 1e4, 1e5])
    def test_against_scipy(self, a):
        q = np.linspace(1e-6, 1 - 1e-6, 41)
        x = sc.gammaincinv(a, q)
        np.testing.assert_allclose(regularized_gamma_p(a, x), sc.gammainc(a, x), atol=1e-12)

    @pytest.mark.parametrize("a", [1e6, 5e6])
    @pytest.mark.parametrize("z", [-6.0, -2.0, 0.0, 3.0])
    def test_large_shape_against_mpmath(self, a, z):
        # x placed z standard deviations from the mean
        x = a + z * math.sqrt(a)
        ref = mp_lower_gamma(a, x)
        assert regularized_gamma_p(a, x) == pytest.approx(ref, abs=1e-12)

    def test_upper_limit(self):
        assert regularized_gamma_p(3.0, 1e4) == 1.0

    @settings(max_examples=200, deadline=None)
    @given(a=shapes, x1=st.floats(0, 1e6), x2=st.floats(0, 1e6))
    def test_monotone_in_x(self, a, x1, x2):
        lo, hi = sorted((x1, x2))
        assert regularized_gamma_p(a, lo) <= regularized_gamma_p(a, hi)

    @settings(max_examples=200, deadline=None)
    @given(a=shapes, x=st.floats(0, 1e7))
    def test_is_probability(self, a, x):
        p = regularized_gamma_p(a, x)
        assert 0.0 <= p <= 1.0

    @pytest.mark.parametrize(
        "a, x", [(0, 1), (-1, 1), (1, -0.1), (math.nan, 1), (1, math.inf), (math.inf, 1)]
    )
    def test_domain_errors(self, a, x):
        with pytest.raises(DomainError):
            regularized_gamma_p(a, x)

    def test_domain_error_in_array(self):
        with pytest.raises(DomainError):
            regularized_gamma_p(np.array([1.0, 2.0]), np.array([1.0, -1.0]))


class TestInverse:
    def test_exponential_median(self):
        assert inverse_regularized_gamma_p(1, 0.5) == pytest.approx(math.log(2), rel=1e-14)

    def test_exponential_at_one(self):
        assert inverse_regularized_gamma_p(1, -math.expm1(-1)) == pytest.approx(1.0, rel=1e-14)

    def test_erf_inverse(self):
        assert inverse_regularized_gamma_p(0.5, erf_series(1.0)) == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_endpoints_rejected(self, gamma):
        with pytest.raises(DomainError):
            inverse_regularized_gamma_p(2.0, gamma)

    def test_tiny_shape(self):
        x = inverse_regularized_gamma_p(1e-3, 0.5)
        assert x == pytest.approx(sc.gammaincinv(1e-3, 0.5), rel=1e-9)
        assert inverse_regularized_gamma_p(1e-3, 1e-12) == np.finfo(float).tiny

    def test_bad_shape(self):
        with pytest.raises(DomainError):
            inverse_regularized_gamma_p(0.0, 0.5)

    @settings(max_examples=300, deadline=None)
    @given(a=shapes, gamma=probs)
    def test_roundtrip(self, a, gamma):
        assume(root_is_normal(a, gamma))
        x = inverse_regularized_gamma_p(a, gamma)
        assert x >= 0
        assert regularized_gamma_p(a, x) == pytest.approx(gamma, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(a=shapes, g1=probs, g2=probs)
    def test_increasing(self, a, g1, g2):
        lo, hi = sorted((g1, g2))
        assert inverse_regularized_gamma_p(a, lo) <= inverse_regularized_gamma_p(a, hi)

    @pytest.mark.parametrize("a", [0.05, 0.5, 2.0, 30.0, 2e3])
    def test_against_scipy(self, a):
        for gamma in (1e-8, 0.01, 0.3, 0.9, 0.999999):
            assert inverse_regularized_gamma_p(a, gamma) == pytest.approx(
                sc.gammaincinv(a, gamma), rel=1e-9
            )


class TestChiSquared:
    def test_zero(self):
        assert chi_squared_cdf(2, 0) == 0.0

    def test_two_dof_median(self):
        assert chi_squared_cdf(2, 2 * math.log(2)) == pytest.approx(0.5, abs=1e-15)

    def test_one_sigma_coverage(self):
        expected = erf_series(1 / math.sqrt(2))
        assert chi_squared_cdf(1, 1.0) == pytest.approx(expected, abs=1e-14)
        assert expected == pytest.approx(0.682689, abs=1e-6)

    @pytest.mark.parametrize("dof", [0, -2, 1.5])
    def test_bad_dof(self, dof):
        with pytest.raises(DomainError):
            chi_squared_cdf(dof, 1.0)

    @pytest.mark.parametrize("dof", [1, 4, 3072])
    def test_quantile_roundtrip(self, dof):
        for p in (0.05, 0.5, 0.95):
            q = chi_squared_quantile(dof, p)
            assert chi_squared_cdf(dof, q) == pytest.approx(p, abs=1e-12)
