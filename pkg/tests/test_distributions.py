import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fundingiv.distributions import chi2_cdf, chi2_sf, f_sf, t_ppf, t_sf, t_two_sided


def _t_pdf(x, v):
    c = math.gamma((v + 1) / 2) / (math.sqrt(v * math.pi) * math.gamma(v / 2))
    return c * (1 + x * x / v) ** (-(v + 1) / 2)


def _f_pdf(x, a, b):
    log_beta = math.lgamma(a / 2) + math.lgamma(b / 2) - math.lgamma((a + b) / 2)
    return math.exp((a / 2) * math.log(a / b) + (a / 2 - 1) * math.log(x)
                    - ((a + b) / 2) * math.log1p(a * x / b) - log_beta)


@pytest.mark.parametrize("x", [0.0, 0.5, 1.0, 3.0, 10.0, 40.0])
def test_chi2_two_df_closed_form(x):
    assert chi2_sf(x, 2) == pytest.approx(math.exp(-x / 2), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("x", [0.1, 1.0, 3.84145882, 9.0])
def test_chi2_one_df_matches_normal_tail(x):
    assert chi2_sf(x, 1) == pytest.approx(math.erfc(math.sqrt(x / 2)), rel=1e-12)


def test_chi2_critical_values():
    assert chi2_sf(3.841458820694124, 1) == pytest.approx(0.05, abs=1e-12)
    assert chi2_sf(7.814727903251178, 3) == pytest.approx(0.05, abs=1e-12)


@pytest.mark.parametrize("x,v", [(0.5, 3), (2.0, 10), (1.3, 1), (4.0, 50)])
def test_t_sf_against_quadrature(x, v):
    tail, _ = integrate.quad(_t_pdf, x, np.inf, args=(v,))
    assert t_sf(x, v) == pytest.approx(tail, rel=1e-8)


@pytest.mark.parametrize("x,a,b", [(1.0, 3, 20), (2.5, 1, 100), (0.4, 5, 7), (13.91, 3, 500)])
def test_f_sf_against_quadrature(x, a, b):
    tail, _ = integrate.quad(_f_pdf, x, np.inf, args=(a, b), limit=200)
    assert f_sf(x, a, b) == pytest.approx(tail, rel=1e-7)


def test_f_with_one_numerator_df_is_squared_t():
    for t, v in [(1.2, 5), (2.0, 30), (3.3, 200)]:
        assert f_sf(t * t, 1, v) == pytest.approx(t_two_sided(t, v), rel=1e-12)


def test_edge_values():
    assert chi2_sf(0.0, 3) == 1.0
    assert chi2_sf(math.inf, 3) == 0.0
    assert chi2_cdf(0.0, 3) == 0.0
    assert f_sf(0.0, 2, 10) == 1.0
    assert t_two_sided(0.0, 7) == pytest.approx(1.0)


@given(q=st.floats(0.01, 0.99), v=st.integers(1, 500))
def test_t_ppf_inverts_sf(q, v):
    x = t_ppf(q, v)
    assert 1.0 - t_sf(x, v) == pytest.approx(q, abs=1e-9)


@given(x=st.floats(0, 200), v=st.integers(1, 30))
def test_chi2_sf_cdf_complement(x, v):
    assert chi2_sf(x, v) + chi2_cdf(x, v) == pytest.approx(1.0, abs=1e-12)
