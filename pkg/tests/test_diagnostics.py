import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from conftest import make_iv_data
from fundingiv.diagnostics import (
    F_CAP,
    STOCK_YOGO,
    cragg_donald_f,
    dwh_endogeneity_test,
    first_stage_robust_f,
    hansen_j,
    kp_rk_lm,
    min_eigenvalue_stat,
    quad_form,
    run_diagnostics,
    stock_yogo_verdict,
)
from fundingiv.estimator import DesignMatrix, EstimationError


def _ols(y, X):
    return np.linalg.lstsq(X, y, rcond=None)[0]


def _with_const(*blocks):
    n = blocks[0].shape[0]
    return np.column_stack([*blocks, np.ones(n)])


# ---------------------------------------------------------------------------
# endogeneity


def test_dwh_matches_manual_control_function(iv_data):
    y, d, Z, X = iv_data
    n = len(y)
    W = _with_const(Z, X)
    v = d - W @ _ols(d, W)
    R = np.column_stack([d, X, np.ones(n), v])
    b = _ols(y, R)
    e = y - R @ b
    bread = np.linalg.inv(R.T @ R)
    meat = (R * e[:, None] ** 2).T @ R
    V0 = bread @ meat @ bread
    chi2 = b[-1] ** 2 / V0[-1, -1]
    k = R.shape[1]
    f = b[-1] ** 2 / (V0[-1, -1] * n / (n - k))
    res = dwh_endogeneity_test(y, d, Z, X)
    assert res.chi2.statistic == pytest.approx(chi2, rel=1e-9)
    assert res.f.statistic == pytest.approx(f, rel=1e-9)
    assert res.f.df == (1, n - k)
    assert res.coefficient == pytest.approx(b[-1], rel=1e-9)


def test_dwh_detects_strong_endogeneity():
    y, d, Z, X = make_iv_data(n=3000, rho=0.8, seed=3)
    assert dwh_endogeneity_test(y, d, Z, X).chi2.pvalue < 1e-6


# ---------------------------------------------------------------------------
# over-identification


def _gmm_j_bruteforce(y, d, Z, X):
    """Two-step GMM by numerical minimisation of the quadratic criterion."""
    n = len(y)
    W = _with_const(Z, X)
    D = _with_const(d[:, None], X)
    Pw = W @ np.linalg.pinv(W)
    Dh = Pw @ D
    b1 = _ols(y, Dh)
    e1 = y - D @ b1
    S = (W * e1[:, None] ** 2).T @ W / n
    Sinv = np.linalg.inv(S)

    def crit(b):
        g = W.T @ (y - D @ b) / n
        return n * g @ Sinv @ g

    def grad(b):
        g = W.T @ (y - D @ b) / n
        return -2.0 * n * (W.T @ D / n).T @ Sinv @ g

    sol = optimize.minimize(crit, b1, jac=grad, method="BFGS", options={"gtol": 1e-12, "maxiter": 10_000})
    return sol.fun


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hansen_j_matches_numerical_gmm(seed):
    y, d, Z, X = make_iv_data(n=400, seed=seed)
    j = hansen_j(y, d, Z, X)
    assert j.statistic == pytest.approx(_gmm_j_bruteforce(y, d, Z, X), rel=1e-6)
    assert j.df == (2,)


def test_hansen_j_just_identified_is_undefined(iv_data):
    y, d, Z, X = iv_data
    with pytest.raises(EstimationError, match="df = 0"):
        hansen_j(y, d, Z[:, :1], X)


def test_hansen_j_detects_invalid_instrument():
    y, d, Z, X = make_iv_data(n=4000, seed=5)
    y = y + 0.5 * Z[:, 0]
    assert hansen_j(y, d, Z, X).pvalue < 1e-4


# ---------------------------------------------------------------------------
# identification strength


def test_kp_rk_lm_matches_auxiliary_regression(iv_data):
    y, d, Z, X = iv_data
    n = len(d)
    Xc = _with_const(X)
    dt = d - Xc @ _ols(d, Xc)
    Zt = Z - Xc @ np.linalg.lstsq(Xc, Z, rcond=None)[0]
    A = Zt * dt[:, None]
    ones = np.ones(n)
    r = ones - A @ _ols(ones, A)
    lm = n - r @ r
    res = kp_rk_lm(d, Z, X)
    assert res.statistic == pytest.approx(lm, rel=1e-9)
    assert res.df == (3,)


def test_cragg_donald_equals_classical_f_and_min_eigenvalue(iv_data):
    y, d, Z, X = iv_data
    n, L = Z.shape
    Xc = _with_const(X)
    full = np.column_stack([Z, Xc])
    rr = d - Xc @ _ols(d, Xc)
    ru = d - full @ _ols(d, full)
    f = ((rr @ rr - ru @ ru) / L) / (ru @ ru / (n - full.shape[1]))
    cd = cragg_donald_f(d, Z, X)
    assert cd == pytest.approx(f, rel=1e-10)
    assert min_eigenvalue_stat(d, Z, X) == pytest.approx(cd, rel=1e-10)
    assert first_stage_robust_f(d, Z, X, cov_type="classical").statistic == pytest.approx(cd, rel=1e-9)


def test_robust_f_is_wald_over_l(iv_data):
    y, d, Z, X = iv_data
    n, L = Z.shape
    W = _with_const(Z, X)
    b = _ols(d, W)
    e = d - W @ b
    bread = np.linalg.inv(W.T @ W)
    V = bread @ ((W * e[:, None] ** 2).T @ W) @ bread * n / (n - W.shape[1])
    wald = b[:L] @ np.linalg.solve(V[:L, :L], b[:L])
    res = first_stage_robust_f(d, Z, X)
    assert res.statistic == pytest.approx(wald / L, rel=1e-9)
    assert res.df == (L, n - W.shape[1])


def test_perfect_first_stage_is_capped(rng):
    n = 100
    Z = rng.standard_normal((n, 2))
    d = Z @ np.array([1.0, -1.0])
    assert cragg_donald_f(d, Z) == F_CAP
    assert first_stage_robust_f(d, Z).statistic == F_CAP


def test_quad_form_flags_near_singular():
    V = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    stat, flagged = quad_form(np.array([1.0, 1.0]), V)
    assert flagged
    assert stat == pytest.approx(1.0, rel=1e-6)
    stat, flagged = quad_form(np.array([1.0, 2.0]), np.diag([2.0, 4.0]))
    assert not flagged
    assert stat == pytest.approx(0.5 + 1.0)


@given(st.integers(0, 10_000))
def test_statistics_are_nonnegative_with_valid_pvalues(seed):
    y, d, Z, X = make_iv_data(n=80, seed=seed, gamma=0.3)
    for stat in (hansen_j(y, d, Z, X), kp_rk_lm(d, Z, X), first_stage_robust_f(d, Z, X),
                 dwh_endogeneity_test(y, d, Z, X).chi2):
        assert stat.statistic >= -1e-9
        assert 0.0 <= stat.pvalue <= 1.0
    assert cragg_donald_f(d, Z, X) >= -1e-9


# ---------------------------------------------------------------------------
# Stock-Yogo


def test_stock_yogo_table_entries_used_in_reports():
    assert STOCK_YOGO["relative_bias_5pct"][3] == 13.91
    assert STOCK_YOGO["size_10pct"][3] == 22.30
    assert STOCK_YOGO["size_15pct"][3] == 12.83


@pytest.mark.parametrize("cd,expected", [(507.35, "pass"), (13.0, "fail"), (13.91, "fail"), (13.92, "pass")])
def test_stock_yogo_verdicts(cd, expected):
    out = stock_yogo_verdict(cd, 3)
    assert out["relative_bias_5pct"]["verdict"] == expected
    assert out["relative_bias_5pct"]["critical_value"] == 13.91


def test_stock_yogo_untabulated_is_not_extrapolated():
    out = stock_yogo_verdict(100.0, 6)
    assert all(v["verdict"] == "no critical value" for v in out.values())
    out = stock_yogo_verdict(100.0, 1)
    assert out["relative_bias_5pct"]["verdict"] == "no critical value"
    assert out["size_10pct"]["critical_value"] == 16.38


# ---------------------------------------------------------------------------
# report


def _designs(n=300, seed=0):
    y, d, Z, X = make_iv_data(n=n, seed=seed)
    labels = dict(instrument_labels=("z1", "z2", "z3"), control_labels=("x1", "x2"))
    return {
        "a": DesignMatrix(y, d, Z, X, "a", "d", **labels),
        "b": DesignMatrix(2 * y + 1, d, Z, X, "b", "d", **labels),
    }


def test_report_layout_and_json():
    rep = run_diagnostics(_designs())
    d = json.loads(rep.to_json())
    assert set(d) >= {"endogeneity", "overidentification", "underidentification", "weak_identification",
                      "first_stage"}
    assert set(d["endogeneity"]) == {"a", "b"}
    assert d["underidentification"]["df"] == [3]
    assert d["weak_identification"]["cragg_donald_f"] == pytest.approx(d["first_stage"]["min_eigenvalue"])
    assert not rep.errors


def test_report_records_failures_and_continues():
    designs = _designs()
    des = designs["a"]
    designs = {"a": DesignMatrix(des.y, des.d, des.Z[:, :1], des.X, "a", "d", ("z1",), ("x1", "x2"))}
    rep = run_diagnostics(designs)
    assert "hansen_j:a" in rep.errors
    assert rep.kp_rk_lm is not None and math.isfinite(rep.cragg_donald_f)
