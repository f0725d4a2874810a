"""Instrument validity battery for a single endogenous regressor.

Endogeneity (control-function Durbin-Wu-Hausman), over-identification
(Hansen J), under-identification (Kleibergen-Paap rk LM), weak
identification (Cragg-Donald F / minimum eigenvalue against Stock-Yogo
critical values) and the heteroskedasticity-robust first-stage F.

All statistics are deterministic functions of the data.  Quadratic forms in
near-singular robust covariances fall back to a pseudo-inverse and set the
``near_singular`` flag on the returned statistic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .distributions import chi2_sf, f_sf
from .estimator import (
    DesignMatrix,
    EstimationError,
    _as_matrix,
    _as_vector,
    _fit,
    _stack,
    first_stage,
    pivoted_qr,
)

PINV_TOL = 1e-10
F_CAP = 1e12

# Stock & Yogo (2005) critical values for one endogenous regressor, keyed by
# the number of excluded instruments.  Relative-bias values do not exist
# for L < 3.
STOCK_YOGO = {
    "relative_bias_5pct": {3: 13.91, 4: 16.85, 5: 18.37},
    "relative_bias_10pct": {3: 9.08, 4: 10.27, 5: 10.83},
    "size_10pct": {1: 16.38, 2: 19.93, 3: 22.30, 4: 24.58, 5: 26.87},
    "size_15pct": {1: 8.96, 2: 11.59, 3: 12.83, 4: 13.96, 5: 15.09},
    "size_20pct": {1: 6.66, 2: 8.75, 3: 9.54, 4: 10.26, 5: 10.98},
    "size_25pct": {1: 5.53, 2: 7.25, 3: 7.80, 4: 8.31, 5: 8.84},
}
REPORTED_CRITERIA = ("relative_bias_5pct", "size_10pct", "size_15pct")


@dataclass(frozen=True)
class TestStat:
    statistic: float
    df: tuple[int, ...]
    pvalue: float
    near_singular: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "statistic": _jsonable(self.statistic),
            "df": list(self.df),
            "pvalue": _jsonable(self.pvalue),
            "near_singular": self.near_singular,
        }


def _jsonable(x: float):
    x = float(x)
    return x if math.isfinite(x) else str(x)


# ---------------------------------------------------------------------------
# helpers


def _prepare(d, Z, X):
    dv = _as_vector(d, "d")
    n = dv.shape[0]
    Zm, zl = _as_matrix(Z, "z")
    if Zm.size == 0:
        raise EstimationError("at least one excluded instrument is required")
    Xc, xl = _stack([_as_matrix(X, "x")], n, True)
    return dv, Zm, zl, Xc, xl


def _residualize(A: np.ndarray, Xc: np.ndarray, labels) -> np.ndarray:
    qr = pivoted_qr(Xc, labels)
    return A - qr.project(A)


def quad_form(b: np.ndarray, V: np.ndarray) -> tuple[float, bool]:
    """b' V^{-1} b, switching to a pseudo-inverse when V is near singular."""
    V = 0.5 * (V + V.T)
    evals = np.linalg.eigvalsh(V)
    top = float(np.max(np.abs(evals))) if evals.size else 0.0
    if top == 0.0:
        return (math.inf if np.any(b != 0) else 0.0), True
    if float(np.min(evals)) <= PINV_TOL * top:
        return float(b @ np.linalg.pinv(V, rcond=PINV_TOL, hermitian=True) @ b), True
    c = np.linalg.cholesky(V)
    w = np.linalg.solve(c, b)
    return float(w @ w), False


# ---------------------------------------------------------------------------
# endogeneity


@dataclass(frozen=True)
class DwhResult:
    chi2: TestStat
    f: TestStat
    coefficient: float

    def to_dict(self) -> dict[str, Any]:
        return {"robust_chi2": self.chi2.to_dict(), "robust_F": self.f.to_dict(),
                "residual_coefficient": float(self.coefficient)}


def dwh_endogeneity_test(y, d, Z, X=None) -> DwhResult:
    """Control-function Durbin-Wu-Hausman test of treatment exogeneity.

    The first-stage residual is added to the structural OLS; its robust t
    statistic squared gives the chi2(1) form (HC0, asymptotic) and the
    F(1, n-k) form (HC1 small-sample scaling).
    """
    yv = _as_vector(y, "y")
    dv, Zm, zl, Xc, xl = _prepare(d, Z, X)
    fs = first_stage(dv, pd.DataFrame(Zm, columns=zl), pd.DataFrame(Xc, columns=xl), cov_type="HC0")
    vhat = fs.residuals
    R = np.column_stack([dv, Xc, vhat])
    labels = ["d", *xl, "vhat"]
    j = len(labels) - 1
    hc0 = _fit(yv, R, labels, "HC0", "control_function")
    hc1 = _fit(yv, R, labels, "HC1", "control_function")
    b = hc0.coefficients[j]
    chi2 = float(b * b / hc0.covariance[j, j]) if hc0.covariance[j, j] > 0 else math.inf
    fst = float(b * b / hc1.covariance[j, j]) if hc1.covariance[j, j] > 0 else math.inf
    return DwhResult(
        chi2=TestStat(chi2, (1,), chi2_sf(chi2, 1)),
        f=TestStat(fst, (1, hc1.df), f_sf(fst, 1, hc1.df)),
        coefficient=float(b),
    )


# ---------------------------------------------------------------------------
# over-identification


def hansen_j(y, d, Z, X=None) -> TestStat:
    """Hansen J statistic from two-step efficient GMM.

    The robust moment covariance is estimated from 2SLS residuals; J is the
    GMM criterion at the efficient estimate, chi-square with L - 1 degrees
    of freedom.  The instrument block is orthonormalised first, which leaves
    J unchanged and keeps the moment covariance well scaled.
    """
    yv = _as_vector(y, "y")
    dv, Zm, zl, Xc, xl = _prepare(d, Z, X)
    L = Zm.shape[1]
    if L <= 1:
        raise EstimationError("J undefined, df = 0 (model is just-identified)")
    n = yv.shape[0]
    W = np.column_stack([Zm, Xc])
    wqr = pivoted_qr(W, [*zl, *xl])
    Q = wqr.q * math.sqrt(n)
    D = np.column_stack([dv, Xc])
    pivoted_qr(D, ["d", *xl])
    # 2SLS on the orthonormal instruments
    QD = Q.T @ D / n
    Qy = Q.T @ yv / n
    b_iv = np.linalg.lstsq(QD, Qy, rcond=None)[0]
    e = yv - D @ b_iv
    qe = Q * e[:, None]
    S = qe.T @ qe / n
    flagged = False
    evals = np.linalg.eigvalsh(S)
    if float(np.min(evals)) <= PINV_TOL * float(np.max(evals)):
        Sinv = np.linalg.pinv(S, rcond=PINV_TOL, hermitian=True)
        flagged = True
    else:
        Sinv = np.linalg.inv(S)
    A = QD.T @ Sinv
    b_gmm = np.linalg.solve(A @ QD, A @ Qy)
    g = Q.T @ (yv - D @ b_gmm) / n
    J = float(n * g @ Sinv @ g)
    df = L - 1
    return TestStat(J, (df,), chi2_sf(J, df), flagged)


# ---------------------------------------------------------------------------
# identification strength


def kp_rk_lm(d, Z, X=None) -> TestStat:
    """Kleibergen-Paap rk LM under-identification test for one endogenous regressor.

    With a single endogenous variable the rank statistic is the robust LM
    test that every excluded-instrument coefficient is zero: the quadratic
    form of the partialled first-stage coefficients in their robust
    covariance evaluated under the null.
    """
    dv, Zm, zl, Xc, xl = _prepare(d, Z, X)
    dt = _residualize(dv, Xc, xl)
    Zt = _residualize(Zm, Xc, xl)
    s = Zt * dt[:, None]
    score = s.sum(axis=0)
    stat, flagged = quad_form(score, s.T @ s)
    # L - K + 1 with K = 1
    df = Zm.shape[1]
    return TestStat(stat, (df,), chi2_sf(stat, df), flagged)


def cragg_donald_f(d, Z, X=None) -> float:
    """Cragg-Donald Wald F; for one endogenous regressor the classical
    first-stage F on the excluded instruments (equal to the minimum
    eigenvalue statistic).  Computed from the restricted/unrestricted
    residual sums of squares."""
    dv, Zm, zl, Xc, xl = _prepare(d, Z, X)
    n, L = Zm.shape
    r_restricted = _residualize(dv, Xc, xl)
    full = np.column_stack([Zm, Xc])
    r_full = _residualize(dv, full, [*zl, *xl])
    ssr_r = float(r_restricted @ r_restricted)
    ssr_u = float(r_full @ r_full)
    df2 = n - full.shape[1]
    if ssr_u <= 0.0:
        return F_CAP
    return min(F_CAP, ((ssr_r - ssr_u) / L) / (ssr_u / df2))


def min_eigenvalue_stat(d, Z, X=None) -> float:
    """Minimum eigenvalue of the concentration matrix (scaled by 1/L).

    With K = 1 the matrix is a scalar:
    d~' P_{Z~} d~ / (L * sigma_v^2) with sigma_v^2 from the full first stage.
    """
    dv, Zm, zl, Xc, xl = _prepare(d, Z, X)
    n, L = Zm.shape
    dt = _residualize(dv, Xc, xl)
    Zt = _residualize(Zm, Xc, xl)
    zqr = pivoted_qr(Zt, zl)
    fitted = zqr.project(dt)
    resid = dt - fitted
    sigma2 = float(resid @ resid) / (n - L - Xc.shape[1])
    if sigma2 <= 0.0:
        return F_CAP
    return min(F_CAP, float(fitted @ fitted) / (L * sigma2))


def first_stage_robust_f(d, Z, X=None, cov_type: str = "HC1") -> TestStat:
    """Wald test that all instrument coefficients are zero, divided by L.

    ``cov_type='classical'`` reproduces the homoskedastic first-stage F.
    """
    dv, Zm, zl, Xc, xl = _prepare(d, Z, X)
    fs = first_stage(dv, pd.DataFrame(Zm, columns=zl), pd.DataFrame(Xc, columns=xl), cov_type=cov_type)
    L = Zm.shape[1]
    idx = list(range(L))
    b = fs.coefficients[idx]
    V = fs.covariance[np.ix_(idx, idx)]
    if float(fs.residuals @ fs.residuals) <= 1e-24 * max(1.0, float(dv @ dv)):
        return TestStat(F_CAP, (L, fs.df), 0.0, True)
    wald, flagged = quad_form(b, V)
    stat = min(F_CAP, wald / L)
    return TestStat(stat, (L, fs.df), f_sf(stat, L, fs.df), flagged)


def stock_yogo_verdict(cd_f: float, L: int, K: int = 1,
                       criteria: Sequence[str] = REPORTED_CRITERIA) -> dict[str, dict[str, Any]]:
    """Compare a Cragg-Donald F with the tabulated Stock-Yogo critical values.

    Entries that are not tabulated for (L, K) get the verdict
    ``"no critical value"``; nothing is interpolated or extrapolated.
    """
    out: dict[str, dict[str, Any]] = {}
    for name in criteria:
        if name not in STOCK_YOGO:
            raise KeyError(f"unknown Stock-Yogo criterion {name!r}")
        crit = STOCK_YOGO[name].get(L) if K == 1 else None
        if crit is None:
            out[name] = {"critical_value": None, "passed": None, "verdict": "no critical value"}
        else:
            ok = bool(cd_f > crit)
            out[name] = {"critical_value": crit, "passed": ok, "verdict": "pass" if ok else "fail"}
    return out


# ---------------------------------------------------------------------------
# report


@dataclass
class DiagnosticsReport:
    """Table-4 style battery: per-outcome endogeneity and over-identification
    tests plus the outcome-free first-stage strength tests."""

    n: int
    n_instruments: int
    dwh: dict[str, DwhResult] = field(default_factory=dict)
    hansen_j: dict[str, TestStat] = field(default_factory=dict)
    kp_rk_lm: TestStat | None = None
    cragg_donald_f: float = math.nan
    min_eigenvalue: float = math.nan
    first_stage_robust_f: TestStat | None = None
    stock_yogo: dict[str, dict[str, Any]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def near_singular(self) -> bool:
        stats = [*self.hansen_j.values(), self.kp_rk_lm, self.first_stage_robust_f]
        return any(s is not None and s.near_singular for s in stats)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "n_instruments": self.n_instruments,
            "endogeneity": {k: v.to_dict() for k, v in self.dwh.items()},
            "overidentification": {k: v.to_dict() for k, v in self.hansen_j.items()},
            "underidentification": self.kp_rk_lm.to_dict() if self.kp_rk_lm else None,
            "weak_identification": {
                "cragg_donald_f": _jsonable(self.cragg_donald_f),
                "stock_yogo": self.stock_yogo,
            },
            "first_stage": {
                "robust_f": self.first_stage_robust_f.to_dict() if self.first_stage_robust_f else None,
                "min_eigenvalue": _jsonable(self.min_eigenvalue),
            },
            "near_singular": self.near_singular,
            "errors": dict(self.errors),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def run_diagnostics(designs: dict[str, DesignMatrix]) -> DiagnosticsReport:
    """Full battery over designs that share treatment, instruments and controls.

    ``designs`` maps outcome name to its design; the first-stage tests use
    the first design.  A failing per-outcome test is recorded in ``errors``
    and the remaining tests still run.
    """
    if not designs:
        raise ValueError("no designs supplied")
    first = next(iter(designs.values()))
    Z, X = first.Z, first.X
    report = DiagnosticsReport(n=first.n, n_instruments=Z.shape[1])
    for outcome, des in designs.items():
        try:
            report.dwh[outcome] = dwh_endogeneity_test(des.y, des.d, des.Z, des.X)
        except EstimationError as exc:
            report.errors[f"dwh:{outcome}"] = str(exc)
        try:
            report.hansen_j[outcome] = hansen_j(des.y, des.d, des.Z, des.X)
        except EstimationError as exc:
            report.errors[f"hansen_j:{outcome}"] = str(exc)
    try:
        report.kp_rk_lm = kp_rk_lm(first.d, Z, X)
        report.cragg_donald_f = cragg_donald_f(first.d, Z, X)
        report.min_eigenvalue = min_eigenvalue_stat(first.d, Z, X)
        report.first_stage_robust_f = first_stage_robust_f(first.d, Z, X)
        report.stock_yogo = stock_yogo_verdict(report.cragg_donald_f, Z.shape[1])
    except EstimationError as exc:
        report.errors["first_stage"] = str(exc)
    return report


__all__ = [
    "DiagnosticsReport",
    "DwhResult",
    "STOCK_YOGO",
    "TestStat",
    "cragg_donald_f",
    "dwh_endogeneity_test",
    "first_stage_robust_f",
    "hansen_j",
    "kp_rk_lm",
    "min_eigenvalue_stat",
    "quad_form",
    "run_diagnostics",
    "stock_yogo_verdict",
]
