"""Linear estimators: OLS, first-stage, 2SLS and two-way fixed effects.

Every fit goes through a column-pivoted QR factorisation.  Rank is judged
against ``RANK_TOL * max|R_ii|`` and a deficient design raises
:class:`RankDeficiencyError` naming the columns that could not be pivoted
in.  Covariances are sandwich forms built from triangular solves; no
normal-equation matrix is ever inverted directly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy import linalg

from .distributions import t_ppf, t_two_sided

RANK_TOL = 1e-10
COV_TYPES = ("HC0", "HC1", "classical")
INTERCEPT = "const"


class EstimationError(ValueError):
    """Raised when a model cannot be estimated on the supplied design."""


class RankDeficiencyError(EstimationError):
    def __init__(self, message: str, columns: Sequence[str] = ()):
        super().__init__(message)
        self.columns = tuple(columns)


@dataclass(frozen=True)
class EstimateResult:
    labels: tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    r_squared: float
    n: int
    df: int
    cov_type: str
    method: str = "ols"
    meta: dict = field(default_factory=dict)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        se = self.standard_errors
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, self.coefficients / se, np.inf * np.sign(self.coefficients))

    @property
    def pvalues(self) -> np.ndarray:
        return np.array([t_two_sided(float(t), self.df) for t in self.tvalues])

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no coefficient named {label!r}; have {list(self.labels)}") from None

    def coef(self, label: str) -> float:
        return float(self.coefficients[self.index(label)])

    def se(self, label: str) -> float:
        return float(self.standard_errors[self.index(label)])

    def pvalue(self, label: str) -> float:
        return float(self.pvalues[self.index(label)])

    def conf_int(self, label: str, level: float = 0.95) -> tuple[float, float]:
        q = t_ppf(0.5 + level / 2.0, self.df)
        b, s = self.coef(label), self.se(label)
        return b - q * s, b + q * s

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "labels": list(self.labels),
            "coefficients": [float(v) for v in self.coefficients],
            "standard_errors": [float(v) for v in self.standard_errors],
            "pvalues": [float(v) for v in self.pvalues],
            "cov_type": self.cov_type,
            "n": int(self.n),
            "df": int(self.df),
            "r_squared": float(self.r_squared),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# ---------------------------------------------------------------------------
# design handling


def _as_matrix(obj, prefix: str) -> tuple[np.ndarray, list[str]]:
    if obj is None:
        return np.empty((0, 0)), []
    if isinstance(obj, pd.DataFrame):
        return obj.to_numpy(dtype=float), [str(c) for c in obj.columns]
    if isinstance(obj, pd.Series):
        return obj.to_numpy(dtype=float)[:, None], [str(obj.name) if obj.name is not None else prefix]
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 1:
        return arr[:, None], [prefix]
    if arr.ndim != 2:
        raise EstimationError(f"{prefix}: expected 1-D or 2-D data, got shape {arr.shape}")
    return arr, [f"{prefix}{j}" for j in range(arr.shape[1])]


def _as_vector(obj, name: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise EstimationError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


def _has_intercept(X: np.ndarray) -> bool:
    if X.size == 0:
        return False
    return bool(np.any(np.all(X == X[0:1, :], axis=0) & (X[0, :] != 0)))


def _stack(blocks: Sequence[tuple[np.ndarray, list[str]]], n: int, add_constant: bool):
    mats = [m for m, _ in blocks if m.size]
    labels = [lab for _, labs in blocks for lab in labs]
    X = np.column_stack(mats) if mats else np.empty((n, 0))
    if add_constant and not _has_intercept(X):
        X = np.column_stack([X, np.ones(n)])
        labels = labels + [INTERCEPT]
    if len(set(labels)) != len(labels):
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        raise EstimationError(f"column labels must be unique; duplicated: {dupes}")
    return X, labels


def _check_finite(n: int, **arrays: np.ndarray) -> None:
    for name, arr in arrays.items():
        if arr.size and arr.shape[0] != n:
            raise EstimationError(f"{name} has {arr.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(arr)):
            raise EstimationError(f"{name} contains non-finite entries")


@dataclass(frozen=True)
class _QR:
    q: np.ndarray
    r: np.ndarray
    perm: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        z = linalg.solve_triangular(self.r, self.q.T @ b)
        out = np.empty_like(z)
        out[self.perm] = z
        return out

    def bread(self) -> np.ndarray:
        """(X'X)^{-1} in the original column order."""
        rinv = linalg.solve_triangular(self.r, np.eye(self.r.shape[0]))
        inner = rinv @ rinv.T
        out = np.empty_like(inner)
        out[np.ix_(self.perm, self.perm)] = inner
        return out

    def project(self, b: np.ndarray) -> np.ndarray:
        return self.q @ (self.q.T @ b)


def pivoted_qr(X: np.ndarray, labels: Sequence[str]) -> _QR:
    """Economic pivoted QR with rank detection; raises on deficiency."""
    n, k = X.shape
    if k == 0:
        raise EstimationError("design has no columns")
    if n <= k:
        raise EstimationError(f"need more rows than columns (n={n}, k={k})")
    q, r, perm = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > RANK_TOL * scale)) if scale > 0 else 0
    if rank < k:
        bad = [labels[j] for j in perm[rank:]]
        raise RankDeficiencyError(
            f"design is rank deficient (rank {rank} < {k}); collinear columns: {bad}", bad
        )
    return _QR(q=q, r=r, perm=perm)


def _sandwich(bread: np.ndarray, X: np.ndarray, resid: np.ndarray, cov_type: str, n: int, df: int) -> np.ndarray:
    if cov_type == "classical":
        s2 = float(resid @ resid) / df
        cov = s2 * bread
    else:
        xe = X * resid[:, None]
        meat = xe.T @ xe
        cov = bread @ meat @ bread
        if cov_type == "HC1":
            cov = cov * (n / df)
    return 0.5 * (cov + cov.T)


def _check_cov_type(cov_type: str) -> None:
    if cov_type not in COV_TYPES:
        raise EstimationError(f"cov_type must be one of {COV_TYPES}, got {cov_type!r}")


def _r2(y: np.ndarray, resid: np.ndarray) -> float:
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss == 0.0:
        return math.nan
    return 1.0 - float(resid @ resid) / tss


def _fit(y, X, labels, cov_type, method, df=None, meta=None) -> EstimateResult:
    n, k = X.shape
    qr = pivoted_qr(X, labels)
    beta = qr.solve(y)
    fitted = X @ beta
    resid = y - fitted
    df = n - k if df is None else df
    if df <= 0:
        raise EstimationError(f"no residual degrees of freedom (n={n}, k={k})")
    cov = _sandwich(qr.bread(), X, resid, cov_type, n, df)
    return EstimateResult(
        labels=tuple(labels),
        coefficients=beta,
        covariance=cov,
        residuals=resid,
        fitted=fitted,
        r_squared=_r2(y, resid),
        n=n,
        df=df,
        cov_type=cov_type,
        method=method,
        meta=meta or {},
    )


# ---------------------------------------------------------------------------
# estimators


def ols(y, regressors, cov_type: str = "HC1", add_constant: bool = True) -> EstimateResult:
    """Least squares of ``y`` on ``regressors``.

    An intercept column is appended unless one of the regressors is already
    a non-zero constant.  A second constant column is reported as
    collinearity like any other linear dependence.
    """
    _check_cov_type(cov_type)
    yv = _as_vector(y, "y")
    n = yv.shape[0]
    R = _as_matrix(regressors, "x")
    X, labels = _stack([R], n, add_constant)
    _check_finite(n, y=yv, regressors=X)
    return _fit(yv, X, labels, cov_type, "ols")


def first_stage(d, Z, X=None, cov_type: str = "HC1") -> EstimateResult:
    """Linear-probability regression of the treatment on instruments and controls."""
    _check_cov_type(cov_type)
    dv = _as_vector(d, "d")
    n = dv.shape[0]
    Zm = _as_matrix(Z, "z")
    if Zm[0].size == 0:
        raise EstimationError("first stage needs at least one instrument")
    W, labels = _stack([Zm, _as_matrix(X, "x")], n, True)
    _check_finite(n, d=dv, instruments=W)
    return _fit(dv, W, labels, cov_type, "first_stage", meta={"instruments": Zm[1]})


def tsls(y, d, Z, X=None, cov_type: str = "HC1", treatment_label: str | None = None) -> EstimateResult:
    """Two-stage least squares with one endogenous regressor.

    The treatment (and the exogenous controls, trivially) is projected on the
    span of ``[Z | X | 1]``; the outcome is regressed on the projection.
    Residuals and the covariance use the *observed* treatment.
    """
    _check_cov_type(cov_type)
    yv = _as_vector(y, "y")
    n = yv.shape[0]
    dm = _as_matrix(d, treatment_label or "d")
    if treatment_label is not None:
        dm = (dm[0], [treatment_label])
    if dm[0].shape[1] != 1:
        raise EstimationError("exactly one endogenous regressor is supported")
    Zm = _as_matrix(Z, "z")
    if Zm[0].size == 0:
        raise EstimationError("2SLS needs at least one excluded instrument (L = 0)")
    Xm = _as_matrix(X, "x")
    D, dlabels = _stack([dm, Xm], n, True)
    W, wlabels = _stack([Zm, Xm], n, True)
    _check_finite(n, y=yv, regressors=D, instruments=W)
    wqr = pivoted_qr(W, wlabels)
    Dhat = wqr.project(D)
    # exogenous columns lie in span(W); keep them exact
    Dhat[:, 1:] = D[:, 1:]
    dqr = pivoted_qr(Dhat, dlabels)
    beta = dqr.solve(yv)
    fitted = D @ beta
    resid = yv - fitted
    k = D.shape[1]
    df = n - k
    if df <= 0:
        raise EstimationError(f"no residual degrees of freedom (n={n}, k={k})")
    cov = _sandwich(dqr.bread(), Dhat, resid, cov_type, n, df)
    return EstimateResult(
        labels=tuple(dlabels),
        coefficients=beta,
        covariance=cov,
        residuals=resid,
        fitted=fitted,
        r_squared=_r2(yv, resid),
        n=n,
        df=df,
        cov_type=cov_type,
        method="2sls",
        meta={"instruments": Zm[1], "n_instruments": Zm[0].shape[1]},
    )


def within_transform(a: np.ndarray, unit_codes: np.ndarray, time_codes: np.ndarray,
                     tol: float = 1e-13, max_iter: int = 10_000) -> np.ndarray:
    """Sweep out unit and time means by alternating projections.

    Exact after one pass on a balanced panel; iterates to ``tol`` otherwise.
    """
    a = np.asarray(a, dtype=float)
    squeeze = a.ndim == 1
    out = a[:, None].copy() if squeeze else a.copy()
    nu, nt = unit_codes.max() + 1, time_codes.max() + 1
    cu = np.bincount(unit_codes, minlength=nu).astype(float)
    ct = np.bincount(time_codes, minlength=nt).astype(float)
    scale = max(1.0, float(np.max(np.abs(out))) if out.size else 1.0)
    for _ in range(max_iter):
        prev = out.copy()
        for codes, counts in ((unit_codes, cu), (time_codes, ct)):
            for j in range(out.shape[1]):
                means = np.bincount(codes, weights=out[:, j], minlength=counts.size) / counts
                out[:, j] -= means[codes]
        if np.max(np.abs(out - prev)) <= tol * scale:
            break
    else:
        raise EstimationError("within transformation did not converge")
    return out[:, 0] if squeeze else out


def twfe(y, regressors, unit_ids, time_ids, cov_type: str = "HC1") -> EstimateResult:
    """Two-way fixed effects regression; unit and time effects are absorbed.

    The transformed data get the grand means added back so the reported
    intercept is the usual "average effect" constant.
    """
    _check_cov_type(cov_type)
    yv = _as_vector(y, "y")
    n = yv.shape[0]
    R, rlabels = _as_matrix(regressors, "x")
    unit_codes, units = pd.factorize(pd.Series(list(unit_ids)), sort=True)
    time_codes, times = pd.factorize(pd.Series(list(time_ids)), sort=True)
    if len(unit_codes) != n or len(time_codes) != n:
        raise EstimationError("unit_ids and time_ids must align with y")
    if len(units) < 2 or len(times) < 2:
        raise EstimationError(f"TWFE needs at least 2 units and 2 periods (got {len(units)} and {len(times)})")
    _check_finite(n, y=yv, regressors=R)
    yt = within_transform(yv, unit_codes, time_codes) + yv.mean()
    Rt = within_transform(R, unit_codes, time_codes) + R.mean(axis=0)
    X, labels = _stack([(Rt, rlabels)], n, False)
    X = np.column_stack([X, np.ones(n)])
    labels = labels + [INTERCEPT]
    df = n - X.shape[1] - (len(units) - 1) - (len(times) - 1)
    return _fit(yt, X, labels, cov_type, "twfe", df=df,
                meta={"n_units": len(units), "n_periods": len(times)})


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignMatrix:
    """Outcome, treatment, instruments and controls for one IV regression."""

    y: np.ndarray
    d: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    outcome: str = "y"
    treatment: str = "d"
    instrument_labels: tuple[str, ...] = ()
    control_labels: tuple[str, ...] = ()

    def __post_init__(self):
        n = self.y.shape[0]
        _check_finite(n, y=self.y, d=self.d, Z=self.Z, X=self.X)
        labels = [self.treatment, *self.instrument_labels, *self.control_labels]
        if len(set(labels)) != len(labels):
            raise EstimationError(f"column labels must be unique: {labels}")
        if n <= 1 + self.X.shape[1]:
            raise EstimationError(f"too few rows ({n}) for {1 + self.X.shape[1]} columns")

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, outcome: str, treatment: str,
                   instruments: Sequence[str], controls: Sequence[str]) -> "DesignMatrix":
        missing = [c for c in [outcome, treatment, *instruments, *controls] if c not in frame.columns]
        if missing:
            raise EstimationError(f"frame lacks columns {missing}")
        return cls(
            y=frame[outcome].to_numpy(dtype=float),
            d=frame[treatment].to_numpy(dtype=float),
            Z=frame[list(instruments)].to_numpy(dtype=float).reshape(len(frame), -1),
            X=frame[list(controls)].to_numpy(dtype=float).reshape(len(frame), -1),
            outcome=outcome,
            treatment=treatment,
            instrument_labels=tuple(instruments),
            control_labels=tuple(controls),
        )

    def z_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.Z, columns=list(self.instrument_labels))

    def x_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.X, columns=list(self.control_labels))

    def ols(self, cov_type: str = "HC1") -> EstimateResult:
        R = pd.concat([pd.Series(self.d, name=self.treatment), self.x_frame()], axis=1)
        return ols(self.y, R, cov_type)

    def first_stage(self, cov_type: str = "HC1") -> EstimateResult:
        return first_stage(self.d, self.z_frame(), self.x_frame(), cov_type)

    def tsls(self, cov_type: str = "HC1") -> EstimateResult:
        return tsls(self.y, self.d, self.z_frame(), self.x_frame(), cov_type, treatment_label=self.treatment)
