"""Scholar / grant / publication ingestion and scholar-year panel assembly.

The CSV adapters expect the post-merge bibliographic join (one row per
publication, already deduplicated).  Rows whose controls cannot be filled
are rejected and listed in the dataset report; nothing is imputed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

METRICS = ("article_count", "avg_citations", "avg_citescore")
GENDER_CODES = {"male": 1, "female": 0}

SCHOLAR_COLUMNS = ("scholar_id", "gender", "gender_confidence", "first_pub_year", "affiliation_id")
GRANT_COLUMNS = ("grant_id", "scholar_id", "award_year", "amount_usd", "duration_years", "title", "abstract")
PUB_COLUMNS = ("pub_id", "scholar_id", "year", "citations", "citescore", "coauthor_ids")
CONTEXT_COLUMNS = (
    "affiliation_id", "year", "qs_rank", "usnews_rank", "employer_reputation",
    "ln_pubs_affil", "ln_cites_affil", "field_id", "ln_pubs_field", "ln_cites_field",
)
CONTROL_COLUMNS = (
    "qs_rank", "usnews_rank", "employer_reputation",
    "ln_pubs_affil", "ln_cites_affil", "ln_pubs_field", "ln_cites_field",
)


class DataError(ValueError):
    """Input data violate a schema or an invariant."""


class SchemaError(DataError):
    def __init__(self, message: str, columns: Sequence[str] = ()):
        super().__init__(message)
        self.columns = tuple(columns)


class IntegrityError(DataError):
    def __init__(self, message: str, offenders: Sequence[str] = ()):
        super().__init__(message)
        self.offenders = tuple(offenders)


class MissingDataError(DataError):
    pass


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class ScholarRecord:
    scholar_id: str
    gender: str
    gender_confidence: float
    first_pub_year: int | None
    affiliation_id: str

    def __post_init__(self):
        if self.gender not in ("male", "female", "unknown"):
            raise DataError(f"gender must be male/female/unknown, got {self.gender!r}")
        if not 0.0 <= self.gender_confidence <= 1.0:
            raise DataError(f"gender_confidence must lie in [0, 1], got {self.gender_confidence}")


@dataclass(frozen=True)
class GrantRecord:
    grant_id: str
    scholar_id: str
    award_year: int
    amount_usd: float
    duration_years: int
    title: str = ""
    abstract: str = ""
    topic_id: int | None = None

    def __post_init__(self):
        if not self.amount_usd > 0:
            raise DataError(f"grant {self.grant_id}: amount_usd must be positive")
        if self.duration_years < 1:
            raise DataError(f"grant {self.grant_id}: duration_years must be >= 1")


@dataclass(frozen=True)
class PublicationRecord:
    pub_id: str
    scholar_id: str
    year: int
    citations: float
    citescore: float
    coauthor_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.citations < 0 or self.citescore < 0:
            raise DataError(f"publication {self.pub_id}: citations and citescore must be non-negative")


@dataclass(frozen=True)
class PanelObservation:
    scholar_id: str
    year: int
    funded: int
    article_count: int
    avg_citations: float
    avg_citescore: float
    academic_age: int
    ln_grant_amount: float
    gender: int
    initial_article_count: float
    initial_avg_citations: float
    initial_avg_citescore: float
    ln_pubs_field: float
    ln_cites_field: float
    ln_pubs_affil: float
    ln_cites_affil: float
    qs_rank: int
    usnews_rank: int
    employer_reputation: float


# ---------------------------------------------------------------------------
# per-record derivations


def aggregate_annual_metrics(pubs: Iterable[PublicationRecord], scholar_id: str, year: int
                             ) -> tuple[float, float, int]:
    """(avg citations, avg CiteScore, article count) of one scholar-year.

    A year without publications gives ``(0.0, 0.0, 0)``.
    """
    rows = [p for p in pubs if p.scholar_id == scholar_id and p.year == year]
    n = len(rows)
    if n == 0:
        return 0.0, 0.0, 0
    return (math.fsum(p.citations for p in rows) / n,
            math.fsum(p.citescore for p in rows) / n, n)


def derive_academic_age(scholar: ScholarRecord, award_year: int) -> int:
    """Years between the first indexed publication and the year before the award."""
    if scholar.first_pub_year is None or (isinstance(scholar.first_pub_year, float)
                                          and math.isnan(scholar.first_pub_year)):
        raise MissingDataError(f"scholar {scholar.scholar_id}: first_pub_year unknown")
    return max(0, int(award_year) - 1 - int(scholar.first_pub_year))


def derive_initial_performance(pubs: Iterable[PublicationRecord], scholar_id: str,
                               window_start_year: int, metric: str, lookback: int = 3) -> float:
    """ln(1 + mean of ``metric`` over the ``lookback`` years before the window.

    Years without publications count as zeros in the mean.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    pubs = list(pubs)
    pos = {"avg_citations": 0, "avg_citescore": 1, "article_count": 2}[metric]
    values = [aggregate_annual_metrics(pubs, scholar_id, y)[pos]
              for y in range(window_start_year - lookback, window_start_year)]
    return math.log1p(math.fsum(values) / lookback)


def citescore_tail_outcome(pubs: Iterable[PublicationRecord], scholar_id: str, year: int,
                           tail: str, q: float = 0.10,
                           distribution: Sequence[float] | None = None) -> float:
    """Yearly mean CiteScore after keeping only tail publications' own values.

    Publications inside the selected tail of the global CiteScore
    distribution keep their CiteScore; every other publication is replaced
    by the scholar's average CiteScore over all of their publications.
    ``distribution`` defaults to the CiteScores of every record in ``pubs``.
    """
    if tail not in ("top", "bottom"):
        raise ValueError(f"tail must be 'top' or 'bottom', got {tail!r}")
    pubs = list(pubs)
    dist = np.asarray([p.citescore for p in pubs] if distribution is None else distribution, dtype=float)
    if dist.size == 0:
        raise RuntimeError("global CiteScore distribution is empty")
    mine = [p for p in pubs if p.scholar_id == scholar_id]
    this_year = [p for p in mine if p.year == year]
    if not this_year:
        return 0.0
    scholar_avg = math.fsum(p.citescore for p in mine) / len(mine)
    if tail == "top":
        cut = float(np.quantile(dist, 1.0 - q))
        inside = [p.citescore >= cut for p in this_year]
    else:
        cut = float(np.quantile(dist, q))
        inside = [p.citescore <= cut for p in this_year]
    vals = [p.citescore if keep else scholar_avg for p, keep in zip(this_year, inside)]
    return math.fsum(vals) / len(vals)


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class PanelConfig:
    start_year: int = 2000
    end_year: int = 2019
    lookback_years: int = 3
    treatment_cap: int = 5

    def __post_init__(self):
        if self.end_year < self.start_year:
            raise ValueError("end_year precedes start_year")
        if self.lookback_years < 1 or self.treatment_cap < 1:
            raise ValueError("lookback_years and treatment_cap must be >= 1")

    @property
    def years(self) -> list[int]:
        return list(range(self.start_year, self.end_year + 1))


@dataclass
class PanelDataset:
    """Scholar-year observations plus the raw tables they were built from."""

    frame: pd.DataFrame
    scholars: pd.DataFrame
    grants: pd.DataFrame
    pubs: pd.DataFrame
    context: pd.DataFrame
    config: PanelConfig = field(default_factory=PanelConfig)
    report: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def scholar_ids(self) -> list[str]:
        return sorted(self.frame["scholar_id"].unique())

    def funded_scholars(self) -> set[str]:
        g = self.frame.groupby("scholar_id")["funded"].max()
        return set(g.index[g > 0])

    def observations(self) -> list[PanelObservation]:
        names = [f for f in PanelObservation.__dataclass_fields__]
        return [PanelObservation(**{k: rec[k] for k in names})
                for rec in self.frame[names].to_dict("records")]

    def with_frame(self, frame: pd.DataFrame, entry: dict | None = None) -> "PanelDataset":
        report = list(self.report) + ([entry] if entry else [])
        return replace(self, frame=frame.reset_index(drop=True), report=report)

    def publication_records(self) -> list[PublicationRecord]:
        return [
            PublicationRecord(r.pub_id, r.scholar_id, int(r.year), float(r.citations),
                              float(r.citescore), tuple(r.coauthor_ids))
            for r in self.pubs.itertuples(index=False)
        ]


def _require(df: pd.DataFrame, columns: Sequence[str], name: str) -> None:
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise SchemaError(f"{name}: missing required column(s) {missing}", missing)


def _numeric(df: pd.DataFrame, columns: Sequence[str], name: str) -> pd.DataFrame:
    df = df.copy()
    for c in columns:
        conv = pd.to_numeric(df[c], errors="coerce")
        bad = conv.isna() & df[c].notna() & (df[c].astype(str).str.strip() != "")
        if bad.any():
            raise SchemaError(f"{name}: column {c!r} has non-numeric values, e.g. {df.loc[bad, c].iloc[0]!r}", [c])
        df[c] = conv
    return df


def _read(path, columns: Sequence[str], name: str, id_columns: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{name}: no such file {path}")
    df = pd.read_csv(path, dtype={c: str for c in id_columns}, keep_default_na=False,
                     na_values={c: [""] for c in columns if c not in id_columns}, encoding="utf-8")
    _require(df, columns, name)
    return df


def read_scholars(path) -> pd.DataFrame:
    df = _read(path, SCHOLAR_COLUMNS, "scholars.csv", ("scholar_id", "affiliation_id", "gender"))
    df = _numeric(df, ["gender_confidence", "first_pub_year"], "scholars.csv")
    df["gender"] = df["gender"].str.strip().str.lower().replace("", "unknown")
    bad = ~df["gender"].isin(["male", "female", "unknown"])
    if bad.any():
        raise SchemaError(f"scholars.csv: column 'gender' has invalid values {sorted(df.loc[bad, 'gender'].unique())}",
                          ["gender"])
    conf = df["gender_confidence"]
    if ((conf < 0) | (conf > 1) | conf.isna()).any():
        raise SchemaError("scholars.csv: column 'gender_confidence' must lie in [0, 1]", ["gender_confidence"])
    if df["scholar_id"].duplicated().any():
        dup = sorted(df.loc[df["scholar_id"].duplicated(), "scholar_id"].unique())
        raise IntegrityError(f"scholars.csv: duplicated scholar_id {dup}", dup)
    return df[list(SCHOLAR_COLUMNS)].reset_index(drop=True)


def read_grants(path) -> pd.DataFrame:
    df = _read(path, GRANT_COLUMNS, "grants.csv", ("grant_id", "scholar_id", "title", "abstract"))
    if "topic_id" not in df.columns:
        df["topic_id"] = np.nan
    df = _numeric(df, ["award_year", "amount_usd", "duration_years", "topic_id"], "grants.csv")
    if (df["amount_usd"].isna() | (df["amount_usd"] <= 0)).any():
        raise SchemaError("grants.csv: column 'amount_usd' must be positive", ["amount_usd"])
    if (df["duration_years"].isna() | (df["duration_years"] < 1)).any():
        raise SchemaError("grants.csv: column 'duration_years' must be >= 1", ["duration_years"])
    if df["award_year"].isna().any():
        raise SchemaError("grants.csv: column 'award_year' has blanks", ["award_year"])
    df["award_year"] = df["award_year"].astype(int)
    df["duration_years"] = df["duration_years"].astype(int)
    return df[list(GRANT_COLUMNS) + ["topic_id"]].reset_index(drop=True)


def read_pubs(path) -> pd.DataFrame:
    df = _read(path, PUB_COLUMNS, "pubs.csv", ("pub_id", "scholar_id", "coauthor_ids"))
    df = _numeric(df, ["year", "citations", "citescore"], "pubs.csv")
    for c in ("year", "citations", "citescore"):
        if df[c].isna().any():
            raise SchemaError(f"pubs.csv: column {c!r} has blanks", [c])
    if ((df["citations"] < 0) | (df["citescore"] < 0)).any():
        raise SchemaError("pubs.csv: citations and citescore must be non-negative", ["citations", "citescore"])
    df["year"] = df["year"].astype(int)
    df["coauthor_ids"] = [tuple(t for t in s.split(";") if t) for s in df["coauthor_ids"].fillna("")]
    return df[list(PUB_COLUMNS)].reset_index(drop=True)


def read_context(path) -> pd.DataFrame:
    df = _read(path, CONTEXT_COLUMNS, "context.csv", ("affiliation_id", "field_id"))
    df = _numeric(df, ["year", *CONTROL_COLUMNS], "context.csv")
    df["year"] = df["year"].astype(int)
    key = df[["affiliation_id", "year"]]
    if key.duplicated().any():
        raise IntegrityError("context.csv: duplicated (affiliation_id, year) rows")
    return df[list(CONTEXT_COLUMNS)].reset_index(drop=True)


def _check_refs(table: pd.DataFrame, known: set[str], name: str) -> None:
    offenders = sorted(set(table["scholar_id"]) - known)
    if offenders:
        raise IntegrityError(f"{name}: scholar_id(s) not present in scholars.csv: {offenders}", offenders)


# ---------------------------------------------------------------------------
# panel assembly


def annual_metrics_table(pubs: pd.DataFrame) -> pd.DataFrame:
    """Vectorised :func:`aggregate_annual_metrics` for every scholar-year with publications."""
    if pubs.empty:
        return pd.DataFrame(columns=["scholar_id", "year", *METRICS])
    g = pubs.groupby(["scholar_id", "year"], sort=True)
    out = g.agg(article_count=("pub_id", "size"), avg_citations=("citations", "mean"),
                avg_citescore=("citescore", "mean")).reset_index()
    return out


def treatment_years(grants: pd.DataFrame, cap: int) -> pd.DataFrame:
    """(scholar_id, year, amount) for every year a grant is active.

    A grant is active in its award year and the following
    ``min(duration, cap) - 1`` years.
    """
    rows = []
    for g in grants.itertuples(index=False):
        span = min(int(g.duration_years), cap)
        for k in range(span):
            rows.append((g.scholar_id, int(g.award_year) + k, float(g.amount_usd)))
    return pd.DataFrame(rows, columns=["scholar_id", "year", "amount_usd"])


def build_panel(scholars: pd.DataFrame, grants: pd.DataFrame, pubs: pd.DataFrame,
                context: pd.DataFrame, config: PanelConfig | None = None) -> PanelDataset:
    config = config or PanelConfig()
    known = set(scholars["scholar_id"])
    _check_refs(grants, known, "grants.csv")
    _check_refs(pubs, known, "pubs.csv")
    report: list[dict] = []

    sch = scholars.copy()
    no_first = sch["first_pub_year"].isna()
    if no_first.any():
        report.append({"stage": "ingest", "reason": "unknown first_pub_year",
                       "scholars": sorted(sch.loc[no_first, "scholar_id"])})
        sch = sch[~no_first]

    frames = []
    for s in sch.itertuples(index=False):
        first = int(s.first_pub_year)
        years = [y for y in config.years if y >= first]
        frames.append(pd.DataFrame({"scholar_id": s.scholar_id, "year": years}))
    base = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=["scholar_id", "year"])
    base["year"] = base["year"].astype(int)
    base = base.merge(sch, on="scholar_id", how="left")

    metrics = annual_metrics_table(pubs)
    base = base.merge(metrics, on=["scholar_id", "year"], how="left")
    base["article_count"] = base["article_count"].fillna(0).astype(int)
    base[["avg_citations", "avg_citescore"]] = base[["avg_citations", "avg_citescore"]].fillna(0.0)

    active = treatment_years(grants, config.treatment_cap)
    if active.empty:
        base["funded"] = 0
        base["ln_grant_amount"] = 0.0
    else:
        amt = active.groupby(["scholar_id", "year"])["amount_usd"].sum().rename("active_amount").reset_index()
        base = base.merge(amt, on=["scholar_id", "year"], how="left")
        base["funded"] = base["active_amount"].notna().astype(int)
        base["ln_grant_amount"] = np.log1p(base["active_amount"].fillna(0.0))
        base = base.drop(columns="active_amount")

    base["academic_age"] = np.maximum(0, base["year"] - 1 - base["first_pub_year"].astype(int)).astype(int)

    # initial performance: ln(1 + mean over the lookback years, zeros included)
    lo, hi = config.start_year - config.lookback_years, config.start_year
    prior = metrics[(metrics["year"] >= lo) & (metrics["year"] < hi)]
    init = prior.groupby("scholar_id")[list(METRICS)].sum() / config.lookback_years
    init = np.log1p(init).add_prefix("initial_")
    base = base.merge(init, left_on="scholar_id", right_index=True, how="left")
    for m in METRICS:
        base[f"initial_{m}"] = base[f"initial_{m}"].fillna(0.0)

    base = base.merge(context, on=["affiliation_id", "year"], how="left")

    unknown_gender = base["gender"] == "unknown"
    if unknown_gender.any():
        report.append({"stage": "ingest", "reason": "unknown gender", "rows": int(unknown_gender.sum()),
                       "scholars": sorted(base.loc[unknown_gender, "scholar_id"].unique())})
    missing_ctrl = base[list(CONTROL_COLUMNS)].isna().any(axis=1) & ~unknown_gender
    if missing_ctrl.any():
        report.append({"stage": "ingest", "reason": "missing controls", "rows": int(missing_ctrl.sum()),
                       "cells": sorted({(a, int(y)) for a, y in
                                        base.loc[missing_ctrl, ["affiliation_id", "year"]].itertuples(index=False)})})
    base = base[~(unknown_gender | missing_ctrl)].copy()
    base["gender"] = base["gender"].map(GENDER_CODES).astype(int)
    base["qs_rank"] = base["qs_rank"].astype(int)
    base["usnews_rank"] = base["usnews_rank"].astype(int)

    columns = [
        "scholar_id", "year", "affiliation_id", "field_id", "funded", "article_count", "avg_citations",
        "avg_citescore", "academic_age", "ln_grant_amount", "gender", "gender_confidence",
        *[f"initial_{m}" for m in METRICS], *CONTROL_COLUMNS,
    ]
    frame = base[columns].sort_values(["scholar_id", "year"]).reset_index(drop=True)
    return PanelDataset(frame=frame, scholars=scholars, grants=grants, pubs=pubs, context=context,
                        config=config, report=report)


def load_panel(scholars_csv, grants_csv, pubs_csv, context_csv,
               config: PanelConfig | None = None) -> PanelDataset:
    """Read the four input tables and assemble the scholar-year panel."""
    return build_panel(read_scholars(scholars_csv), read_grants(grants_csv), read_pubs(pubs_csv),
                       read_context(context_csv), config)


def filter_gender_confidence(dataset: PanelDataset, threshold: float = 0.95) -> PanelDataset:
    """Drop scholars whose gender assignment confidence is below ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    conf = dataset.scholars.set_index("scholar_id")["gender_confidence"]
    low = set(conf.index[conf < threshold])
    keep = ~dataset.frame["scholar_id"].isin(low)
    dropped = sorted(set(dataset.frame.loc[~keep, "scholar_id"]))
    entry = {"stage": "gender_filter", "threshold": threshold, "dropped_scholars": len(dropped),
             "scholars": dropped}
    return dataset.with_frame(dataset.frame[keep], entry)


def add_tail_outcomes(dataset: PanelDataset, q: float = 0.10) -> PanelDataset:
    """Attach ``citescore_top``/``citescore_bottom`` outcome columns.

    Vectorised form of :func:`citescore_tail_outcome` with the global
    distribution taken over every publication in the dataset.
    """
    pubs = dataset.pubs
    if pubs.empty:
        raise RuntimeError("global CiteScore distribution is empty")
    cs = pubs["citescore"].to_numpy(dtype=float)
    hi, lo = float(np.quantile(cs, 1.0 - q)), float(np.quantile(cs, q))
    avg = pubs.groupby("scholar_id")["citescore"].transform("mean")
    tmp = pubs[["scholar_id", "year"]].copy()
    tmp["citescore_top"] = np.where(cs >= hi, cs, avg)
    tmp["citescore_bottom"] = np.where(cs <= lo, cs, avg)
    yearly = tmp.groupby(["scholar_id", "year"])[["citescore_top", "citescore_bottom"]].mean().reset_index()
    frame = dataset.frame.drop(columns=["citescore_top", "citescore_bottom"], errors="ignore")
    frame = frame.merge(yearly, on=["scholar_id", "year"], how="left")
    frame[["citescore_top", "citescore_bottom"]] = frame[["citescore_top", "citescore_bottom"]].fillna(0.0)
    return dataset.with_frame(frame)
