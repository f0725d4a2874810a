"""Instrument series aligned to the scholar-year panel.

* employment  - 0/1 indicator of holding an NSF / APS / AAAS role, active
  for ``window`` years starting in the appointment year.
* dominance   - per (university, topic) cell: cumulative award counts,
  reversed along time and min-max normalised.
* familiarity - training events hosted by the scholar's university over the
  ``window`` years before the observation year, times the occurrence dummy.
"""

from __future__ import annotations

import warnings
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .panel_data import DataError, PanelDataset, SchemaError

ALLOWED_WINDOWS = (3, 5, 7)
TIERS = ("leadership", "membership")
BODIES = ("NSF", "APS", "AAAS")
DOMINANCE_MODES = ("time_reverse", "multiplicative_inverse")
DOMINANCE_SCOPES = ("cell", "global")
EARLIEST_ROLE_YEAR = 1990


class DegenerateSeriesWarning(UserWarning):
    """A series to be min-max normalised has max == min."""


@dataclass(frozen=True)
class RoleRecord:
    scholar_id: str
    role_year: int
    tier: str
    body: str

    def __post_init__(self):
        if self.tier not in TIERS:
            raise DataError(f"tier must be one of {TIERS}, got {self.tier!r}")
        if self.body not in BODIES:
            raise DataError(f"body must be one of {BODIES}, got {self.body!r}")


@dataclass(frozen=True)
class TrainingEventRecord:
    affiliation_id: str
    event_year: int
    kind: str = "nsf_day"


@dataclass
class InstrumentSet:
    keys: pd.DataFrame
    employment: np.ndarray
    dominance: np.ndarray
    familiarity: np.ndarray

    def __post_init__(self):
        n = len(self.keys)
        for name in ("employment", "dominance", "familiarity"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
        if np.any(self.dominance < 0) or np.any(self.dominance > 1):
            raise ValueError("dominance must lie in [0, 1]")

    def to_frame(self) -> pd.DataFrame:
        out = self.keys[["scholar_id", "year"]].reset_index(drop=True).copy()
        out["employment"] = self.employment.astype(int)
        out["dominance"] = self.dominance
        out["familiarity"] = self.familiarity
        return out

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g", lineterminator="\n")

    def attach(self, dataset: PanelDataset) -> PanelDataset:
        frame = dataset.frame.drop(columns=["employment", "dominance", "familiarity"], errors="ignore")
        if not (frame[["scholar_id", "year"]].reset_index(drop=True)
                .equals(self.keys[["scholar_id", "year"]].reset_index(drop=True))):
            raise ValueError("instrument keys are not aligned with the panel")
        frame = frame.reset_index(drop=True)
        frame["employment"] = self.employment.astype(int)
        frame["dominance"] = self.dominance
        frame["familiarity"] = self.familiarity
        return dataset.with_frame(frame)


# ---------------------------------------------------------------------------
# readers


def read_roles(path, end_year: int | None = None) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"roles.csv: no such file {path}")
    df = pd.read_csv(path, dtype={"scholar_id": str, "tier": str, "body": str}, keep_default_na=False)
    missing = [c for c in ("scholar_id", "role_year", "tier", "body") if c not in df.columns]
    if missing:
        raise SchemaError(f"roles.csv: missing required column(s) {missing}", missing)
    df["role_year"] = pd.to_numeric(df["role_year"], errors="coerce")
    if df["role_year"].isna().any():
        raise SchemaError("roles.csv: column 'role_year' must be numeric", ["role_year"])
    df["role_year"] = df["role_year"].astype(int)
    for col, allowed in (("tier", TIERS), ("body", BODIES)):
        bad = ~df[col].isin(allowed)
        if bad.any():
            raise SchemaError(f"roles.csv: column {col!r} has values outside {allowed}", [col])
    hi = end_year if end_year is not None else np.inf
    out_of_range = (df["role_year"] < EARLIEST_ROLE_YEAR) | (df["role_year"] > hi)
    if out_of_range.any():
        raise DataError(f"roles.csv: role_year outside [{EARLIEST_ROLE_YEAR}, {end_year}] for "
                        f"{sorted(df.loc[out_of_range, 'scholar_id'].unique())}")
    return df[["scholar_id", "role_year", "tier", "body"]]


def read_events(path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"events.csv: no such file {path}")
    df = pd.read_csv(path, dtype={"affiliation_id": str, "kind": str}, keep_default_na=False)
    missing = [c for c in ("affiliation_id", "event_year", "kind") if c not in df.columns]
    if missing:
        raise SchemaError(f"events.csv: missing required column(s) {missing}", missing)
    df["event_year"] = pd.to_numeric(df["event_year"], errors="coerce")
    if df["event_year"].isna().any():
        raise SchemaError("events.csv: column 'event_year' must be numeric", ["event_year"])
    df["event_year"] = df["event_year"].astype(int)
    return df[["affiliation_id", "event_year", "kind"]]


def _frame_of(panel) -> pd.DataFrame:
    return panel.frame if isinstance(panel, PanelDataset) else panel


def _records_frame(records, columns: Sequence[str]) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    rows = [[getattr(r, c) for c in columns] for r in records]
    return pd.DataFrame(rows, columns=list(columns))


def _check_window(window: int) -> None:
    if window not in ALLOWED_WINDOWS:
        raise ValueError(f"window must be one of {ALLOWED_WINDOWS}, got {window}")


# ---------------------------------------------------------------------------
# employment


def political_hegemony(roles, panel, window: int = 5, tier_filter: str = "all",
                       bodies: Sequence[str] | None = None) -> np.ndarray:
    """0/1 series, 1 in [role_year, role_year + window - 1] for any matching role."""
    _check_window(window)
    if tier_filter != "all" and tier_filter not in TIERS:
        raise ValueError(f"tier_filter must be 'all' or one of {TIERS}")
    frame = _frame_of(panel)
    roles = _records_frame(roles, ("scholar_id", "role_year", "tier", "body"))
    if tier_filter != "all":
        roles = roles[roles["tier"] == tier_filter]
    if bodies is not None:
        roles = roles[roles["body"].isin(list(bodies))]
    active: set[tuple[str, int]] = set()
    for sid, year in zip(roles["scholar_id"], roles["role_year"]):
        for k in range(window):
            active.add((sid, int(year) + k))
    return np.fromiter(((s, int(y)) in active for s, y in zip(frame["scholar_id"], frame["year"])),
                       dtype=int, count=len(frame))


# ---------------------------------------------------------------------------
# dominance


def minmax_normalize(series) -> np.ndarray:
    """(x - min) / (max - min); a constant series maps to zeros with a warning."""
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("cannot normalise an empty series")
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        warnings.warn("constant series: max == min, returning zeros", DegenerateSeriesWarning, stacklevel=2)
        return np.zeros_like(x)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def _cell_awards(grants: pd.DataFrame, affiliation_of: dict[str, str]) -> pd.DataFrame:
    g = grants.copy()
    if g["topic_id"].isna().any():
        raise DataError("every grant needs a topic_id before building dominance")
    if "affiliation_id" not in g.columns:
        g["affiliation_id"] = g["scholar_id"].map(affiliation_of)
    g = g[g["affiliation_id"].notna()]
    g["topic_id"] = g["topic_id"].astype(int)
    return g


def dominance_cells(grants_with_topics: pd.DataFrame, years: Sequence[int], affiliation_of: dict[str, str],
                    mode: str = "time_reverse", scope: str = "cell") -> dict[tuple[str, int], np.ndarray]:
    """Normalised dominance series over ``years`` for every (university, topic) cell with awards.

    Awards before ``years[0]`` seed the cumulative count.  Cells without
    any award are absent from the mapping (their value is 0).
    """
    if mode not in DOMINANCE_MODES:
        raise ValueError(f"mode must be one of {DOMINANCE_MODES}")
    if scope not in DOMINANCE_SCOPES:
        raise ValueError(f"scope must be one of {DOMINANCE_SCOPES}")
    years = list(years)
    if years != list(range(years[0], years[-1] + 1)):
        raise ValueError("panel years must be contiguous")
    g = _cell_awards(grants_with_topics, affiliation_of)
    raw: dict[tuple[str, int], np.ndarray] = {}
    for (aff, topic), cell in g.groupby(["affiliation_id", "topic_id"], sort=True):
        award_years = cell["award_year"].to_numpy(dtype=int)
        if not np.any(award_years <= years[-1]):
            continue
        prior = int(np.sum(award_years < years[0]))
        counts = np.array([np.sum(award_years == y) for y in years], dtype=float)
        cum = prior + np.cumsum(counts)
        if mode == "time_reverse":
            values = cum[::-1].copy()
        else:
            values = 1.0 / (1.0 + cum)
        raw[(aff, int(topic))] = values
    if scope == "cell":
        out = {}
        for key, v in raw.items():
            if v.max() == v.min():
                warnings.warn(f"cell {key}: cumulative award series is constant; dominance set to 0",
                              DegenerateSeriesWarning, stacklevel=2)
                out[key] = np.zeros_like(v)
            else:
                out[key] = (v - v.min()) / (v.max() - v.min())
        return out
    if not raw:
        return {}
    stacked = np.concatenate(list(raw.values()))
    lo, hi = stacked.min(), stacked.max()
    if hi == lo:
        warnings.warn("global dominance series is constant; set to 0", DegenerateSeriesWarning, stacklevel=2)
        return {k: np.zeros_like(v) for k, v in raw.items()}
    return {k: (v - lo) / (hi - lo) for k, v in raw.items()}


def scholar_topic_by_year(grants_with_topics: pd.DataFrame, years: Sequence[int]) -> dict[str, dict[int, int]]:
    """Topic a scholar is attached to in each year.

    The topic of the most recent grant awarded up to that year; before the
    first award, the first grant's topic.
    """
    out: dict[str, dict[int, int]] = {}
    for sid, g in grants_with_topics.sort_values(["award_year", "grant_id"]).groupby("scholar_id", sort=True):
        award_years = g["award_year"].to_numpy(dtype=int)
        topics = g["topic_id"].to_numpy().astype(int)
        per_year = {}
        for y in years:
            idx = np.searchsorted(award_years, y, side="right") - 1
            per_year[y] = int(topics[max(idx, 0)])
        out[sid] = per_year
    return out


def imitation_isomorphism(grants_with_topics: pd.DataFrame, panel, mode: str = "time_reverse",
                          scope: str = "cell", years: Sequence[int] | None = None) -> np.ndarray:
    """Dominance series in [0, 1] aligned to the panel rows."""
    frame = _frame_of(panel)
    if years is None:
        if isinstance(panel, PanelDataset):
            years = panel.config.years
        else:
            years = list(range(int(frame["year"].min()), int(frame["year"].max()) + 1))
    years = list(years)
    affiliation_of = dict(zip(frame["scholar_id"], frame["affiliation_id"]))
    if isinstance(panel, PanelDataset):
        affiliation_of = {**dict(zip(panel.scholars["scholar_id"], panel.scholars["affiliation_id"])),
                          **affiliation_of}
    cells = dominance_cells(grants_with_topics, years, affiliation_of, mode, scope)
    topic_of = scholar_topic_by_year(grants_with_topics, years)
    y0 = years[0]
    out = np.zeros(len(frame))
    for i, (sid, aff, year) in enumerate(zip(frame["scholar_id"], frame["affiliation_id"], frame["year"])):
        topics = topic_of.get(sid)
        if topics is None or year not in topics:
            continue
        series = cells.get((aff, topics[year]))
        if series is not None:
            out[i] = series[int(year) - y0]
    return out


# ---------------------------------------------------------------------------
# familiarity


def project_familiarity(events, panel, window: int = 3) -> np.ndarray:
    """Events at the scholar's university in [t - window, t - 1], times the occurrence dummy."""
    _check_window(window)
    frame = _frame_of(panel)
    events = _records_frame(events, ("affiliation_id", "event_year", "kind"))
    per_aff: dict[str, np.ndarray] = defaultdict(lambda: np.zeros(0, dtype=int))
    for aff, g in events.groupby("affiliation_id"):
        per_aff[aff] = np.sort(g["event_year"].to_numpy(dtype=int))
    out = np.zeros(len(frame))
    for i, (aff, t) in enumerate(zip(frame["affiliation_id"], frame["year"])):
        ev = per_aff.get(aff)
        if ev is None or ev.size == 0:
            continue
        count = int(np.searchsorted(ev, t - 1, side="right") - np.searchsorted(ev, t - window, side="left"))
        occurred = 1 if count > 0 else 0
        out[i] = count * occurred
    return out


# ---------------------------------------------------------------------------
# co-author exclusion


def coauthor_pairs(pubs: pd.DataFrame) -> set[frozenset[str]]:
    pairs: set[frozenset[str]] = set()
    for sid, co in zip(pubs["scholar_id"], pubs["coauthor_ids"]):
        people = sorted({sid, *co})
        for a_i in range(len(people)):
            for b_i in range(a_i + 1, len(people)):
                pairs.add(frozenset((people[a_i], people[b_i])))
    return pairs


def exclude_coauthors(panel: PanelDataset, pubs: pd.DataFrame | None = None,
                      funded_ids: Iterable[str] | None = None) -> PanelDataset:
    """Drop non-funded scholars who co-authored with a funded scholar at their own university."""
    pubs = panel.pubs if pubs is None else pubs
    funded = set(panel.funded_scholars() if funded_ids is None else funded_ids)
    affiliation_of = dict(zip(panel.scholars["scholar_id"], panel.scholars["affiliation_id"]))
    removed = set()
    for pair in coauthor_pairs(pubs):
        a, b = tuple(pair)
        for j, i in ((a, b), (b, a)):
            if j not in funded and i in funded and affiliation_of.get(j) is not None \
                    and affiliation_of.get(j) == affiliation_of.get(i):
                removed.add(j)
    keep = ~panel.frame["scholar_id"].isin(removed)
    entry = {"stage": "coauthor_exclusion", "dropped_scholars": len(set(panel.frame.loc[~keep, "scholar_id"])),
             "scholars": sorted(set(panel.frame.loc[~keep, "scholar_id"]))}
    return panel.with_frame(panel.frame[keep], entry)


# ---------------------------------------------------------------------------


def build_instruments(panel: PanelDataset, roles, events, grants_with_topics: pd.DataFrame,
                      employment_window: int = 5, familiarity_window: int = 3, tier_filter: str = "all",
                      dominance_mode: str = "time_reverse", dominance_scope: str = "cell") -> InstrumentSet:
    frame = panel.frame
    return InstrumentSet(
        keys=frame[["scholar_id", "year"]].reset_index(drop=True),
        employment=political_hegemony(roles, panel, employment_window, tier_filter),
        dominance=imitation_isomorphism(grants_with_topics, panel, dominance_mode, dominance_scope),
        familiarity=project_familiarity(events, panel, familiarity_window),
    )
