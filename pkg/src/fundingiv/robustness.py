"""Pseudo-group placebo regressions and instrument-window sensitivity."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .diagnostics import DiagnosticsReport, cragg_donald_f, first_stage_robust_f, min_eigenvalue_stat, run_diagnostics
from .estimator import EstimateResult, EstimationError
from .instruments import ALLOWED_WINDOWS, build_instruments
from .panel_data import PanelDataset
from .specification import ModelSpec

PSEUDO_TREATED = "pseudo_treated"
PSEUDO_CONTROL = "pseudo_control"
SUBGROUPS = ("treated", "control")


@dataclass(frozen=True)
class Split:
    seed: int
    ratio: float
    group: dict[str, str]
    label: dict[str, str]

    def members(self, group: str, label: str | None = None) -> list[str]:
        return sorted(s for s, g in self.group.items()
                      if g == group and (label is None or self.label[s] == label))


def _frame(panel) -> pd.DataFrame:
    return panel.frame if isinstance(panel, PanelDataset) else panel


def pseudo_split(panel, seed: int, ratio: float = 0.5, treatment: str = "funded",
                 unit: str = "scholar_id") -> Split:
    """Split ever-treated and never-treated units into pseudo-treated / pseudo-control halves.

    Assignment is per unit so a scholar's years stay together.  Each group
    is shuffled independently with a ``PCG64`` stream seeded by ``seed``.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    frame = _frame(panel)
    ever = frame.groupby(unit)[treatment].max()
    rng = np.random.Generator(np.random.PCG64(seed))
    group, label = {}, {}
    for name, ids in (("treated", sorted(ever.index[ever > 0])), ("control", sorted(ever.index[ever <= 0]))):
        if len(ids) < 2:
            raise ValueError(f"{name} group has {len(ids)} scholar(s); need at least 2 to split")
        order = rng.permutation(len(ids))
        k = int(round(ratio * len(ids)))
        k = min(max(k, 1), len(ids) - 1)
        for rank, idx in enumerate(order):
            sid = ids[idx]
            group[sid] = name
            label[sid] = PSEUDO_TREATED if rank < k else PSEUDO_CONTROL
    return Split(seed=seed, ratio=ratio, group=group, label=label)


def relabel(frame: pd.DataFrame, split: Split, subgroup: str, treatment: str = "funded",
            unit: str = "scholar_id") -> pd.DataFrame:
    """Rows of one original group with only the treatment column rewritten.

    In the treated group pseudo-control members become unfunded; in the
    control group pseudo-treated members become funded in every year.
    """
    if subgroup not in SUBGROUPS:
        raise ValueError(f"subgroup must be one of {SUBGROUPS}")
    ids = set(split.members(subgroup))
    sub = frame[frame[unit].isin(ids)].copy()
    labels = sub[unit].map(split.label)
    if subgroup == "treated":
        sub.loc[labels == PSEUDO_CONTROL, treatment] = 0
    else:
        sub.loc[labels == PSEUDO_TREATED, treatment] = 1
    return sub.reset_index(drop=True)


@dataclass
class PlaceboRun:
    seed: int
    split: Split
    results: dict[str, dict[str, EstimateResult]] = field(default_factory=dict)
    diagnostics: dict[str, DiagnosticsReport] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def summary_rows(self, treatment: str = "funded") -> list[dict]:
        rows = []
        for subgroup in SUBGROUPS:
            for outcome, res in self.results.get(subgroup, {}).items():
                rows.append({"seed": self.seed, "outcome": outcome, "subgroup": subgroup,
                             "coef": res.coef(treatment), "se": res.se(treatment), "p": res.pvalue(treatment)})
        return rows

    def to_dict(self, treatment: str = "funded") -> dict:
        return {
            "seed": self.seed,
            "ratio": self.split.ratio,
            "groups": {g: {lab: len(self.split.members(g, lab)) for lab in (PSEUDO_TREATED, PSEUDO_CONTROL)}
                       for g in SUBGROUPS},
            "results": {g: {o: r.to_dict() for o, r in res.items()} for g, res in self.results.items()},
            "diagnostics": {g: d.to_dict() for g, d in self.diagnostics.items()},
            "errors": dict(self.errors),
            "summary": self.summary_rows(treatment),
        }


def placebo_run(panel, spec: ModelSpec, seed: int, ratio: float = 0.5,
                cov_type: str = "HC1", with_diagnostics: bool = True) -> PlaceboRun:
    """2SLS (and optionally the diagnostic battery) on both relabelled groups.

    Instruments and controls are reused unchanged; a failure in one
    subgroup is recorded and the other still runs.
    """
    frame = _frame(panel)
    split = pseudo_split(frame, seed, ratio, spec.treatment)
    run = PlaceboRun(seed=seed, split=split)
    for subgroup in SUBGROUPS:
        sub = relabel(frame, split, subgroup, spec.treatment)
        res = {}
        try:
            designs = spec.designs(sub)
            for outcome, des in designs.items():
                res[outcome] = des.tsls(cov_type)
            if with_diagnostics:
                run.diagnostics[subgroup] = run_diagnostics(designs)
        except EstimationError as exc:
            run.errors[subgroup] = str(exc)
        run.results[subgroup] = res
    return run


def placebo_report_json(runs: Sequence[PlaceboRun], treatment: str = "funded") -> str:
    return json.dumps([r.to_dict(treatment) for r in runs], indent=2, sort_keys=True, default=_default) + "\n"


def _default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(type(o))


def placebo_summary_frame(runs: Sequence[PlaceboRun], treatment: str = "funded") -> pd.DataFrame:
    rows = [row for r in runs for row in r.summary_rows(treatment)]
    return pd.DataFrame(rows, columns=["seed", "outcome", "subgroup", "coef", "se", "p"])


# ---------------------------------------------------------------------------


def first_stage_strength(frame: pd.DataFrame, spec: ModelSpec, outcome: str | None = None) -> dict:
    des = spec.design(frame, outcome or spec.outcomes[0])
    rf = first_stage_robust_f(des.d, des.Z, des.X)
    return {
        "robust_f": rf.statistic,
        "robust_f_p": rf.pvalue,
        "min_eigenvalue": min_eigenvalue_stat(des.d, des.Z, des.X),
        "cragg_donald_f": cragg_donald_f(des.d, des.Z, des.X),
        "n": des.n,
    }


def window_sensitivity(dataset: PanelDataset, roles, events, grants_with_topics: pd.DataFrame,
                       spec: ModelSpec, windows: Sequence[int] = (3, 5, 7), vary_familiarity: bool = False,
                       familiarity_window: int = 3, **instrument_options) -> list[dict]:
    """Rebuild the employment (and optionally familiarity) instrument per window
    and tabulate first-stage strength for each."""
    windows = list(windows)
    if not windows or any(w not in ALLOWED_WINDOWS for w in windows):
        raise ValueError(f"windows must be a non-empty subset of {ALLOWED_WINDOWS}")
    rows = []
    for w in windows:
        inst = build_instruments(dataset, roles, events, grants_with_topics, employment_window=w,
                                 familiarity_window=w if vary_familiarity else familiarity_window,
                                 **instrument_options)
        frame = inst.attach(dataset).frame
        row = {"window": w, **first_stage_strength(frame, spec)}
        rows.append(row)
    return rows
