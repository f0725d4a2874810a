"""Regression and diagnostics tables in text, JSON and CSV.

Coefficient cells read ``coef<stars> (se)`` with stars at p < 0.05 / 0.01 /
0.001.  Rendering is deterministic: fixed row order, fixed float format,
sorted JSON keys, ``\\n`` line endings.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .diagnostics import DiagnosticsReport
from .estimator import INTERCEPT, EstimateResult

FORMATS = ("text", "json", "csv")
EXTENSIONS = {"text": "txt", "json": "json", "csv": "csv"}
FOOTNOTE = "* p < 0.05; ** p < 0.01; *** p < 0.001. The values in parentheses are standard errors."

DISPLAY_NAMES = {
    "funded": "Funding",
    "initial_article_count": "Initial ln (Article counts)",
    "initial_avg_citations": "Initial ln (Citations)",
    "initial_avg_citescore": "Initial ln (Citescore)",
    "ln_grant_amount": "ln (Grant amount)",
    "academic_age": "Academic age",
    "year": "Year",
    "gender": "Gender",
    "ln_pubs_field": "ln (Publications fields)",
    "ln_cites_field": "ln (Citations fields)",
    "ln_pubs_affil": "ln (Publications affiliations)",
    "ln_cites_affil": "ln (Citations affiliations)",
    "employer_reputation": "Employer reputation",
    "usnews_rank": "US NEWS ranking",
    "qs_rank": "QS ranking",
    "dominance": "Isomorphism",
    "employment": "Political hegemony",
    "familiarity": "NSF training",
    INTERCEPT: "Constant",
    "article_count": "Article counts",
    "avg_citations": "Citation counts",
    "avg_citescore": "Citescore",
    "citescore_top": "Top 10% CiteScore",
    "citescore_bottom": "Bottom 10% CiteScore",
}


def display(name: str) -> str:
    return DISPLAY_NAMES.get(name, name)


def stars(p: float) -> str:
    if p is None or (isinstance(p, float) and math.isnan(p)):
        return ""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def format_cell(coef: float, se: float, p: float, digits: int = 3) -> str:
    return f"{coef:.{digits}f}{stars(p)} ({se:.{digits}f})"


def format_stat(stat: float, p: float | None = None, digits: int = 3) -> str:
    if not math.isfinite(stat):
        return "inf" if stat > 0 else "nan"
    return f"{stat:.{digits}f}{stars(p) if p is not None else ''}"


@dataclass
class Table:
    name: str
    title: str
    columns: list[str]
    rows: list[tuple[str, list[str]]]
    footnote: str = FOOTNOTE
    payload: dict = field(default_factory=dict)

    def to_text(self) -> str:
        header = ["Variables", *self.columns]
        body = [[label, *cells] for label, cells in self.rows]
        widths = [max(len(r[j]) for r in [header, *body]) for j in range(len(header))]
        lines = [self.title, ""]
        fmt = lambda r: "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
        lines.append(fmt(header))
        lines.append("  ".join("-" * w for w in widths))
        lines.extend(fmt(r) for r in body)
        if self.footnote:
            lines += ["", self.footnote]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variable", *self.columns])
        for label, cells in self.rows:
            w.writerow([label, *cells])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"name": self.name, "title": self.title, "columns": self.columns,
                "rows": [{"label": lab, "cells": cells} for lab, cells in self.rows],
                "footnote": self.footnote, "results": self.payload}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "text":
            return self.to_text()
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def coefficient_table(name: str, title: str, columns: Mapping[str, EstimateResult],
                      first: Sequence[str] = ("funded",), digits: int = 3) -> Table:
    """One column per fit, rows are the union of coefficient labels.

    Rows listed in ``first`` lead, the intercept trails, everything else
    keeps first-seen order.  Absent coefficients render as ``-``.
    """
    order: list[str] = [r for r in first if any(r in res.labels for res in columns.values())]
    for res in columns.values():
        for lab in res.labels:
            if lab not in order and lab != INTERCEPT:
                order.append(lab)
    if any(INTERCEPT in res.labels for res in columns.values()):
        order.append(INTERCEPT)
    rows = []
    for lab in order:
        cells = []
        for res in columns.values():
            if lab in res.labels:
                cells.append(format_cell(res.coef(lab), res.se(lab), res.pvalue(lab), digits))
            else:
                cells.append("-")
        rows.append((display(lab), cells))
    rows.append(("Observations", [str(res.n) for res in columns.values()]))
    rows.append(("R-squared", [format_stat(res.r_squared) for res in columns.values()]))
    payload = {col: res.to_dict() for col, res in columns.items()}
    return Table(name, title, [display(c) if c in DISPLAY_NAMES else c for c in columns], rows, payload=payload)


def ols_table(ols_results: Mapping[str, EstimateResult], digits: int = 3) -> Table:
    return coefficient_table("ols_table", "OLS regression results.", ols_results, digits=digits)


def tsls_table(first: EstimateResult, second: Mapping[str, EstimateResult], digits: int = 3) -> Table:
    cols = {"2SLS 1st stage: Funding": first}
    cols.update({f"2SLS 2nd stage: {display(o)}": r for o, r in second.items()})
    table = coefficient_table("tsls_table", "2SLS regression results.", cols, digits=digits)
    return table


def diagnostics_table(report: DiagnosticsReport, digits: int = 3) -> Table:
    outcomes = list(report.dwh) or list(report.hansen_j)
    cols = [display(o) for o in outcomes] or ["value"]
    blank = [""] * len(cols)

    def first_only(text: str) -> list[str]:
        return [text] + [""] * (len(cols) - 1)

    rows: list[tuple[str, list[str]]] = []
    rows.append(("(1) Endogeneity: Hausman robust score chi2(1)",
                 [format_stat(report.dwh[o].chi2.statistic, report.dwh[o].chi2.pvalue, digits)
                  if o in report.dwh else "-" for o in outcomes] or blank))
    rows.append(("(1) Endogeneity: Hausman robust regression F",
                 [format_stat(report.dwh[o].f.statistic, report.dwh[o].f.pvalue, digits)
                  if o in report.dwh else "-" for o in outcomes] or blank))
    rows.append(("(2) Over-identification: Hansen J",
                 [format_stat(report.hansen_j[o].statistic, None, digits) + f" (p={report.hansen_j[o].pvalue:.3f})"
                  if o in report.hansen_j else "-" for o in outcomes] or blank))
    if report.kp_rk_lm is not None:
        rows.append((f"(3) Under-identification: Kleibergen-Paap rk LM chi-sq({report.kp_rk_lm.df[0]})",
                     first_only(format_stat(report.kp_rk_lm.statistic, report.kp_rk_lm.pvalue, digits))))
    rows.append(("(4) Weak identification: Cragg-Donald Wald F",
                 first_only(format_stat(report.cragg_donald_f, None, digits))))
    sy = report.stock_yogo

    def crit(name: str) -> str:
        entry = sy.get(name, {})
        if entry.get("critical_value") is None:
            return "no critical value"
        return f"{entry['critical_value']:.{digits}f} ({entry['verdict']})"

    rows.append(("(4) Stock-Yogo 5% maximal IV relative bias", first_only(crit("relative_bias_5pct"))))
    if report.first_stage_robust_f is not None:
        rf = report.first_stage_robust_f
        rows.append(("(5) 2SLS first stage: Robust F", first_only(format_stat(rf.statistic, rf.pvalue, digits))))
    rows.append(("(5) 2SLS first stage: Minimum eigenvalue statistic",
                 first_only(format_stat(report.min_eigenvalue, None, digits))))
    rows.append(("(5) 2SLS size of nominal 5% Wald test (10% critical value)", first_only(crit("size_10pct"))))
    rows.append(("(5) 2SLS size of nominal 5% Wald test (15% critical value)", first_only(crit("size_15pct"))))
    return Table("diagnostics", "Results of validity and robustness tests of IVs.", cols, rows,
                 payload=report.to_dict())


def topic_table(rows: Sequence[Mapping], k: int = 5) -> Table:
    out = []
    for r in rows:
        words = list(r["keywords"]) + [""] * (k - len(r["keywords"]))
        out.append((str(r["topic"]), [*words[:k], str(r["count"]), f"{100 * r['share']:.2f}%"]))
    cols = [f"Keyword {j + 1}" for j in range(k)] + ["Counts", "Percentage"]
    return Table("topics", "Funding topics and keywords.", cols, out, footnote="All letters have been lowercased.",
                 payload={"topics": [dict(r) for r in rows]})


def render_tables(results: Mapping, diagnostics: DiagnosticsReport | None, format: str,
                  out_dir, topics: Sequence[Mapping] | None = None, digits: int = 3) -> list[Path]:
    """Write the OLS, 2SLS, diagnostics (and optional topic) tables to ``out_dir``.

    ``results`` holds ``"ols"`` and ``"tsls"`` (outcome -> EstimateResult)
    and ``"first_stage"`` (EstimateResult); missing parts are skipped.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables = []
    if results.get("ols"):
        tables.append(ols_table(results["ols"], digits))
    if results.get("tsls") and results.get("first_stage") is not None:
        tables.append(tsls_table(results["first_stage"], results["tsls"], digits))
    if diagnostics is not None:
        tables.append(diagnostics_table(diagnostics, digits))
    if topics:
        tables.append(topic_table(topics))
    written = []
    for t in tables:
        path = out / f"{t.name}.{EXTENSIONS[format]}"
        path.write_text(t.render(format), encoding="utf-8", newline="\n")
        written.append(path)
    return written
