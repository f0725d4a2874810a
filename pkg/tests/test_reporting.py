import csv
import io
import json

import numpy as np
import pytest

from conftest import make_iv_data
from fundingiv.diagnostics import run_diagnostics
from fundingiv.estimator import DesignMatrix, EstimateResult
from fundingiv.reporting import (
    FOOTNOTE,
    Table,
    coefficient_table,
    diagnostics_table,
    format_cell,
    format_stat,
    ols_table,
    render_tables,
    stars,
    topic_table,
    tsls_table,
)


def _result(coefs, ses, labels=("funded", "const"), df=5000, n=5012, method="tsls"):
    return EstimateResult(labels=tuple(labels), coefficients=np.asarray(coefs, float),
                          covariance=np.diag(np.asarray(ses, float) ** 2), residuals=np.zeros(n),
                          fitted=np.zeros(n), r_squared=0.25, n=n, df=df, cov_type="HC1", method=method)


def test_fixture_cell_string():
    assert format_cell(2.816, 0.331, 1e-5) == "2.816*** (0.331)"
    res = _result([2.816, 1.0], [0.331, 0.5])
    assert res.pvalue("funded") < 0.001
    table = tsls_table(_result([0.4, 0.1], [0.05, 0.02], method="first_stage"), {"article_count": res})
    assert "2.816*** (0.331)" in table.to_text()
    assert table.rows[0] == ("Funding", ["0.400*** (0.050)", "2.816*** (0.331)"])


@pytest.mark.parametrize("p,expected", [
    (0.0009, "***"), (0.001, "**"), (0.0099, "**"), (0.01, "*"), (0.04, "*"), (0.049999, "*"),
    (0.05, ""), (0.079, ""), (0.5, ""), (float("nan"), ""),
])
def test_star_thresholds(p, expected):
    assert stars(p) == expected


def test_format_stat_non_finite():
    assert format_stat(float("inf")) == "inf"
    assert format_stat(float("nan")) == "nan"
    assert format_stat(507.35) == "507.350"


def test_missing_coefficients_render_as_dash():
    a = _result([1.0, 2.0], [0.1, 0.1])
    b = _result([1.0, 3.0, 2.0], [0.1, 0.1, 0.1], labels=("funded", "gender", "const"))
    t = coefficient_table("t", "T", {"a": a, "b": b})
    labels = [r[0] for r in t.rows]
    assert labels == ["Funding", "Gender", "Constant", "Observations", "R-squared"]
    assert t.rows[1][1][0] == "-"


def test_render_formats_and_unknown_format():
    t = ols_table({"article_count": _result([2.0, 1.0], [0.5, 0.1])})
    text = t.render("text")
    assert text.endswith(FOOTNOTE + "\n")
    rows = list(csv.reader(io.StringIO(t.render("csv"))))
    assert rows[0] == ["variable", "Article counts"]
    assert json.loads(t.render("json")) == t.to_dict()
    with pytest.raises(ValueError, match="unknown format"):
        t.render("xlsx")


def test_text_rendering_is_deterministic():
    t = ols_table({"a": _result([2.0, 1.0], [0.5, 0.1])})
    assert t.to_text() == ols_table({"a": _result([2.0, 1.0], [0.5, 0.1])}).to_text()


def test_diagnostics_table_rows():
    y, d, Z, X = make_iv_data(n=300, seed=1)
    des = DesignMatrix(y, d, Z, X, "article_count", "funded", ("employment", "dominance", "familiarity"),
                       ("x1", "x2"))
    report = run_diagnostics({"article_count": des})
    t = diagnostics_table(report)
    labels = [r[0] for r in t.rows]
    assert labels[0].startswith("(1)") and labels[-1].startswith("(5)")
    assert any("chi-sq(3)" in lab for lab in labels)
    sy_row = dict(t.rows)["(4) Stock-Yogo 5% maximal IV relative bias"]
    assert sy_row[0].startswith("13.910")
    assert t.to_dict()["results"] == report.to_dict()


def test_topic_table_layout():
    rows = [{"topic": 0, "keywords": ["labor", "wages"], "count": 3, "share": 0.75},
            {"topic": 1, "keywords": ["climate"], "count": 1, "share": 0.25}]
    t = topic_table(rows, k=2)
    assert t.columns == ["Keyword 1", "Keyword 2", "Counts", "Percentage"]
    assert t.rows[1] == ("1", ["climate", "", "1", "25.00%"])
    assert "lowercased" in t.footnote


@pytest.mark.parametrize("fmt,ext", [("text", "txt"), ("json", "json"), ("csv", "csv")])
def test_render_tables_writes_files(tmp_path, fmt, ext):
    res = {"ols": {"a": _result([1.0, 0.0], [0.1, 0.1], method="ols")},
           "tsls": {"a": _result([2.0, 0.0], [0.2, 0.1])},
           "first_stage": _result([0.5, 0.0], [0.1, 0.1], method="first_stage")}
    paths = render_tables(res, None, fmt, tmp_path)
    assert [p.name for p in paths] == [f"ols_table.{ext}", f"tsls_table.{ext}"]
    assert b"\r\n" not in paths[0].read_bytes()
    with pytest.raises(ValueError):
        render_tables(res, None, "html", tmp_path)


def test_table_dataclass_round_trip():
    t = Table("x", "X", ["c"], [("r", ["1"])], payload={"k": 1})
    assert json.loads(t.to_json())["results"] == {"k": 1}
