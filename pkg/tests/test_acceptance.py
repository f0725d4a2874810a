"""Acceptance criteria, one test per criterion.

Each test prints (and records for the terminal summary) a single
``CRITERION n PASS|FAIL`` line with the measured quantities.
"""

import itertools
import time
import warnings

import numpy as np
import pandas as pd
import pytest

from conftest import ACCEPTANCE
from fundingiv.cli import main
from fundingiv.diagnostics import STOCK_YOGO
from fundingiv.estimator import EstimateResult, tsls
from fundingiv.instruments import DegenerateSeriesWarning, dominance_cells, political_hegemony, project_familiarity
from fundingiv.reporting import format_cell, tsls_table
from fundingiv.robustness import placebo_run
from fundingiv.specification import ModelSpec
from fundingiv.synthgen import DgpConfig, gamma_for_first_stage_f, generate, monte_carlo
from fundingiv.topic_model import Corpus, fit_lda


def record(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"CRITERION {number} {'PASS' if passed else 'FAIL'}: {title} | {detail}"
    print(line)
    ACCEPTANCE.append(line)


# ---------------------------------------------------------------------------
# 1. oracle equivalence


def _manual_two_stage(y, d, Z, X):
    n = len(y)
    W = np.column_stack([Z, X, np.ones(n)])
    dhat = W @ np.linalg.solve(W.T @ W, W.T @ d)
    Dh = np.column_stack([dhat, X, np.ones(n)])
    b = np.linalg.solve(Dh.T @ Dh, Dh.T @ y)
    e = y - np.column_stack([d, X, np.ones(n)]) @ b
    bread = np.linalg.inv(Dh.T @ Dh)
    k = Dh.shape[1]
    meat = np.zeros((k, k))
    for i in range(n):
        meat += e[i] ** 2 * np.outer(Dh[i], Dh[i])
    V = bread @ meat @ bread * n / (n - k)
    return b, np.sqrt(np.diag(V))


def test_criterion_1_oracle_equivalence():
    panel = generate(DgpConfig(n_scholars=20, n_years=10, control_count=3, seed=11))
    f = panel.frame
    assert len(f) == 200
    y, d = f["y"].to_numpy(), f["d"].to_numpy()
    Z, X = f[panel.instruments].to_numpy(), f[panel.controls].to_numpy()
    t0 = time.perf_counter()
    res = tsls(y, d, Z, X, cov_type="HC1")
    elapsed = time.perf_counter() - t0
    b, se = _manual_two_stage(y, d, Z, X)
    db = np.max(np.abs(res.coefficients - b))
    dse = np.max(np.abs(res.standard_errors - se))
    ok = db <= 1e-8 and dse <= 1e-8 and elapsed < 1.0
    record(1, "2SLS equals manual two-stage", ok, f"max|db|={db:.2e} max|dse|={dse:.2e} time={elapsed:.3f}s")
    assert ok


# ---------------------------------------------------------------------------
# 2. bias and consistency


def test_criterion_2_bias_and_coverage():
    cfg = DgpConfig(n_scholars=500, n_years=20, true_beta1=2.0, rho=0.5, seed=2024)
    t0 = time.perf_counter()
    s = monte_carlo(cfg, 200)
    elapsed = time.perf_counter() - t0
    iv, ols = s.estimators["tsls"], s.estimators["ols"]
    ols_bias_in_se = abs(ols.mean_bias) / ols.mc_se
    ok = (abs(iv.mean - 2.0) <= 0.05 and ols_bias_in_se > 3 and 0.92 <= iv.coverage <= 0.98
          and elapsed < 120 and s.failures == 0)
    record(2, "2SLS consistency, OLS bias, CI coverage", ok,
           f"mean 2SLS={iv.mean:.4f} OLS bias={ols.mean_bias:.4f} ({ols_bias_in_se:.0f} MC SE) "
           f"coverage={iv.coverage:.3f} time={elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 3. diagnostic size and power

N5000 = dict(n_scholars=250, n_years=20)


def _rate(test, reps=500, **kw):
    s = monte_carlo(DgpConfig(**N5000, **kw), reps, estimators=(), diagnostics=(test,))
    assert s.failures == 0
    return s.rejection_rate(test)


def test_criterion_3_dwh_and_hansen_j():
    t0 = time.perf_counter()
    dwh_null = _rate("dwh", rho=0.0, seed=31)
    dwh_alt = _rate("dwh", rho=0.5, seed=32)
    j_null = _rate("hansen_j", seed=33)
    j_alt = _rate("hansen_j", instrument_validity=(False, True, True), seed=34)
    elapsed = time.perf_counter() - t0
    ok = dwh_null <= 0.08 and dwh_alt >= 0.90 and j_null <= 0.08 and j_alt >= 0.50
    record(3, "DWH and Hansen J size/power", ok,
           f"DWH rho=0 {dwh_null:.3f}, rho=0.5 {dwh_alt:.3f}; J valid {j_null:.3f}, one invalid {j_alt:.3f}; "
           f"time={elapsed:.1f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="the stated bound asks a valid LM test to reject a true null in >= 92% "
                                       "of samples; see the non-rejection rate printed by the test")
def test_criterion_3_kp_pure_noise_literal():
    t0 = time.perf_counter()
    reject = _rate("kp_rk_lm", gamma=(0.0, 0.0, 0.0), seed=35)
    elapsed = time.perf_counter() - t0
    fails_to_reject = 1.0 - reject
    ok = fails_to_reject <= 0.08
    record(3, "KP rk LM fails to reject <= 8% under pure-noise instruments", ok,
           f"non-rejection={fails_to_reject:.3f} rejection={reject:.3f} time={elapsed:.1f}s")
    assert ok


def test_kp_size_under_pure_noise_instruments():
    reject = _rate("kp_rk_lm", gamma=(0.0, 0.0, 0.0), seed=35)
    assert reject <= 0.08


# ---------------------------------------------------------------------------
# 4. weak instruments


def test_criterion_4_weak_instrument_detection():
    weak_cfg = DgpConfig(**N5000, gamma=gamma_for_first_stage_f(5.0, 5000), seed=41)
    weak = monte_carlo(weak_cfg, 200, estimators=(), diagnostics=("cragg_donald",)).statistics["cragg_donald"]
    strong = monte_carlo(DgpConfig(**N5000, seed=42), 200, estimators=(),
                         diagnostics=("cragg_donald",)).statistics["cragg_donald"]
    below = float(np.mean(weak < STOCK_YOGO["relative_bias_5pct"][3]))
    above = float(np.mean(strong > STOCK_YOGO["size_10pct"][3]))
    ok = below >= 0.90 and above >= 0.99
    record(4, "Cragg-Donald flags weak instruments", ok,
           f"F~5: share below 13.91={below:.3f} (mean CD {weak.mean():.2f}); strong: share above 22.30={above:.3f}")
    assert ok


# ---------------------------------------------------------------------------
# 5. instrument constructors


def _brute_dominance(awards, years):
    out = {}
    for key, ays in awards.items():
        cum, running = [], sum(a < years[0] for a in ays)
        for y in years:
            running += sum(a == y for a in ays)
            cum.append(running)
        rev = cum[::-1]
        lo, hi = min(rev), max(rev)
        out[key] = [0.0 if hi == lo else (v - lo) / (hi - lo) for v in rev]
    return out


def test_criterion_5_instrument_constructors():
    years = list(range(2000, 2020))
    awards = {
        ("u1", 0): [2001, 2003, 2003, 2010], ("u1", 1): [2015], ("u1", 2): [1998, 2005, 2019],
        ("u2", 0): [2000, 2000, 2012], ("u2", 1): [2004, 2008, 2009, 2011, 2018], ("u2", 2): [2007],
        ("u3", 0): [1996], ("u3", 1): [2002, 2013], ("u3", 2): [2006, 2006, 2006, 2016],
        ("u4", 0): [2017, 2018], ("u4", 1): [2000, 2019], ("u4", 2): [2009, 2010, 2011, 2012, 2013, 2014],
    }
    rows, aff = [], {}
    for (u, n), ays in awards.items():
        for j, y in enumerate(ays):
            sid = f"{u}-{n}-{j}"
            aff[sid] = u
            rows.append({"grant_id": sid, "scholar_id": sid, "award_year": y, "topic_id": n})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSeriesWarning)
        cells = dominance_cells(pd.DataFrame(rows), years, aff)
    oracle = _brute_dominance(awards, years)
    dom_exact = set(cells) == set(oracle) and all(list(cells[k]) == oracle[k] for k in oracle)
    in_unit = all(((v >= 0) & (v <= 1)).all() for v in cells.values())

    panel = pd.DataFrame([(s, a, y) for s, a in (("a", "u1"), ("b", "u2"), ("c", "u3")) for y in years],
                         columns=["scholar_id", "affiliation_id", "year"])
    roles = pd.DataFrame([("a", 2005, "leadership", "NSF"), ("a", 2008, "membership", "APS"),
                          ("c", 1995, "membership", "AAAS")], columns=["scholar_id", "role_year", "tier", "body"])
    events = pd.DataFrame([("u1", 2003), ("u1", 2004), ("u1", 2004), ("u2", 2010), ("u3", 1999)],
                          columns=["affiliation_id", "event_year"]).assign(kind="nsf_day")
    emp_ok = fam_ok = True
    for w in (3, 5, 7):
        emp = political_hegemony(roles, panel, window=w)
        fam = project_familiarity(events, panel, window=w)
        for i, r in enumerate(panel.itertuples(index=False)):
            active = any(s == r.scholar_id and ry <= r.year <= ry + w - 1 for s, ry, _, _ in roles.itertuples(index=False))
            count = sum(a == r.affiliation_id and r.year - w <= y <= r.year - 1 for a, y, _ in events.itertuples(index=False))
            emp_ok &= emp[i] == int(active)
            fam_ok &= fam[i] == count * (1 if count > 0 else 0)
    ok = dom_exact and in_unit and emp_ok and fam_ok
    record(5, "instrument constructors match oracles", ok,
           f"dominance exact={dom_exact} in[0,1]={in_unit} hegemony={emp_ok} familiarity={fam_ok}")
    assert ok


# ---------------------------------------------------------------------------
# 6. LDA recovery


def _lda_corpus(seed, V=50, M=300, N=100, K=3, alpha=0.3):
    rng = np.random.default_rng(seed)
    phi = rng.dirichlet(np.ones(V), size=K)
    docs = []
    for _ in range(M):
        theta = rng.dirichlet(np.full(K, alpha))
        z = rng.choice(K, size=N, p=theta)
        docs.append(np.array([rng.choice(V, p=phi[k]) for k in z]))
    return phi, Corpus.from_token_ids(docs, V)


def test_criterion_6_lda_recovery():
    successes, worst_time, tvs = 0, 0.0, []
    for seed in range(10):
        phi, corpus = _lda_corpus(seed)
        t0 = time.perf_counter()
        model = fit_lda(corpus, K=3, alpha=0.3, eta=0.01, iterations=500, seed=seed)
        worst_time = max(worst_time, time.perf_counter() - t0)
        tv = min(max(0.5 * np.abs(model.topic_word[list(p)] - phi).sum(axis=1))
                 for p in itertools.permutations(range(3)))
        tvs.append(tv)
        successes += tv <= 0.15
    ok = successes >= 9 and worst_time < 30
    record(6, "LDA recovers generating topics", ok,
           f"{successes}/10 seeds with max TV <= 0.15 (worst TV {max(tvs):.3f}); slowest fit {worst_time:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 7. placebo nullity


def test_criterion_7_placebo_nullity():
    spec = ModelSpec(outcomes=("y",), treatment="d", instruments=("z1", "z2", "z3"),
                     controls=("x1", "x2", "x3"), initial_performance=False)
    contains = {"treated": [], "control": []}
    for seed in range(200):
        cfg = DgpConfig(n_scholars=200, n_years=10, true_beta1=0.0, rho=0.5, treatment_kind="binary_threshold",
                        treatment_threshold=1.0, scholar_effect_sd=1.0, control_count=3, seed=seed)
        run = placebo_run(generate(cfg).frame, spec, seed, with_diagnostics=False)
        assert not run.errors
        for sub, res in run.results.items():
            lo, hi = res["y"].conf_int("d")
            contains[sub].append(lo <= 0.0 <= hi)
    rates = {k: float(np.mean(v)) for k, v in contains.items()}
    ok = all(r >= 0.90 for r in rates.values())
    record(7, "placebo CI contains zero", ok,
           f"treated-group splits {rates['treated']:.3f}, control-group splits {rates['control']:.3f} over 200 seeds")
    assert ok


# ---------------------------------------------------------------------------
# 8. determinism


def test_criterion_8_byte_identical_runs(tmp_path):
    data = tmp_path / "data"
    cfg = tmp_path / "config.toml"
    cfg.write_text(
        "seed = 7\n"
        "[panel]\nend_year = 2012\n"
        "[topics]\nK = 4\niterations = 300\n"
        "[robustness]\nplacebo_seeds = [0, 1, 2]\n"
        "[synth]\nn_scholars = 200\n"
    )
    assert main(["synth", "--config", str(cfg), "--out", str(data), "-q"]) == 0
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["run", "--config", str(cfg), "--input-dir", str(data), "--out", str(out), "-q"]) == 0
    names = sorted(p.name for p in outs[0].iterdir())
    same_names = names == sorted(p.name for p in outs[1].iterdir())
    differing = [n for n in names if (outs[0] / n).read_bytes() != (outs[1] / n).read_bytes()]
    ok = same_names and not differing
    record(8, "identical config gives byte-identical artifacts", ok,
           f"{len(names)} artifacts compared, differing={differing}")
    assert ok


# ---------------------------------------------------------------------------
# 9. formatting


def test_criterion_9_cell_format():
    res = EstimateResult(labels=("funded", "const"), coefficients=np.array([2.816, 0.5]),
                         covariance=np.diag([0.331 ** 2, 0.01]), residuals=np.zeros(10), fitted=np.zeros(10),
                         r_squared=0.1, n=10_000, df=9_998, cov_type="HC1", method="2sls")
    first = EstimateResult(labels=("employment", "const"), coefficients=np.array([0.3, 0.1]),
                           covariance=np.diag([0.01, 0.01]), residuals=np.zeros(10), fitted=np.zeros(10),
                           r_squared=0.1, n=10_000, df=9_998, cov_type="HC1", method="first_stage")
    cell = format_cell(2.816, 0.331, 1e-4)
    table = tsls_table(first, {"article_count": res})
    rendered = dict(table.rows)["Funding"][1]
    ok = cell == "2.816*** (0.331)" and rendered == "2.816*** (0.331)"
    record(9, "table cell string", ok, f"format_cell={cell!r} rendered={rendered!r}")
    assert ok
