import json
import shutil

import pandas as pd
import pytest

from fundingiv.cli import main
from fundingiv.pipeline import (
    EXIT_CONFIG,
    EXIT_DATA,
    EXIT_ESTIMATION,
    EXIT_OK,
    ConfigError,
    PipelineConfig,
    load_config,
)

FAST = ["--set", "panel.end_year=2010", "--set", "topics.K=3", "--set", "topics.iterations=150",
        "--set", "topics.alpha=0.3", "--set", "robustness.placebo_seeds=[0, 1]"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["synth", "--out", str(out), "--seed", "1", "--set", "panel.end_year=2010",
                 "--set", "synth.n_scholars=250", "-q"]) == EXIT_OK
    return out


def _error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)["error"]


def test_synth_writes_all_inputs(data_dir):
    for name in ("scholars", "grants", "pubs", "context", "roles", "events"):
        assert (data_dir / f"{name}.csv").is_file()
    manifest = json.loads((data_dir / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert "scholars.csv" in manifest["artifacts"]


def test_dry_run_writes_nothing(data_dir, tmp_path):
    out = tmp_path / "dry"
    assert main(["run", "--input-dir", str(data_dir), "--out", str(out), "--dry-run", "-q"]) == EXIT_OK
    assert not out.exists()


def test_missing_input_names_path(tmp_path, capsys):
    code = main(["ingest", "--input-dir", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o"), "-q"])
    assert code == EXIT_DATA
    err = _error(capsys)
    assert "nowhere" in err["message"] and err["exit_code"] == EXIT_DATA


@pytest.mark.parametrize("override", ["estimate.cov_type=HC9", "instruments.employment_window=4",
                                      "panel.nonsense=1", "topics.K=0"])
def test_bad_config_exits_2(data_dir, tmp_path, capsys, override):
    code = main(["run", "--input-dir", str(data_dir), "--out", str(tmp_path / "o"), "--set", override, "-q"])
    assert code == EXIT_CONFIG
    assert _error(capsys)["exit_code"] == EXIT_CONFIG


def test_unknown_key_in_file_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[panel]\nstart_yr = 2000\n")
    assert main(["ingest", "--config", str(cfg), "-q"]) == EXIT_CONFIG
    assert "start_yr" in _error(capsys)["message"]


def test_argparse_error_exits_2():
    assert main(["bogus"]) == EXIT_CONFIG


def test_rank_deficient_instruments_exit_4(data_dir, tmp_path, capsys):
    inputs = tmp_path / "in"
    shutil.copytree(data_dir, inputs)
    pd.DataFrame(columns=["scholar_id", "role_year", "tier", "body"]).to_csv(inputs / "roles.csv", index=False)
    code = main(["estimate", "--input-dir", str(inputs), "--out", str(tmp_path / "o"), *FAST, "-q"])
    assert code == EXIT_ESTIMATION
    err = _error(capsys)
    assert err["module"] == "estimator" and "employment" in err["message"]


def test_precedence_flag_over_file_over_default(tmp_path):
    cfg_path = tmp_path / "c.toml"
    cfg_path.write_text("seed = 5\nout = \"from_file\"\n[topics]\nK = 7\niterations = 20\n")
    cfg = load_config(cfg_path)
    assert cfg.seed == 5 and cfg.topics.K == 7
    assert cfg.out == str(tmp_path / "from_file")
    assert cfg.topics.eta == PipelineConfig().topics.eta
    cfg.set_dotted("topics.K=9")
    assert cfg.topics.K == 9
    with pytest.raises(ConfigError):
        cfg.set_dotted("topics")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_config_hash_ignores_paths():
    a, b = PipelineConfig(), PipelineConfig()
    b.out = "elsewhere"
    b.inputs.scholars = "x.csv"
    assert a.hash() == b.hash()
    b.seed = 3
    assert a.hash() != b.hash()


@pytest.fixture(scope="module")
def full_run(data_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--input-dir", str(data_dir), "--out", str(out), "--seed", "1", *FAST, "-q"]) == EXIT_OK
    return out


def test_full_run_artifacts(full_run):
    names = {p.name for p in full_run.iterdir()}
    expected = {"panel.csv", "ingest_report.json", "topic_model.json", "grants_with_topics.csv", "instruments.csv",
                "placebo.json", "placebo_summary.csv", "windows.csv", "manifest.json"}
    for stem in ("ols_table", "tsls_table", "diagnostics", "topics"):
        expected |= {f"{stem}.txt", f"{stem}.json", f"{stem}.csv"}
    assert expected <= names
    manifest = json.loads((full_run / "manifest.json").read_text())
    assert set(manifest) == {"command", "config_hash", "config", "inputs", "artifacts", "row_counts", "versions"}
    assert set(manifest["inputs"]) == {"scholars", "grants", "pubs", "context", "roles", "events"}
    counts = {r["stage"]: r["rows"] for r in manifest["row_counts"]}
    assert counts["ingest"] >= counts["gender_filter"] >= counts["coauthor_exclusion"] == counts["estimate"] > 0


def test_full_run_recovers_known_effect(full_run, data_dir):
    truth = json.loads((data_dir / "ground_truth.json").read_text())["beta1"]
    table = json.loads((full_run / "tsls_table.json").read_text())["results"]
    res = table["2SLS 2nd stage: Article counts"]
    i = res["labels"].index("funded")
    b, se = res["coefficients"][i], res["standard_errors"][i]
    assert abs(b - truth) <= 4 * se
    assert res["pvalues"][i] < 0.05


def test_full_run_is_byte_deterministic(full_run, data_dir, tmp_path):
    again = tmp_path / "again"
    assert main(["run", "--input-dir", str(data_dir), "--out", str(again), "--seed", "1", *FAST, "-q"]) == EXIT_OK
    first = sorted(p.name for p in full_run.iterdir())
    assert first == sorted(p.name for p in again.iterdir())
    for name in first:
        assert (full_run / name).read_bytes() == (again / name).read_bytes(), name


def test_single_format_subcommand(data_dir, tmp_path):
    out = tmp_path / "est"
    assert main(["estimate", "--input-dir", str(data_dir), "--out", str(out), "--format", "csv", *FAST,
                 "-q"]) == EXIT_OK
    assert {p.name for p in out.iterdir()} == {"ols_table.csv", "tsls_table.csv", "manifest.json"}
