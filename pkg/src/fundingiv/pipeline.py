"""Config-driven orchestration of the ingest -> topics -> instruments -> estimate chain.

A :class:`PipelineConfig` is built from defaults, then an optional TOML
file, then command-line overrides (flag > file > default).  Every stage
runs inside :func:`stage`, which turns module exceptions into a
:class:`PipelineError` carrying the module, the operation, the offending
input and the process exit code.
"""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from importlib import metadata
from pathlib import Path
from typing import Any, Iterator, Mapping

import numpy as np
import pandas as pd

from . import __version__
from .diagnostics import DiagnosticsReport, run_diagnostics
from .estimator import COV_TYPES, EstimationError
from .instruments import (
    ALLOWED_WINDOWS,
    DOMINANCE_MODES,
    DOMINANCE_SCOPES,
    TIERS,
    InstrumentSet,
    build_instruments,
    exclude_coauthors,
    read_events,
    read_roles,
)
from .panel_data import DataError, PanelConfig, PanelDataset, add_tail_outcomes, filter_gender_confidence, load_panel
from .reporting import FORMATS, render_tables
from .robustness import placebo_report_json, placebo_run, placebo_summary_frame, window_sensitivity
from .specification import BASE_CONTROLS, INSTRUMENT_COLUMNS, ModelSpec
from .synthgen import ConfigError as SynthConfigError
from .synthgen import DgpConfig, RecordWorldConfig, generate, generate_records
from .topic_model import assign_topics, fit_lda, keyword_table, preprocess

log = logging.getLogger("fundingiv")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_ESTIMATION, EXIT_OTHER = 0, 2, 3, 4, 1
INPUT_NAMES = ("scholars", "grants", "pubs", "context", "roles", "events")
OUTCOMES = ("article_count", "avg_citations", "avg_citescore", "citescore_top", "citescore_bottom")


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    """A failed stage, with enough context to print a machine-readable record."""

    def __init__(self, module: str, operation: str, input: str, message: str, exit_code: int,
                 kind: str = "Error"):
        super().__init__(message)
        self.module = module
        self.operation = operation
        self.input = input
        self.message = message
        self.exit_code = exit_code
        self.kind = kind

    def to_dict(self) -> dict:
        return {"error": {"module": self.module, "operation": self.operation, "input": self.input,
                          "type": self.kind, "message": self.message, "exit_code": self.exit_code}}


def _exit_code_for(exc: BaseException, module: str) -> int:
    if isinstance(exc, (ConfigError, SynthConfigError)):
        return EXIT_CONFIG
    if isinstance(exc, EstimationError):
        return EXIT_ESTIMATION
    if isinstance(exc, (DataError, FileNotFoundError, KeyError)):
        return EXIT_DATA
    if isinstance(exc, (ValueError, RuntimeError, np.linalg.LinAlgError)):
        return EXIT_ESTIMATION if module in ("estimator", "diagnostics", "robustness") else EXIT_DATA
    return EXIT_OTHER


@contextlib.contextmanager
def stage(module: str, operation: str, input: str = "") -> Iterator[None]:
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - every module error is surfaced uniformly
        raise PipelineError(module, operation, input, str(exc), _exit_code_for(exc, module),
                            type(exc).__name__) from exc


# ---------------------------------------------------------------------------
# configuration


@dataclass
class InputPaths:
    scholars: str | None = None
    grants: str | None = None
    pubs: str | None = None
    context: str | None = None
    roles: str | None = None
    events: str | None = None


@dataclass
class PanelOptions:
    start_year: int = 2000
    end_year: int = 2019
    lookback_years: int = 3
    treatment_cap: int = 5
    gender_threshold: float = 0.95
    exclude_coauthors: bool = True
    tail_quantile: float = 0.10


@dataclass
class TopicOptions:
    K: int = 30
    alpha: float | None = None
    eta: float = 0.01
    iterations: int = 1000
    burn_in: int | None = None
    thin: int = 10
    keywords: int = 5
    seed: int | None = None


@dataclass
class InstrumentOptions:
    employment_window: int = 5
    familiarity_window: int = 3
    tier_filter: str = "all"
    dominance_mode: str = "time_reverse"
    dominance_scope: str = "cell"


@dataclass
class EstimateOptions:
    outcomes: list[str] = field(default_factory=lambda: ["article_count", "avg_citations", "avg_citescore"])
    cov_type: str = "HC1"
    initial_performance: bool = True
    controls: list[str] = field(default_factory=lambda: list(BASE_CONTROLS))


@dataclass
class RobustnessOptions:
    placebo_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    placebo_ratio: float = 0.5
    windows: list[int] = field(default_factory=lambda: [3, 5, 7])
    vary_familiarity: bool = False


@dataclass
class SynthOptions:
    kind: str = "records"
    n_scholars: int = 300
    true_effect: float = 1.0
    rho: float = 0.5
    n_years: int = 20
    treatment_kind: str = "continuous"


@dataclass
class PipelineConfig:
    inputs: InputPaths = field(default_factory=InputPaths)
    panel: PanelOptions = field(default_factory=PanelOptions)
    topics: TopicOptions = field(default_factory=TopicOptions)
    instruments: InstrumentOptions = field(default_factory=InstrumentOptions)
    estimate: EstimateOptions = field(default_factory=EstimateOptions)
    robustness: RobustnessOptions = field(default_factory=RobustnessOptions)
    synth: SynthOptions = field(default_factory=SynthOptions)
    out: str = "out"
    seed: int = 0
    formats: list[str] = field(default_factory=lambda: ["text", "json", "csv"])

    SECTIONS = ("inputs", "panel", "topics", "instruments", "estimate", "robustness", "synth")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> "PipelineConfig":
        cfg = cls()
        cfg.update(data, base_dir)
        return cfg

    def update(self, data: Mapping[str, Any], base_dir: Path | None = None) -> None:
        """Overlay ``data`` (nested by section) onto this config; unknown keys are errors."""
        for key, value in data.items():
            if key in self.SECTIONS:
                if not isinstance(value, Mapping):
                    raise ConfigError(f"section [{key}] must be a table")
                section = getattr(self, key)
                names = {f.name for f in dataclasses.fields(section)}
                for k, v in value.items():
                    if k not in names:
                        raise ConfigError(f"unknown key {key}.{k}")
                    if key == "inputs" and v is not None and base_dir is not None and not Path(v).is_absolute():
                        v = str(base_dir / v)
                    setattr(section, k, v)
            elif key == "input_dir":
                root = Path(value)
                if base_dir is not None and not root.is_absolute():
                    root = base_dir / root
                for name in INPUT_NAMES:
                    setattr(self.inputs, name, str(root / f"{name}.csv"))
            elif key in ("out", "seed", "formats"):
                if key == "out" and base_dir is not None and not Path(value).is_absolute():
                    value = str(base_dir / value)
                setattr(self, key, value)
            else:
                raise ConfigError(f"unknown config key {key!r}")

    def set_dotted(self, assignment: str) -> None:
        """Apply one ``section.key=value`` override; the value is parsed as a TOML literal."""
        if "=" not in assignment:
            raise ConfigError(f"override {assignment!r} is not of the form section.key=value")
        path, raw = assignment.split("=", 1)
        value = _parse_literal(raw.strip())
        parts = path.strip().split(".")
        if len(parts) == 1:
            self.update({parts[0]: value})
        elif len(parts) == 2:
            self.update({parts[0]: {parts[1]: value}})
        else:
            raise ConfigError(f"override key {path!r} nests too deep")

    def validate(self, need_inputs: tuple[str, ...] = ()) -> None:
        p, t, i, e, r, s = self.panel, self.topics, self.instruments, self.estimate, self.robustness, self.synth
        checks = [
            (isinstance(self.seed, int) and self.seed >= 0, f"seed must be a non-negative integer, got {self.seed!r}"),
            (p.end_year >= p.start_year, "panel.end_year precedes panel.start_year"),
            (p.lookback_years >= 1 and p.treatment_cap >= 1, "panel.lookback_years and treatment_cap must be >= 1"),
            (0.0 <= p.gender_threshold <= 1.0, "panel.gender_threshold must lie in [0, 1]"),
            (0.0 < p.tail_quantile < 0.5, "panel.tail_quantile must lie in (0, 0.5)"),
            (isinstance(t.K, int) and t.K >= 1, "topics.K must be a positive integer"),
            (t.alpha is None or t.alpha > 0, "topics.alpha must be positive"),
            (t.eta > 0, "topics.eta must be positive"),
            (isinstance(t.iterations, int) and t.iterations >= 1, "topics.iterations must be >= 1"),
            (t.thin >= 1 and t.keywords >= 1, "topics.thin and topics.keywords must be >= 1"),
            (i.employment_window in ALLOWED_WINDOWS, f"instruments.employment_window must be one of {ALLOWED_WINDOWS}"),
            (i.familiarity_window in ALLOWED_WINDOWS,
             f"instruments.familiarity_window must be one of {ALLOWED_WINDOWS}"),
            (i.tier_filter == "all" or i.tier_filter in TIERS, f"instruments.tier_filter must be 'all' or in {TIERS}"),
            (i.dominance_mode in DOMINANCE_MODES, f"instruments.dominance_mode must be one of {DOMINANCE_MODES}"),
            (i.dominance_scope in DOMINANCE_SCOPES, f"instruments.dominance_scope must be one of {DOMINANCE_SCOPES}"),
            (len(e.outcomes) > 0 and all(o in OUTCOMES for o in e.outcomes),
             f"estimate.outcomes must be a non-empty subset of {OUTCOMES}"),
            (e.cov_type in COV_TYPES, f"estimate.cov_type must be one of {COV_TYPES}"),
            (0.0 < r.placebo_ratio < 1.0, "robustness.placebo_ratio must lie in (0, 1)"),
            (all(isinstance(v, int) and v >= 0 for v in r.placebo_seeds), "robustness.placebo_seeds must be >= 0"),
            (len(r.windows) > 0 and all(w in ALLOWED_WINDOWS for w in r.windows),
             f"robustness.windows must be a non-empty subset of {ALLOWED_WINDOWS}"),
            (s.kind in ("records", "panel"), "synth.kind must be 'records' or 'panel'"),
            (s.treatment_kind in ("continuous", "binary_threshold"),
             "synth.treatment_kind must be 'continuous' or 'binary_threshold'"),
            (len(self.formats) > 0 and all(f in FORMATS for f in self.formats), f"formats must be a subset of {FORMATS}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name in need_inputs:
            path = getattr(self.inputs, name)
            if path is None:
                raise ConfigError(f"inputs.{name} is not set")
            if not Path(path).is_file():
                raise PipelineError("cli", "validate_config", path, f"{name} input not found: {path}", EXIT_DATA,
                                    "FileNotFoundError")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        """SHA-256 of the settings that influence results (paths and output dir excluded)."""
        d = self.to_dict()
        d.pop("inputs")
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _parse_literal(raw: str) -> Any:
    import tomli

    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        return raw


def load_config(path: str | Path | None) -> PipelineConfig:
    import tomli

    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomli.loads(path.read_text(encoding="utf-8"))
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return PipelineConfig.from_mapping(data, base_dir=path.parent)


# ---------------------------------------------------------------------------
# pipeline


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def module_versions() -> dict[str, str]:
    out = {"fundingiv": __version__}
    for pkg in ("numpy", "scipy", "pandas", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")


class Pipeline:
    """Lazily evaluated stages over one validated config.

    Each stage is computed at most once; artifacts are written by the
    ``write_*`` methods so a subcommand only emits what it names.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.out = Path(config.out)
        self.row_counts: list[dict] = []
        self.artifacts: list[Path] = []

    # -- helpers -----------------------------------------------------------
    def _count(self, stage_name: str, rows: int, **extra) -> None:
        entry = {"stage": stage_name, "rows": int(rows), **extra}
        self.row_counts.append(entry)
        log.info("%s: %d rows", stage_name, rows)

    def _path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        self.artifacts.append(path)
        return path

    @property
    def topic_seed(self) -> int:
        return self.config.topics.seed if self.config.topics.seed is not None else self.config.seed

    # -- stages ------------------------------------------------------------
    @cached_property
    def raw_panel(self) -> PanelDataset:
        c, inp = self.config.panel, self.config.inputs
        with stage("panel_data", "load_panel", f"{inp.scholars}, {inp.grants}, {inp.pubs}, {inp.context}"):
            pc = PanelConfig(c.start_year, c.end_year, c.lookback_years, c.treatment_cap)
            ds = load_panel(inp.scholars, inp.grants, inp.pubs, inp.context, pc)
        self._count("ingest", len(ds.frame), scholars=int(ds.frame["scholar_id"].nunique()))
        return ds

    @cached_property
    def dataset(self) -> PanelDataset:
        c = self.config.panel
        ds = self.raw_panel
        with stage("panel_data", "filter_gender_confidence", f"threshold={c.gender_threshold}"):
            ds = filter_gender_confidence(ds, c.gender_threshold)
        self._count("gender_filter", len(ds.frame))
        if c.exclude_coauthors:
            with stage("instruments", "exclude_coauthors", str(self.config.inputs.pubs)):
                ds = exclude_coauthors(ds)
            self._count("coauthor_exclusion", len(ds.frame))
        if ds.frame.empty:
            raise PipelineError("panel_data", "build_panel", str(self.config.inputs.scholars),
                                "no scholar-year rows remain after filtering", EXIT_DATA, "DataError")
        if any(o.startswith("citescore_") for o in self.config.estimate.outcomes):
            with stage("panel_data", "add_tail_outcomes", f"q={c.tail_quantile}"):
                ds = add_tail_outcomes(ds, c.tail_quantile)
        return ds

    @cached_property
    def roles(self) -> pd.DataFrame:
        with stage("instruments", "read_roles", str(self.config.inputs.roles)):
            return read_roles(self.config.inputs.roles, self.config.panel.end_year)

    @cached_property
    def events(self) -> pd.DataFrame:
        with stage("instruments", "read_events", str(self.config.inputs.events)):
            return read_events(self.config.inputs.events)

    @cached_property
    def topic_model(self):
        t = self.config.topics
        grants = self.raw_panel.grants
        texts = (grants["title"].fillna("") + " " + grants["abstract"].fillna("")).tolist()
        with stage("topic_model", "preprocess", str(self.config.inputs.grants)):
            corpus = preprocess(texts, doc_ids=grants["grant_id"].tolist())
        with stage("topic_model", "fit_lda", f"K={t.K}, docs={corpus.n_docs}, vocab={corpus.vocab_size}"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                model = fit_lda(corpus, K=t.K, alpha=t.alpha, eta=t.eta, iterations=t.iterations,
                                seed=self.topic_seed, burn_in=t.burn_in, thin=t.thin)
        self._count("topics", corpus.n_docs, empty_docs=len(corpus.empty_docs), vocab=corpus.vocab_size)
        return model

    @cached_property
    def grants_with_topics(self) -> pd.DataFrame:
        grants = self.raw_panel.grants.copy()
        if "topic_id" in grants.columns and grants["topic_id"].notna().all():
            grants["topic_id"] = grants["topic_id"].astype(int)
            return grants
        with stage("topic_model", "assign_topics", str(self.config.inputs.grants)):
            grants["topic_id"] = assign_topics(self.topic_model).astype(int)
        return grants

    def _instrument_options(self) -> dict:
        i = self.config.instruments
        return {"tier_filter": i.tier_filter, "dominance_mode": i.dominance_mode, "dominance_scope": i.dominance_scope}

    @cached_property
    def instrument_set(self) -> InstrumentSet:
        i = self.config.instruments
        with stage("instruments", "build_instruments",
                   f"{self.config.inputs.roles}, {self.config.inputs.events}, grants with topics"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                inst = build_instruments(self.dataset, self.roles, self.events, self.grants_with_topics,
                                         employment_window=i.employment_window,
                                         familiarity_window=i.familiarity_window, **self._instrument_options())
        self._count("instruments", len(inst.keys))
        return inst

    @cached_property
    def analysis(self) -> PanelDataset:
        with stage("instruments", "attach", "panel keys"):
            return self.instrument_set.attach(self.dataset)

    @cached_property
    def spec(self) -> ModelSpec:
        e = self.config.estimate
        return ModelSpec(outcomes=tuple(e.outcomes), instruments=INSTRUMENT_COLUMNS, controls=tuple(e.controls),
                         initial_performance=e.initial_performance)

    @cached_property
    def designs(self) -> dict:
        with stage("estimator", "design_matrix", f"outcomes={list(self.spec.outcomes)}"):
            designs = self.spec.designs(self.analysis.frame)
        self._count("estimate", next(iter(designs.values())).n)
        return designs

    @cached_property
    def estimates(self) -> dict:
        cov = self.config.estimate.cov_type
        out: dict[str, Any] = {"ols": {}, "tsls": {}}
        for outcome, des in self.designs.items():
            with stage("estimator", "ols", f"outcome={outcome}"):
                out["ols"][outcome] = des.ols(cov)
            with stage("estimator", "tsls", f"outcome={outcome}"):
                out["tsls"][outcome] = des.tsls(cov)
        with stage("estimator", "first_stage", "funded"):
            out["first_stage"] = next(iter(self.designs.values())).first_stage(cov)
        return out

    @cached_property
    def diagnostics(self) -> DiagnosticsReport:
        with stage("diagnostics", "run_diagnostics", f"outcomes={list(self.spec.outcomes)}"):
            return run_diagnostics(self.designs)

    # -- artifacts ---------------------------------------------------------
    def write_panel(self) -> None:
        _write_csv(self.dataset.frame, self._path("panel.csv"))
        report = json.dumps(self.dataset.report, indent=2, sort_keys=True, default=_json_default) + "\n"
        self._path("ingest_report.json").write_text(report, encoding="utf-8")

    def write_topics(self) -> None:
        model = self.topic_model
        self._path("topic_model.json").write_text(model.to_json(sort_keys=True) + "\n", encoding="utf-8")
        g = self.grants_with_topics[["grant_id", "scholar_id", "award_year", "topic_id"]]
        _write_csv(g, self._path("grants_with_topics.csv"))
        rows = keyword_table(model, self.config.topics.keywords)
        self._render({}, None, rows)

    def write_instruments(self) -> None:
        self.instrument_set.to_csv(self._path("instruments.csv"))

    def write_estimates(self) -> None:
        self._render(self.estimates, None, None)

    def write_diagnostics(self) -> None:
        self._render({}, self.diagnostics, None)

    def write_placebo(self) -> None:
        r = self.config.robustness
        runs = []
        for seed in r.placebo_seeds:
            with stage("robustness", "placebo_run", f"seed={seed}"):
                runs.append(placebo_run(self.analysis.frame, self.spec, seed, r.placebo_ratio,
                                        self.config.estimate.cov_type))
        self._path("placebo.json").write_text(placebo_report_json(runs), encoding="utf-8")
        _write_csv(placebo_summary_frame(runs), self._path("placebo_summary.csv"))
        self._count("placebo", len(runs))

    def write_windows(self) -> None:
        r, i = self.config.robustness, self.config.instruments
        with stage("robustness", "window_sensitivity", f"windows={list(r.windows)}"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rows = window_sensitivity(self.dataset, self.roles, self.events, self.grants_with_topics, self.spec,
                                          r.windows, r.vary_familiarity, i.familiarity_window,
                                          **self._instrument_options())
        _write_csv(pd.DataFrame(rows), self._path("windows.csv"))

    def write_synth(self) -> None:
        s = self.config.synth
        self.out.mkdir(parents=True, exist_ok=True)
        with stage("synthgen", "generate", f"kind={s.kind}"):
            if s.kind == "records":
                world = generate_records(RecordWorldConfig(
                    n_scholars=s.n_scholars, start_year=self.config.panel.start_year,
                    end_year=self.config.panel.end_year, true_effect=s.true_effect, rho=s.rho,
                    seed=self.config.seed))
                paths = world.write(self.out)
                self.artifacts.extend(paths.values())
                self._count("synth", len(world.scholars))
            else:
                panel = generate(DgpConfig(n_scholars=s.n_scholars, n_years=s.n_years, true_beta1=s.true_effect,
                                           rho=s.rho, treatment_kind=s.treatment_kind,
                                           start_year=self.config.panel.start_year, seed=self.config.seed))
                panel.write(self.out)
                self.artifacts.extend([self.out / "panel.csv", self.out / "ground_truth.json"])
                self._count("synth", len(panel.frame))

    def _render(self, results, diagnostics, topics) -> None:
        for fmt in self.config.formats:
            with stage("reporting", "render_tables", fmt):
                self.artifacts.extend(render_tables(results, diagnostics, fmt, self.out, topics))

    def write_manifest(self, command: str) -> Path:
        inputs = {}
        for name in INPUT_NAMES:
            p = getattr(self.config.inputs, name)
            if p is not None and Path(p).is_file():
                inputs[name] = sha256_file(Path(p))
        arts = {}
        for p in sorted(set(self.artifacts)):
            if p.is_file():
                arts[p.relative_to(self.out).as_posix()] = sha256_file(p)
        manifest = {
            "command": command,
            "config_hash": self.config.hash(),
            "config": {k: v for k, v in self.config.to_dict().items() if k not in ("inputs", "out")},
            "inputs": inputs,
            "artifacts": arts,
            "row_counts": self.row_counts,
            "versions": module_versions(),
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(type(o))


COMMAND_INPUTS = {
    "ingest": ("scholars", "grants", "pubs", "context"),
    "topics": ("scholars", "grants", "pubs", "context"),
    "instruments": INPUT_NAMES,
    "estimate": INPUT_NAMES,
    "diagnose": INPUT_NAMES,
    "placebo": INPUT_NAMES,
    "windows": INPUT_NAMES,
    "run": INPUT_NAMES,
    "synth": (),
}

COMMAND_STEPS = {
    "ingest": ("write_panel",),
    "topics": ("write_topics",),
    "instruments": ("write_instruments",),
    "estimate": ("write_estimates",),
    "diagnose": ("write_diagnostics",),
    "placebo": ("write_placebo",),
    "windows": ("write_windows",),
    "synth": ("write_synth",),
    "run": ("write_panel", "write_topics", "write_instruments", "write_estimates", "write_diagnostics",
            "write_placebo", "write_windows"),
}


def run_pipeline(config: PipelineConfig, command: str = "run", dry_run: bool = False) -> Pipeline | None:
    """Validate ``config`` and, unless ``dry_run``, execute ``command``'s steps."""
    if command not in COMMAND_STEPS:
        raise PipelineError("cli", "dispatch", command, f"unknown command {command!r}", EXIT_CONFIG, "ConfigError")
    with stage("cli", "validate_config", "config"):
        config.validate(COMMAND_INPUTS[command])
    if dry_run:
        log.info("dry run: configuration is valid, nothing written")
        return None
    pipe = Pipeline(config)
    for step in COMMAND_STEPS[command]:
        getattr(pipe, step)()
    pipe.write_manifest(command)
    return pipe
