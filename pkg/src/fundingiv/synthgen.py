"""Synthetic panels with known treatment effects.

Two generators share one seeding scheme (NumPy ``PCG64`` streams keyed by
``SeedSequence(seed, spawn_key=(scholar,))``, so any subset of scholars is
reproducible on its own):

* :func:`generate` draws a scholar-year design directly: controls,
  instruments and a correlated error pair ``(u, eps)``, with the treatment
  ``d = gamma'z + delta'x + u`` (optionally thresholded) and the outcome
  ``y = b0 + b1 d + b2'x + eps`` plus direct loadings for invalid
  instruments.  This is what the Monte Carlo checks use.
* :func:`generate_records` simulates the raw tables the pipeline ingests
  (scholars, grants, publications, context, roles, events) so the whole
  CLI can be run end to end against a known funding effect.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .diagnostics import (
    STOCK_YOGO,
    cragg_donald_f,
    dwh_endogeneity_test,
    first_stage_robust_f,
    hansen_j,
    kp_rk_lm,
)
from .estimator import DesignMatrix, EstimationError

INSTRUMENTS = ("z1", "z2", "z3")


class ConfigError(ValueError):
    pass


def scholar_rng(seed: int, scholar: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(scholar,))))


@dataclass(frozen=True)
class DgpConfig:
    n_scholars: int = 500
    n_years: int = 20
    true_beta0: float = 1.0
    true_beta1: float = 2.0
    rho: float = 0.5
    gamma: tuple[float, ...] = (0.5, 0.5, 0.5)
    treatment_kind: str = "continuous"
    instrument_validity: tuple[bool, ...] = (True, True, True)
    invalid_loading: float = 0.2
    control_count: int = 12
    control_loading: float = 0.1
    outcome_control_loading: float = 0.1
    noise_sd: float = 1.0
    treatment_threshold: float = 0.0
    scholar_effect_sd: float = 0.0
    start_year: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (-1, 1), got {self.rho}")
        if not self.noise_sd > 0:
            raise ConfigError("noise_sd must be positive")
        if len(self.gamma) != len(self.instrument_validity):
            raise ConfigError("gamma and instrument_validity must have the same length")
        if self.treatment_kind not in ("continuous", "binary_threshold"):
            raise ConfigError(f"unknown treatment_kind {self.treatment_kind!r}")
        if self.n_scholars < 1 or self.n_years < 1 or self.control_count < 0:
            raise ConfigError("sizes must be positive")

    @property
    def n(self) -> int:
        return self.n_scholars * self.n_years

    @property
    def n_instruments(self) -> int:
        return len(self.gamma)


def gamma_for_first_stage_f(target_f: float, n: int, n_instruments: int = 3) -> tuple[float, ...]:
    """Equal instrument loadings giving a population first-stage F of ``target_f``.

    With unit-variance independent instruments and unit-variance ``u``,
    E[F] is about ``1 + n g^2``.
    """
    if target_f < 1:
        raise ValueError("target F must be >= 1")
    g = math.sqrt((target_f - 1.0) / n)
    return tuple([g] * n_instruments)


@dataclass
class SyntheticPanel:
    frame: pd.DataFrame
    config: DgpConfig
    ground_truth: dict

    @property
    def instruments(self) -> list[str]:
        return [f"z{j + 1}" for j in range(self.config.n_instruments)]

    @property
    def controls(self) -> list[str]:
        return [f"x{j + 1}" for j in range(self.config.control_count)]

    def design(self) -> DesignMatrix:
        return DesignMatrix.from_frame(self.frame, "y", "d", self.instruments, self.controls)

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(out / "panel.csv", index=False, float_format="%.17g", lineterminator="\n")
        (out / "ground_truth.json").write_text(json.dumps(self.ground_truth, indent=2, sort_keys=True) + "\n")


def generate(config: DgpConfig) -> SyntheticPanel:
    """Draw one synthetic scholar-year panel from ``config``."""
    T, p, L = config.n_years, config.control_count, config.n_instruments
    width = p + L + 2
    blocks = np.empty((config.n_scholars, T, width))
    effects = np.empty(config.n_scholars)
    for s in range(config.n_scholars):
        rng = scholar_rng(config.seed, s)
        blocks[s] = rng.standard_normal((T, width))
        effects[s] = rng.standard_normal()
    flat = blocks.reshape(-1, width)
    x = flat[:, :p]
    z = flat[:, p:p + L]
    e1, e2 = flat[:, p + L], flat[:, p + L + 1]
    u = config.rho * e1 + math.sqrt(1.0 - config.rho ** 2) * e2
    eps = config.noise_sd * e1
    gamma = np.asarray(config.gamma, dtype=float)
    delta = np.full(p, config.control_loading)
    beta2 = np.full(p, config.outcome_control_loading)
    index = z @ gamma + x @ delta + u + config.scholar_effect_sd * np.repeat(effects, T)
    if config.treatment_kind == "binary_threshold":
        d = (index > config.treatment_threshold).astype(float)
    else:
        d = index
    direct = np.array([0.0 if ok else config.invalid_loading for ok in config.instrument_validity])
    y = config.true_beta0 + config.true_beta1 * d + x @ beta2 + eps + z @ direct

    frame = pd.DataFrame({
        "scholar_id": np.repeat([f"s{s:05d}" for s in range(config.n_scholars)], T),
        "year": np.tile(np.arange(config.start_year, config.start_year + T), config.n_scholars),
        "y": y,
        "d": d,
    })
    for j in range(L):
        frame[f"z{j + 1}"] = z[:, j]
    for j in range(p):
        frame[f"x{j + 1}"] = x[:, j]
    truth = {
        "beta0": config.true_beta0,
        "beta1": config.true_beta1,
        "beta2": beta2.tolist(),
        "rho": config.rho,
        "gamma": list(config.gamma),
        "delta": delta.tolist(),
        "flags": {"instrument_validity": list(config.instrument_validity),
                  "treatment_kind": config.treatment_kind},
        "seed": config.seed,
        "n": config.n,
        "prng": "numpy PCG64, SeedSequence(seed, spawn_key=(scholar_index,))",
    }
    return SyntheticPanel(frame=frame, config=config, ground_truth=truth)


# ---------------------------------------------------------------------------
# Monte Carlo


ESTIMATORS = ("ols", "tsls")
DIAGNOSTICS = ("dwh", "hansen_j", "kp_rk_lm", "cragg_donald", "first_stage_f")


@dataclass
class EstimatorSummary:
    estimates: np.ndarray
    standard_errors: np.ndarray
    covered: np.ndarray
    truth: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.estimates))

    @property
    def mean_bias(self) -> float:
        return self.mean - self.truth

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean((self.estimates - self.truth) ** 2)))

    @property
    def empirical_se(self) -> float:
        if self.estimates.size < 2:
            return 0.0
        return float(np.std(self.estimates, ddof=1))

    @property
    def mc_se(self) -> float:
        """Monte Carlo standard error of the mean estimate."""
        return self.empirical_se / math.sqrt(self.estimates.size)

    @property
    def coverage(self) -> float:
        return float(np.mean(self.covered))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "mean_bias": self.mean_bias, "rmse": self.rmse,
                "empirical_se": self.empirical_se, "mean_se": float(np.mean(self.standard_errors)),
                "coverage": self.coverage, "replications": int(self.estimates.size)}


@dataclass
class MonteCarloSummary:
    config: DgpConfig
    replications: int
    estimators: dict[str, EstimatorSummary] = field(default_factory=dict)
    pvalues: dict[str, np.ndarray] = field(default_factory=dict)
    statistics: dict[str, np.ndarray] = field(default_factory=dict)
    failures: int = 0

    def rejection_rate(self, test: str, alpha: float = 0.05) -> float:
        return float(np.mean(self.pvalues[test] < alpha))

    def to_dict(self, alpha: float = 0.05) -> dict:
        out = {
            "replications": self.replications,
            "failures": self.failures,
            "estimators": {k: v.to_dict() for k, v in self.estimators.items()},
            "rejection_rates": {k: self.rejection_rate(k, alpha) for k in self.pvalues},
        }
        if "cragg_donald" in self.statistics:
            cd = self.statistics["cragg_donald"]
            out["cragg_donald"] = {
                "mean": float(np.mean(cd)),
                "share_above": {name: float(np.mean(cd > table[3])) for name, table in STOCK_YOGO.items()
                                if 3 in table},
            }
        return out


def replication_seeds(seed: int, replications: int) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(replications)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def monte_carlo(config: DgpConfig, replications: int, estimators: Sequence[str] = ESTIMATORS,
                diagnostics: Sequence[str] = (), level: float = 0.95) -> MonteCarloSummary:
    """Repeat generate-and-estimate ``replications`` times.

    Deterministic in ``(config.seed, replications)``.  Replications whose
    design turns out rank deficient are counted in ``failures`` and skipped.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    unknown = set(estimators) - set(ESTIMATORS) | set(diagnostics) - set(DIAGNOSTICS)
    if unknown:
        raise ValueError(f"unknown estimators/diagnostics: {sorted(unknown)}")
    est_vals = {e: ([], []) for e in estimators}
    covered = {e: [] for e in estimators}
    pvals = {t: [] for t in diagnostics if t != "cragg_donald"}
    stats = {t: [] for t in diagnostics}
    failures = 0
    for rep_seed in replication_seeds(config.seed, replications):
        panel = generate(replace(config, seed=rep_seed))
        des = panel.design()
        try:
            fits = {}
            for e in estimators:
                fits[e] = des.ols() if e == "ols" else des.tsls()
            diag = {}
            for t in diagnostics:
                if t == "dwh":
                    r = dwh_endogeneity_test(des.y, des.d, des.Z, des.X).chi2
                elif t == "hansen_j":
                    r = hansen_j(des.y, des.d, des.Z, des.X)
                elif t == "kp_rk_lm":
                    r = kp_rk_lm(des.d, des.Z, des.X)
                elif t == "first_stage_f":
                    r = first_stage_robust_f(des.d, des.Z, des.X)
                else:
                    r = cragg_donald_f(des.d, des.Z, des.X)
                diag[t] = r
        except EstimationError:
            failures += 1
            continue
        for e, fit in fits.items():
            b, s = fit.coef("d"), fit.se("d")
            lo, hi = fit.conf_int("d", level)
            est_vals[e][0].append(b)
            est_vals[e][1].append(s)
            covered[e].append(lo <= config.true_beta1 <= hi)
        for t, r in diag.items():
            if t == "cragg_donald":
                stats[t].append(r)
            else:
                stats[t].append(r.statistic)
                pvals[t].append(r.pvalue)
    summary = MonteCarloSummary(config=config, replications=replications, failures=failures)
    for e in estimators:
        summary.estimators[e] = EstimatorSummary(np.array(est_vals[e][0]), np.array(est_vals[e][1]),
                                                 np.array(covered[e], dtype=bool), config.true_beta1)
    summary.pvalues = {t: np.array(v) for t, v in pvals.items()}
    summary.statistics = {t: np.array(v) for t, v in stats.items()}
    return summary


# ---------------------------------------------------------------------------
# raw-record world


TOPIC_WORDS = (
    ("labor", "wages", "employment", "workers", "unemployment", "market", "earnings", "jobs",
     "firms", "union", "hiring", "occupations"),
    ("climate", "environmental", "water", "land", "emissions", "energy", "carbon", "adaptation",
     "pollution", "forest", "drought", "ecosystem"),
    ("children", "family", "parents", "development", "adolescents", "schooling", "childcare",
     "mothers", "infants", "siblings", "household", "youth"),
    ("voting", "elections", "political", "parties", "campaign", "legislators", "democracy",
     "polls", "candidates", "turnout", "congress", "partisan"),
)
SHARED_WORDS = ("research", "study", "data", "project", "analysis", "social", "new", "effects")
FILLER = ("the", "of", "and", "in", "this", "will", "to", "a", "for", "on")


@dataclass(frozen=True)
class RecordWorldConfig:
    n_scholars: int = 300
    n_affiliations: int = 8
    n_topics: int = 3
    start_year: int = 2000
    end_year: int = 2014
    lookback_start: int = 1995
    true_effect: float = 1.0
    rho: float = 0.5
    employment_loading: float = 1.2
    familiarity_loading: float = 0.3
    award_threshold: float = 1.0
    role_probability: float = 0.25
    applicant_share: float = 0.6
    event_rate: float = 0.5
    low_confidence_share: float = 0.05
    coauthor_probability: float = 0.003
    base_rate: float = 2.5
    outcome_noise_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.n_topics > len(TOPIC_WORDS):
            raise ConfigError(f"at most {len(TOPIC_WORDS)} topics are available")
        if not 0.0 <= self.applicant_share <= 1.0:
            raise ConfigError("applicant_share must lie in [0, 1]")
        if self.end_year < self.start_year or self.lookback_start > self.start_year:
            raise ConfigError("inconsistent year range")


@dataclass
class RecordWorld:
    scholars: pd.DataFrame
    grants: pd.DataFrame
    pubs: pd.DataFrame
    context: pd.DataFrame
    roles: pd.DataFrame
    events: pd.DataFrame
    ground_truth: dict

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name in ("scholars", "grants", "pubs", "context", "roles", "events"):
            df = getattr(self, name).copy()
            if name == "pubs":
                df["coauthor_ids"] = [";".join(c) for c in df["coauthor_ids"]]
            path = out / f"{name}.csv"
            df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
            paths[name] = path
        gt = out / "ground_truth.json"
        gt.write_text(json.dumps(self.ground_truth, indent=2, sort_keys=True) + "\n")
        paths["ground_truth"] = gt
        return paths


def _grant_text(rng: np.random.Generator, topic: int) -> tuple[str, str]:
    words = TOPIC_WORDS[topic]

    def sample(k: int) -> list[str]:
        out = []
        for _ in range(k):
            r = rng.random()
            if r < 0.7:
                out.append(words[rng.integers(len(words))])
            elif r < 0.85:
                out.append(SHARED_WORDS[rng.integers(len(SHARED_WORDS))])
            else:
                out.append(FILLER[rng.integers(len(FILLER))])
        return out

    title = " ".join(sample(5)).capitalize()
    abstract = " ".join(sample(45)).capitalize() + "."
    return title, abstract


def generate_records(config: RecordWorldConfig) -> RecordWorld:
    """Simulate raw input tables with a known effect of funding on article counts.

    Only a share ``applicant_share`` of scholars ever applies.  An
    applicant not currently funded receives a grant in year t when
    ``employment_loading * employment + familiarity_loading * familiarity + u > award_threshold``.
    Yearly article counts are Poisson with mean
    ``base_rate + true_effect * funded + outcome_noise_sd * eps`` where
    ``corr(u, eps) = rho``.
    """
    c = config
    world_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(c.seed, spawn_key=(10**6,))))
    years_all = list(range(c.lookback_start, c.end_year + 1))
    affs = [f"u{a:02d}" for a in range(c.n_affiliations)]

    ctx_rows = []
    for a_i, aff in enumerate(affs):
        qs = int(world_rng.integers(1, 800))
        usn = int(world_rng.integers(1, 1500))
        rep = float(np.clip(world_rng.uniform(5, 95), 1, 100))
        base_pubs, base_cites = world_rng.normal(13, 1.5), world_rng.normal(15, 1.5)
        fld_pubs, fld_cites = world_rng.normal(11, 2), world_rng.normal(14, 2)
        for y in years_all:
            ctx_rows.append({
                "affiliation_id": aff, "year": y, "qs_rank": qs, "usnews_rank": usn,
                "employer_reputation": float(np.clip(rep + world_rng.normal(0, 1), 1, 100)),
                "ln_pubs_affil": base_pubs + 0.02 * (y - c.start_year) + world_rng.normal(0, 0.1),
                "ln_cites_affil": base_cites + 0.03 * (y - c.start_year) + world_rng.normal(0, 0.1),
                "field_id": f"f{a_i % 3}",
                "ln_pubs_field": fld_pubs + world_rng.normal(0, 0.1),
                "ln_cites_field": fld_cites + world_rng.normal(0, 0.1),
            })
    context = pd.DataFrame(ctx_rows)

    event_rows = []
    for aff in affs:
        for y in years_all:
            for _ in range(int(world_rng.poisson(c.event_rate))):
                event_rows.append({"affiliation_id": aff, "event_year": y, "kind": "nsf_day"})
    events = pd.DataFrame(event_rows, columns=["affiliation_id", "event_year", "kind"])
    ev_by_aff = {aff: events.loc[events["affiliation_id"] == aff, "event_year"].to_numpy() for aff in affs}

    scholar_rows, grant_rows, pub_rows, role_rows = [], [], [], []
    aff_members: dict[str, list[str]] = {a: [] for a in affs}
    grant_no = 0
    pub_no = 0
    for s in range(c.n_scholars):
        rng = scholar_rng(c.seed, s)
        sid = f"s{s:05d}"
        aff = affs[int(rng.integers(c.n_affiliations))]
        aff_members[aff].append(sid)
        gender = "male" if rng.random() < 0.7 else "female"
        conf = float(rng.uniform(0.6, 0.94)) if rng.random() < c.low_confidence_share else float(rng.uniform(0.95, 1.0))
        first_pub = int(rng.integers(c.lookback_start - 20, c.start_year + 3))
        topic = int(rng.integers(c.n_topics))
        scholar_rows.append({"scholar_id": sid, "gender": gender, "gender_confidence": round(conf, 4),
                             "first_pub_year": first_pub, "affiliation_id": aff})
        role_year = None
        if rng.random() < c.role_probability:
            role_year = int(rng.integers(1990, c.end_year + 1))
            role_rows.append({"scholar_id": sid, "role_year": role_year,
                              "tier": "leadership" if rng.random() < 0.4 else "membership",
                              "body": ("NSF", "APS", "AAAS")[int(rng.integers(3))]})
        ev = ev_by_aff[aff]
        applies = rng.random() < c.applicant_share
        funded_until = -1
        for y in years_all:
            e1, e2 = rng.standard_normal(2)
            u = c.rho * e1 + math.sqrt(1 - c.rho ** 2) * e2
            in_panel = y >= c.start_year
            funded = y <= funded_until
            if in_panel and applies and not funded:
                employment = 1 if role_year is not None and role_year <= y <= role_year + 4 else 0
                fam = float(np.sum((ev >= y - 3) & (ev <= y - 1)))
                index = c.employment_loading * employment + c.familiarity_loading * fam + u
                if index > c.award_threshold:
                    duration = int(rng.integers(2, 6))
                    funded_until = y + duration - 1
                    funded = True
                    title, abstract = _grant_text(rng, topic)
                    grant_rows.append({"grant_id": f"g{grant_no:06d}", "scholar_id": sid, "award_year": y,
                                       "amount_usd": round(float(np.exp(rng.normal(11.5, 1.0))), 2),
                                       "duration_years": duration, "title": title, "abstract": abstract})
                    grant_no += 1
            lam = c.base_rate + c.true_effect * (1.0 if (funded and in_panel) else 0.0) + c.outcome_noise_sd * e1
            count = int(rng.poisson(max(lam, 0.05))) if y >= first_pub else 0
            for _ in range(count):
                pub_rows.append({"pub_id": f"p{pub_no:07d}", "scholar_id": sid, "year": y,
                                 "citations": round(float(rng.exponential(10.0)), 3),
                                 "citescore": round(float(rng.gamma(2.0, 1.0)), 3),
                                 "coauthor_ids": ("__coauthor__",) if rng.random() < c.coauthor_probability else ()})
                pub_no += 1

    # resolve co-author placeholders to a colleague at the same university
    member_of = {r["scholar_id"]: r["affiliation_id"] for r in scholar_rows}
    for row in pub_rows:
        if row["coauthor_ids"]:
            pool = [m for m in aff_members[member_of[row["scholar_id"]]] if m != row["scholar_id"]]
            row["coauthor_ids"] = (pool[int(world_rng.integers(len(pool)))],) if pool else ()

    truth = {
        "beta1": c.true_effect,
        "rho": c.rho,
        "gamma": [c.employment_loading, 0.0, c.familiarity_loading],
        "flags": {"outcome": "article_count", "treatment_kind": "binary_grant_windows"},
        "seed": c.seed,
        "config": asdict(c),
    }
    return RecordWorld(
        scholars=pd.DataFrame(scholar_rows),
        grants=pd.DataFrame(grant_rows, columns=["grant_id", "scholar_id", "award_year", "amount_usd",
                                                 "duration_years", "title", "abstract"]),
        pubs=pd.DataFrame(pub_rows, columns=["pub_id", "scholar_id", "year", "citations", "citescore",
                                             "coauthor_ids"]),
        context=context,
        roles=pd.DataFrame(role_rows, columns=["scholar_id", "role_year", "tier", "body"]),
        events=events,
        ground_truth=truth,
    )
