"""Which panel columns play which role in the IV regressions."""

from __future__ import annotations

from dataclasses import dataclass, field

import pandas as pd

from .estimator import DesignMatrix

INSTRUMENT_COLUMNS = ("employment", "dominance", "familiarity")
BASE_CONTROLS = (
    "year", "gender", "academic_age", "ln_pubs_field", "ln_cites_field", "ln_pubs_affil",
    "ln_cites_affil", "qs_rank", "usnews_rank", "employer_reputation",
)
INITIAL_FOR_OUTCOME = {
    "article_count": "initial_article_count",
    "avg_citations": "initial_avg_citations",
    "avg_citescore": "initial_avg_citescore",
    "citescore_top": "initial_avg_citescore",
    "citescore_bottom": "initial_avg_citescore",
}


@dataclass(frozen=True)
class ModelSpec:
    outcomes: tuple[str, ...] = ("article_count", "avg_citations", "avg_citescore")
    treatment: str = "funded"
    instruments: tuple[str, ...] = INSTRUMENT_COLUMNS
    controls: tuple[str, ...] = BASE_CONTROLS
    initial_performance: bool = True
    extra_controls: tuple[str, ...] = field(default_factory=tuple)

    def controls_for(self, outcome: str) -> list[str]:
        cols = [*self.controls, *self.extra_controls]
        if self.initial_performance and outcome in INITIAL_FOR_OUTCOME:
            cols.append(INITIAL_FOR_OUTCOME[outcome])
        return cols

    def design(self, frame: pd.DataFrame, outcome: str, treatment: str | None = None) -> DesignMatrix:
        return DesignMatrix.from_frame(frame, outcome, treatment or self.treatment, list(self.instruments),
                                       self.controls_for(outcome))

    def designs(self, frame: pd.DataFrame) -> dict[str, DesignMatrix]:
        return {o: self.design(frame, o) for o in self.outcomes}
