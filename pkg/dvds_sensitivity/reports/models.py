from dataclasses import dataclass
from typing import Optional

from msm.models import Estimand, OutcomeKind


class OutputFormat:
    JSON = 'json'
    CSV = 'csv'

    CHOICES = (JSON, CSV)


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything ``analyze`` needs; ``outcome_kind`` is None when it should be inferred."""

    data: str
    treatment: str
    outcome: str
    covariates: object
    lambdas: tuple
    seed: int
    k: int
    epsilon: float
    alpha: float
    estimand: Estimand = Estimand.ATE
    outcome_kind: Optional[OutcomeKind] = None
    learner_config: Optional[dict] = None
    out: Optional[str] = None
    fmt: str = OutputFormat.JSON
    threads: int = 1

    @property
    def roles(self):
        return {'treatment': self.treatment, 'outcome': self.outcome, 'covariates': self.covariates}


@dataclass(frozen=True)
class CoverageConfig:
    spec_name: str
    lambdas: tuple
    reps: int
    n: int
    seed: int
    k: int
    epsilon: float
    alpha: float
    estimand: Estimand = Estimand.ATE
    learner_config: Optional[dict] = None
    oracle_nuisances: bool = False
    out: Optional[str] = None
    records_out: Optional[str] = None
    threads: int = 1
    dispatch: str = 'local'
