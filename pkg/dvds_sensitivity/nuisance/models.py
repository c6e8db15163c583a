from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from msm.exceptions import ParameterDomainError
from msm.models import OutcomeKind


class LearnerKind(str, Enum):
    LOGISTIC = 'logistic'
    RIDGE = 'ridge'
    PINBALL_LINEAR = 'pinball_linear'
    CONSTANT = 'constant'
    ORACLE_INJECTION = 'oracle_injection'


class FeatureExpansion(str, Enum):
    RAW = 'raw'
    PAIRWISE = 'raw_plus_pairwise_interactions'


class RhoStrategy(str, Enum):
    DIRECT = 'direct'
    SEPARATE = 'separate'


class Target(str, Enum):
    PROPENSITY = 'propensity'
    QUANTILE = 'quantile'
    MEAN = 'mean'
    RHO = 'rho'


@dataclass(frozen=True)
class NuisanceQuery:
    """What an injected oracle is asked to evaluate.

    Injected callables have the signature ``fn(covariates, query)`` and
    return one value per covariate row.
    """

    target: Target
    arm: Optional[int] = None
    alpha: Optional[float] = None
    side: Optional[int] = None
    params: Optional[object] = None


@dataclass(frozen=True)
class LearnerSpec:
    kind: LearnerKind
    regularization: float = 1e-4
    max_iter: int = 100
    tol: float = 1e-8
    expansion: FeatureExpansion = FeatureExpansion.PAIRWISE
    oracle: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'kind', LearnerKind(self.kind))
        object.__setattr__(self, 'expansion', FeatureExpansion(self.expansion))
        if not self.regularization >= 0:
            raise ParameterDomainError(f'regularization must be >= 0, got {self.regularization!r}')
        if int(self.max_iter) < 1:
            raise ParameterDomainError(f'max_iter must be >= 1, got {self.max_iter!r}')
        if not self.tol > 0:
            raise ParameterDomainError(f'tol must be > 0, got {self.tol!r}')
        if (self.kind is LearnerKind.ORACLE_INJECTION) != (self.oracle is not None):
            raise ParameterDomainError('an oracle callable is required for, and only for, oracle_injection learners')

    @classmethod
    def injected(cls, fn):
        return cls(kind=LearnerKind.ORACLE_INJECTION, oracle=fn)


# Subgradient descent needs a longer schedule than Newton.
PINBALL_DEFAULTS = {'max_iter': 500, 'tol': 1e-6}


@dataclass(frozen=True)
class LearnerBundle:
    """One learner per nuisance problem plus the ϱ fitting strategy."""

    propensity: LearnerSpec
    quantile: LearnerSpec
    regression: LearnerSpec
    strategy: RhoStrategy = RhoStrategy.SEPARATE

    def __post_init__(self):
        object.__setattr__(self, 'strategy', RhoStrategy(self.strategy))

    @property
    def is_injected(self):
        return any(
            spec.kind is LearnerKind.ORACLE_INJECTION
            for spec in (self.propensity, self.quantile, self.regression)
        )


def default_bundle(outcome_kind=OutcomeKind.CONTINUOUS):
    if OutcomeKind(outcome_kind) is OutcomeKind.BINARY:
        regression = LearnerSpec(kind=LearnerKind.LOGISTIC)
    else:
        regression = LearnerSpec(kind=LearnerKind.RIDGE)
    return LearnerBundle(
        propensity=LearnerSpec(kind=LearnerKind.LOGISTIC),
        quantile=LearnerSpec(kind=LearnerKind.PINBALL_LINEAR, **PINBALL_DEFAULTS),
        regression=regression,
        strategy=RhoStrategy.SEPARATE,
    )


@dataclass(frozen=True)
class FittedPredictor:
    """An immutable evaluation function over covariate rows."""

    kind: LearnerKind
    rows_used: int
    predict: Callable = field(repr=False, compare=False)

    def __call__(self, covariates):
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        values = np.asarray(self.predict(covariates), dtype=float)
        return np.broadcast_to(values, (covariates.shape[0],)).copy()

    @classmethod
    def constant(cls, kind, rows_used, value):
        value = float(value)
        return cls(kind=kind, rows_used=rows_used, predict=lambda covariates: np.full(covariates.shape[0], value))
