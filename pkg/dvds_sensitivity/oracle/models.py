from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from cvar.models import DiscreteDist
from msm.exceptions import ParameterDomainError
from msm.models import Estimand, NuisanceSet, OutcomeKind, frozen_array

PROB_TOLERANCE = 1e-12
PAPER_DIMENSION = 5


@dataclass(frozen=True, eq=False)
class DiscreteDGP:
    """A finite joint law of (X, Z, Y).

    ``levels`` holds one covariate vector per level; ``outcome_dists[l][z]``
    is the law of Y given X = levels[l] and Z = z.
    """

    levels: np.ndarray
    level_probs: np.ndarray
    propensity: np.ndarray
    outcome_dists: tuple

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        if levels.ndim == 1:
            levels = levels.reshape(-1, 1)
        object.__setattr__(self, 'levels', frozen_array(levels))
        object.__setattr__(self, 'level_probs', frozen_array(self.level_probs))
        object.__setattr__(self, 'propensity', frozen_array(self.propensity))
        object.__setattr__(self, 'outcome_dists', tuple(tuple(pair) for pair in self.outcome_dists))

        count = self.levels.shape[0]
        if self.level_probs.shape != (count,) or self.propensity.shape != (count,):
            raise ParameterDomainError('levels, level probabilities and propensities must have matching lengths')
        if len(self.outcome_dists) != count or any(len(pair) != 2 for pair in self.outcome_dists):
            raise ParameterDomainError('every level needs one outcome distribution per arm')
        if np.any(self.level_probs < 0) or abs(self.level_probs.sum() - 1.0) > PROB_TOLERANCE:
            raise ParameterDomainError('level probabilities must be nonnegative and sum to 1')
        if np.any(self.propensity <= 0) or np.any(self.propensity >= 1):
            raise ParameterDomainError('propensities must lie strictly inside (0, 1)')
        if not all(isinstance(dist, DiscreteDist) for pair in self.outcome_dists for dist in pair):
            raise ParameterDomainError('outcome distributions must be DiscreteDist instances')

    @property
    def n_levels(self):
        return self.levels.shape[0]

    def dist(self, level, arm):
        return self.outcome_dists[level][arm]

    def arm_prob(self, level, arm):
        """P(Z = arm | X = levels[level])."""
        e = float(self.propensity[level])
        return e if arm == 1 else 1.0 - e

    def level_of(self, covariates):
        """Level index of each covariate row; rows must match a level exactly."""
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        matches = np.all(covariates[:, None, :] == self.levels[None, :, :], axis=2)
        if not np.all(matches.any(axis=1)):
            raise ParameterDomainError('covariate rows must coincide with a level of the discrete law')
        return matches.argmax(axis=1)

    @property
    def is_binary(self):
        return all(np.all(np.isin(dist.atoms, (0.0, 1.0))) for pair in self.outcome_dists for dist in pair)


class GenerativeKind(str, Enum):
    PAPER_BINARY = 'paper_binary'
    PAPER_CONTINUOUS = 'paper_continuous'
    CUSTOM_DISCRETE = 'custom_discrete'


PAPER_KINDS = (GenerativeKind.PAPER_BINARY, GenerativeKind.PAPER_CONTINUOUS)


@dataclass(frozen=True)
class GenerativeSpec:
    """A named simulation design. Only custom_discrete carries parameters."""

    kind: GenerativeKind
    dgp: Optional[DiscreteDGP] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'kind', GenerativeKind(self.kind))
        if (self.kind is GenerativeKind.CUSTOM_DISCRETE) != (self.dgp is not None):
            raise ParameterDomainError('a DiscreteDGP is required for, and only for, custom_discrete specs')

    @classmethod
    def named(cls, name):
        try:
            kind = GenerativeKind(name)
        except ValueError:
            names = ', '.join(kind.value for kind in PAPER_KINDS)
            raise ParameterDomainError(f'unknown simulation spec {name!r}; choose one of {names}') from None
        if kind not in PAPER_KINDS:
            raise ParameterDomainError(f'{kind.value} needs an explicit DiscreteDGP and has no name')
        return cls(kind=kind)

    @property
    def name(self):
        return self.kind.value

    @property
    def outcome_kind(self):
        if self.kind is GenerativeKind.PAPER_BINARY:
            return OutcomeKind.BINARY
        if self.kind is GenerativeKind.CUSTOM_DISCRETE and self.dgp.is_binary:
            return OutcomeKind.BINARY
        return OutcomeKind.CONTINUOUS

    @property
    def dimension(self):
        return self.dgp.levels.shape[1] if self.dgp is not None else PAPER_DIMENSION


@dataclass(frozen=True, eq=False)
class LevelNuisances:
    """Nuisances per level of a DiscreteDGP; pair arrays have shape (levels, 2)."""

    e: np.ndarray
    mu: np.ndarray
    q_plus: np.ndarray
    q_minus: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray

    def __post_init__(self):
        for name in ('e', 'mu', 'q_plus', 'q_minus', 'rho_plus', 'rho_minus'):
            object.__setattr__(self, name, frozen_array(getattr(self, name)))

    def for_rows(self, level_index, epsilon=None):
        """Expand to a row-wise NuisanceSet, one row per entry of ``level_index``."""
        index = np.asarray(level_index)
        e = self.e[index]
        if epsilon is not None:
            e = np.clip(e, epsilon, 1 - epsilon)
        return NuisanceSet(
            e_hat=e,
            q_plus=self.q_plus[index],
            q_minus=self.q_minus[index],
            rho_plus=self.rho_plus[index],
            rho_minus=self.rho_minus[index],
            mu=self.mu[index],
            epsilon=epsilon,
        )

    def replace(self, **changes):
        values = {name: getattr(self, name) for name in ('e', 'mu', 'q_plus', 'q_minus', 'rho_plus', 'rho_minus')}
        values.update(changes)
        return LevelNuisances(**values)


@dataclass(frozen=True)
class CoverageEntry:
    lam: float
    estimand: Estimand
    reps: int
    failures: int
    truth_lower: float
    truth_upper: float
    bias_lower: float
    bias_upper: float
    coverage: float
    mean_width: float
    upper_above_truth_lower: float

    def as_dict(self):
        return {
            'lambda': self.lam,
            'estimand': Estimand(self.estimand).value,
            'reps': self.reps,
            'failures': self.failures,
            'truth_lower': self.truth_lower,
            'truth_upper': self.truth_upper,
            'bias_lower': self.bias_lower,
            'bias_upper': self.bias_upper,
            'coverage': self.coverage,
            'mean_width': self.mean_width,
            'upper_above_truth_lower': self.upper_above_truth_lower,
        }


@dataclass(frozen=True)
class CoverageReport:
    spec: str
    estimand: Estimand
    n: int
    k: int
    alpha: float
    seed: int
    reps: int
    replication_seeds: tuple
    entries: tuple
    records: tuple
    failures: tuple = ()
