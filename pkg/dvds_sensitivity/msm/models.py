"""Immutable records shared by every app.

Nothing here is stored in a database: these are in-memory domain models
holding read-only numpy arrays so they can be shared across workers.
"""
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

import numpy as np
import pandas as pd

from .exceptions import DataError, ParameterDomainError


def frozen_array(values, dtype=float):
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class OutcomeKind(str, Enum):
    CONTINUOUS = 'continuous'
    BINARY = 'binary'


class Estimand(str, Enum):
    MEAN1 = 'mean1'
    MEAN0 = 'mean0'
    ATE = 'ate'
    ATT = 'att'


class Side(IntEnum):
    """Which end of the identified interval; the value is the sign used in Λ^{±sign}."""

    LOWER = -1
    UPPER = 1

    @property
    def opposite(self):
        return Side(-self.value)


@dataclass(frozen=True)
class SensitivityParams:
    lam: float
    tau: float

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 1:
            raise ParameterDomainError(f'lambda must be a finite number >= 1, got {self.lam!r}')
        if self.tau != self.lam / (self.lam + 1):
            raise ParameterDomainError('tau must equal lambda / (lambda + 1)')

    @property
    def inv_lam(self):
        return 1.0 / self.lam

    @property
    def tail_weight(self):
        """1 / (1 - tau), the likelihood-ratio cap of the CVaR dual."""
        return 1.0 / (1.0 - self.tau)

    def quantile_level(self, side):
        return self.tau if Side(side) is Side.UPPER else 1.0 - self.tau


@dataclass(frozen=True)
class ColumnRoles:
    treatment: str
    outcome: str
    covariates: tuple


def _bad_rows(mask, column, message):
    return [(int(row), column, message) for row in np.flatnonzero(mask)]


def _check_cells(covariates, treatment, outcome, outcome_kind):
    """Raise DataError unless the arrays form a valid Dataset."""
    if treatment.ndim != 1 or outcome.ndim != 1 or covariates.ndim != 2:
        raise DataError('treatment and outcome must be vectors and covariates a matrix')
    lengths = {'covariates': covariates.shape[0], 'treatment': treatment.shape[0], 'outcome': outcome.shape[0]}
    if len(set(lengths.values())) != 1:
        shown = ', '.join(f'{name}={count}' for name, count in lengths.items())
        raise DataError(f'Row counts differ ({shown})')
    if outcome.shape[0] < 1:
        raise DataError('A dataset needs at least one row')

    problems = _bad_rows(~np.isfinite(covariates).all(axis=1), 'covariates', 'non-finite value')
    problems += _bad_rows(~np.isfinite(treatment), 'treatment', 'non-finite value')
    problems += _bad_rows(~np.isfinite(outcome), 'outcome', 'non-finite value')
    if problems:
        raise DataError('Missing or non-finite cells', problems)
    problems = _bad_rows((treatment != 0) & (treatment != 1), 'treatment', 'must be 0 or 1')
    if problems:
        raise DataError('Treatment values must be 0 or 1', problems)
    if outcome_kind is OutcomeKind.BINARY:
        problems = _bad_rows((outcome != 0) & (outcome != 1), 'outcome', 'must be 0 or 1')
        if problems:
            raise DataError('Binary outcomes must be 0 or 1', problems)


@dataclass(frozen=True, eq=False)
class Dataset:
    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    outcome_kind: OutcomeKind = OutcomeKind.CONTINUOUS
    covariate_names: tuple = ()

    def __post_init__(self):
        covariates = np.asarray(self.covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(-1, 1)
        treatment = np.asarray(self.treatment, dtype=float)
        outcome = np.asarray(self.outcome, dtype=float)
        outcome_kind = OutcomeKind(self.outcome_kind)
        _check_cells(covariates, treatment, outcome, outcome_kind)

        object.__setattr__(self, 'covariates', frozen_array(covariates))
        object.__setattr__(self, 'treatment', frozen_array(treatment, dtype=np.int8))
        object.__setattr__(self, 'outcome', frozen_array(outcome))
        object.__setattr__(self, 'outcome_kind', outcome_kind)
        if not self.covariate_names:
            names = tuple(f'x{j + 1}' for j in range(self.covariates.shape[1]))
            object.__setattr__(self, 'covariate_names', names)
        elif len(self.covariate_names) != self.covariates.shape[1]:
            raise DataError(
                f'{len(self.covariate_names)} covariate names for {self.covariates.shape[1]} covariate columns'
            )

    @property
    def n(self):
        return self.outcome.shape[0]

    @property
    def d(self):
        return self.covariates.shape[1]

    @property
    def is_binary(self):
        return self.outcome_kind is OutcomeKind.BINARY

    def arm_rows(self, rows, arm):
        """The subset of ``rows`` whose treatment equals ``arm``."""
        rows = np.asarray(rows)
        return rows[self.treatment[rows] == arm]

    def to_frame(self, treatment='z', outcome='y'):
        frame = pd.DataFrame(self.covariates, columns=list(self.covariate_names))
        frame[treatment] = self.treatment.astype(int)
        frame[outcome] = self.outcome
        return frame

    def roles(self, treatment='z', outcome='y'):
        return ColumnRoles(treatment=treatment, outcome=outcome, covariates=self.covariate_names)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.outcome_kind is other.outcome_kind
            and self.covariate_names == other.covariate_names
            and np.array_equal(self.covariates, other.covariates)
            and np.array_equal(self.treatment, other.treatment)
            and np.array_equal(self.outcome, other.outcome)
        )

    __hash__ = None


@dataclass(frozen=True)
class NuisanceRow:
    """One row of a NuisanceSet; pairs are indexed by arm (0, 1)."""

    e_hat: float
    q_plus: tuple
    q_minus: tuple
    rho_plus: tuple
    rho_minus: tuple
    mu: Optional[tuple] = None


@dataclass(frozen=True, eq=False)
class NuisanceSet:
    """Per-row nuisances evaluated at both arms (column 0 is control, 1 is treated)."""

    e_hat: np.ndarray
    q_plus: np.ndarray
    q_minus: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    mu: Optional[np.ndarray] = None
    epsilon: Optional[float] = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, 'e_hat', frozen_array(self.e_hat))
        n = self.e_hat.shape[0]
        for name in ('q_plus', 'q_minus', 'rho_plus', 'rho_minus', 'mu'):
            value = getattr(self, name)
            if value is None:
                continue
            value = frozen_array(value)
            if value.shape != (n, 2):
                raise ParameterDomainError(f'{name} must have shape ({n}, 2), got {value.shape}')
            object.__setattr__(self, name, value)
        if np.any(self.e_hat <= 0) or np.any(self.e_hat >= 1):
            raise ParameterDomainError('propensities must lie strictly inside (0, 1)')
        if self.epsilon is not None:
            if np.any(self.e_hat < self.epsilon) or np.any(self.e_hat > 1 - self.epsilon):
                raise ParameterDomainError(f'propensities must be clipped to [{self.epsilon}, {1 - self.epsilon}]')

    @property
    def n(self):
        return self.e_hat.shape[0]

    def quantile(self, side):
        return self.q_plus if Side(side) is Side.UPPER else self.q_minus

    def rho(self, side):
        return self.rho_plus if Side(side) is Side.UPPER else self.rho_minus

    def row(self, i):
        return NuisanceRow(
            e_hat=float(self.e_hat[i]),
            q_plus=tuple(self.q_plus[i]),
            q_minus=tuple(self.q_minus[i]),
            rho_plus=tuple(self.rho_plus[i]),
            rho_minus=tuple(self.rho_minus[i]),
            mu=None if self.mu is None else tuple(self.mu[i]),
        )

    def take(self, rows):
        rows = np.asarray(rows)
        return NuisanceSet(
            e_hat=self.e_hat[rows],
            q_plus=self.q_plus[rows],
            q_minus=self.q_minus[rows],
            rho_plus=self.rho_plus[rows],
            rho_minus=self.rho_minus[rows],
            mu=None if self.mu is None else self.mu[rows],
            epsilon=self.epsilon,
        )

    @classmethod
    def from_row(cls, row):
        """A one-row NuisanceSet, used to evaluate influence functions pointwise."""
        return cls(
            e_hat=[row.e_hat],
            q_plus=[row.q_plus],
            q_minus=[row.q_minus],
            rho_plus=[row.rho_plus],
            rho_minus=[row.rho_minus],
            mu=None if row.mu is None else [row.mu],
        )
