import logging
import math
from collections.abc import Mapping

import numpy as np
import pandas as pd

from .exceptions import DataError, ParameterDomainError
from .models import ColumnRoles, Dataset, OutcomeKind, SensitivityParams
from .serializers import ColumnRolesSerializer

logger = logging.getLogger(__name__)


def sensitivity_params(lam):
    """Build the MSM parameters for odds-ratio bound ``lam``; tau = lam / (lam + 1)."""
    try:
        lam = float(lam)
    except (TypeError, ValueError):
        raise ParameterDomainError(f'lambda must be a number, got {lam!r}') from None
    if not math.isfinite(lam) or lam < 1:
        raise ParameterDomainError(f'lambda must be a finite number >= 1, got {lam!r}')
    return SensitivityParams(lam=lam, tau=lam / (lam + 1))


def resolve_roles(raw, roles):
    """Validate a role mapping against the table's columns."""
    if isinstance(roles, ColumnRoles):
        roles = {'treatment': roles.treatment, 'outcome': roles.outcome, 'covariates': list(roles.covariates)}
    if not isinstance(roles, Mapping):
        raise DataError('Column roles must be a mapping with treatment, outcome and covariates')
    serializer = ColumnRolesSerializer(data=dict(roles), columns=[str(name) for name in raw.columns])
    if not serializer.is_valid():
        problems = [
            (None, field, ' '.join(str(message) for message in messages))
            for field, messages in serializer.errors.items()
        ]
        raise DataError('Invalid column roles', problems)
    return serializer.save()


def _numeric_column(raw, name, problems):
    column = pd.to_numeric(raw[name], errors='coerce').to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(column))
    for row in bad:
        problems.append((int(row), name, f'missing or non-finite value {raw[name].iloc[row]!r}'))
    return column


def validate_dataset(raw, roles, outcome_kind):
    """Turn a table into a Dataset, rejecting (never imputing) bad cells.

    ``raw`` is a pandas DataFrame, ``roles`` a ColumnRoles or a mapping
    accepted by ColumnRolesSerializer.
    """
    if not isinstance(raw, pd.DataFrame):
        raw = pd.DataFrame(raw)
    raw = raw.rename(columns=str)
    roles = resolve_roles(raw, roles)
    outcome_kind = OutcomeKind(outcome_kind)

    if len(raw) < 1:
        raise DataError('The table has no rows')

    problems = []
    covariates = np.column_stack([_numeric_column(raw, name, problems) for name in roles.covariates])
    treatment = _numeric_column(raw, roles.treatment, problems)
    outcome = _numeric_column(raw, roles.outcome, problems)
    if problems:
        raise DataError('Missing or non-finite cells', problems)

    bad_treatment = np.flatnonzero((treatment != 0) & (treatment != 1))
    if bad_treatment.size:
        raise DataError(
            'Treatment values must be 0 or 1',
            [(int(row), roles.treatment, f'value {treatment[row]!r}') for row in bad_treatment],
        )
    if outcome_kind is OutcomeKind.BINARY:
        bad_outcome = np.flatnonzero((outcome != 0) & (outcome != 1))
        if bad_outcome.size:
            raise DataError(
                'Binary outcomes must be 0 or 1',
                [(int(row), roles.outcome, f'value {outcome[row]!r}') for row in bad_outcome],
            )

    dataset = Dataset(
        covariates=covariates,
        treatment=treatment.astype(np.int8),
        outcome=outcome,
        outcome_kind=outcome_kind,
        covariate_names=tuple(roles.covariates),
    )
    logger.debug('Validated dataset with n=%d, d=%d, outcome=%s', dataset.n, dataset.d, outcome_kind.value)
    return dataset


def infer_outcome_kind(raw, outcome):
    """Binary when every outcome value is 0 or 1, continuous otherwise."""
    values = pd.to_numeric(raw[outcome], errors='coerce')
    if values.isin([0, 1]).all():
        return OutcomeKind.BINARY
    return OutcomeKind.CONTINUOUS
