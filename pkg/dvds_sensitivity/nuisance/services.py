import logging

import numpy as np

from cvar.models import DiscreteDist
from cvar.services import cvar_part, empirical_quantile, transformed_outcome
from msm.exceptions import DegenerateFitError, ParameterDomainError
from msm.models import Side

from .learners import fit_logistic, fit_pinball, fit_ridge
from .models import FittedPredictor, LearnerKind, NuisanceQuery, RhoStrategy, Target

logger = logging.getLogger(__name__)


def _injected(spec, rows_used, query):
    oracle = spec.oracle
    return FittedPredictor(
        kind=LearnerKind.ORACLE_INJECTION,
        rows_used=rows_used,
        predict=lambda covariates: oracle(covariates, query),
    )


def _linear(kind, rows_used, model):
    return FittedPredictor(kind=kind, rows_used=rows_used, predict=model.predict)


def _arm_rows(data, rows, arm, what):
    selected = data.arm_rows(rows, arm)
    if selected.size == 0:
        raise DegenerateFitError(f'no rows with treatment == {arm} to fit the {what}')
    return selected


def fit_propensity(data, rows, spec):
    """Fit P(Z = 1 | X) on ``rows``. Values are not yet clipped."""
    rows = np.asarray(rows)
    if spec.kind is LearnerKind.ORACLE_INJECTION:
        return _injected(spec, rows.size, NuisanceQuery(target=Target.PROPENSITY))
    if rows.size == 0:
        raise DegenerateFitError('no rows to fit the propensity score')
    treated = data.treatment[rows].astype(float)
    share = treated.mean()
    if share in (0.0, 1.0):
        arm = 'treated' if share == 1.0 else 'control'
        raise DegenerateFitError(f'all {rows.size} training rows are {arm}; the propensity score is not identified')

    if spec.kind is LearnerKind.CONSTANT:
        return FittedPredictor.constant(spec.kind, rows.size, share)
    if spec.kind is LearnerKind.LOGISTIC:
        model = fit_logistic(
            data.covariates[rows], treated, spec.expansion, spec.regularization, spec.max_iter, spec.tol
        )
        return _linear(spec.kind, rows.size, model)
    raise ParameterDomainError(f'{spec.kind.value} cannot fit a propensity score')


def clip_propensity(value, epsilon):
    if not 0 < epsilon < 0.5:
        raise ParameterDomainError(f'epsilon must lie in (0, 0.5), got {epsilon!r}')
    clipped = np.clip(value, epsilon, 1 - epsilon)
    return float(clipped) if np.ndim(clipped) == 0 else clipped


def fit_quantile(data, rows, arm, alpha, spec, side=None):
    """Fit the conditional α-quantile of Y given X among rows with Z == arm."""
    if not 0 < alpha < 1:
        raise ParameterDomainError(f'quantile level must lie in (0, 1), got {alpha!r}')
    if spec.kind is LearnerKind.ORACLE_INJECTION:
        query = NuisanceQuery(target=Target.QUANTILE, arm=arm, alpha=alpha, side=side)
        return _injected(spec, len(rows), query)
    selected = _arm_rows(data, rows, arm, f'{alpha:.4g}-quantile')
    outcome = data.outcome[selected]

    if spec.kind is LearnerKind.CONSTANT:
        value = empirical_quantile(DiscreteDist.uniform(outcome), alpha)
        return FittedPredictor.constant(spec.kind, selected.size, value)
    if spec.kind is LearnerKind.PINBALL_LINEAR:
        model = fit_pinball(
            data.covariates[selected], outcome, alpha, spec.expansion, spec.regularization, spec.max_iter, spec.tol
        )
        return _linear(spec.kind, selected.size, model)
    raise ParameterDomainError(f'{spec.kind.value} cannot fit a conditional quantile')


def _regress(kind_spec, covariates, target, rows_used, bounded=False):
    if kind_spec.kind is LearnerKind.CONSTANT:
        return FittedPredictor.constant(kind_spec.kind, rows_used, target.mean())
    if kind_spec.kind is LearnerKind.RIDGE:
        model = fit_ridge(covariates, target, kind_spec.expansion, kind_spec.regularization)
        if bounded:
            return FittedPredictor(
                kind=kind_spec.kind,
                rows_used=rows_used,
                predict=lambda x: np.clip(model.predict(x), 0.0, 1.0),
            )
        return _linear(kind_spec.kind, rows_used, model)
    if kind_spec.kind is LearnerKind.LOGISTIC:
        if not bounded:
            raise ParameterDomainError('logistic regression needs a binary outcome')
        if np.all(target == target[0]):
            # A pure arm has no logistic fit; its mean is the only sensible prediction.
            return FittedPredictor.constant(kind_spec.kind, rows_used, target[0])
        model = fit_logistic(
            covariates, target, kind_spec.expansion, kind_spec.regularization, kind_spec.max_iter, kind_spec.tol
        )
        return _linear(kind_spec.kind, rows_used, model)
    raise ParameterDomainError(f'{kind_spec.kind.value} cannot fit a regression')


def fit_outcome_regression(data, rows, arm, spec):
    """Fit μ(x, arm) = E[Y | X = x, Z = arm]; binary outcomes stay in [0, 1]."""
    if spec.kind is LearnerKind.ORACLE_INJECTION:
        return _injected(spec, len(rows), NuisanceQuery(target=Target.MEAN, arm=arm))
    selected = _arm_rows(data, rows, arm, 'outcome regression')
    return _regress(spec, data.covariates[selected], data.outcome[selected], selected.size, bounded=data.is_binary)


def fit_rho(data, rows, arm, q_hat, params, side, spec, strategy=RhoStrategy.SEPARATE, mu_hat=None):
    """Fit ϱ±(x, arm), the conditional mean of the transformed outcome built on ``q_hat``.

    ``direct`` regresses the transformed outcome itself. ``separate`` combines
    an outcome regression (``mu_hat`` if given, fitted otherwise) with a
    regression of the CVaR part, so Λ = 1 returns exactly the outcome regression.
    """
    side = Side(side)
    strategy = RhoStrategy(strategy)
    if spec.kind is LearnerKind.ORACLE_INJECTION:
        query = NuisanceQuery(target=Target.RHO, arm=arm, side=side, params=params)
        return _injected(spec, len(rows), query)
    selected = _arm_rows(data, rows, arm, 'transformed-outcome regression')
    covariates = data.covariates[selected]
    outcome = data.outcome[selected]
    thresholds = q_hat(covariates)

    if strategy is RhoStrategy.DIRECT:
        target = np.asarray(transformed_outcome(outcome, thresholds, params, side))
        return _regress(spec, covariates, target, selected.size)

    if mu_hat is None:
        mu_hat = _regress(spec, covariates, outcome, selected.size, bounded=data.is_binary)
    if params.lam == 1:
        return mu_hat
    tail = _regress(spec, covariates, np.asarray(cvar_part(outcome, thresholds, params, side)), selected.size)
    inv = params.inv_lam
    return FittedPredictor(
        kind=spec.kind,
        rows_used=selected.size,
        predict=lambda x: inv * mu_hat(x) + (1.0 - inv) * tail(x),
    )


def binary_nuisances(mu_hat, params):
    """Closed-form (Q+, Q-, ϱ+, ϱ-) for a Bernoulli(μ̂) outcome.

    Vectorised over ``mu_hat``; scalars give a tuple of floats.
    """
    mu = np.asarray(mu_hat, dtype=float)
    if np.any(~np.isfinite(mu)) or np.any(mu < 0) or np.any(mu > 1):
        raise ParameterDomainError('outcome regression values must lie in [0, 1] for a binary outcome')
    lam, tau = params.lam, params.tau
    q_plus = (mu > 1 - tau).astype(float)
    q_minus = (mu > tau).astype(float)
    rho_plus = np.minimum(1 - 1 / lam + mu / lam, mu * lam)
    rho_minus = np.maximum(1 - lam + mu * lam, mu / lam)
    if lam == 1:
        rho_plus = rho_minus = mu.copy()
    result = (q_plus, q_minus, rho_plus, rho_minus)
    if mu.ndim == 0:
        return tuple(float(value) for value in result)
    return result
