"""Cross-fitting, influence functions and the bound estimators built on them."""
import logging

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

from cvar.services import weighting_kernel
from msm.exceptions import EstimationError, FitError, ParameterDomainError
from msm.models import Estimand, NuisanceSet, Side

from nuisance.services import (
    binary_nuisances,
    clip_propensity,
    fit_outcome_regression,
    fit_propensity,
    fit_quantile,
    fit_rho,
)

from .models import BoundEstimate, FoldPlan, SensitivityRecord

logger = logging.getLogger(__name__)

ARMS = (0, 1)


def split_folds(n, k, seed):
    """Shuffle rows with ``seed`` and cut them into ``k`` blocks of size ⌊n/k⌋ or ⌈n/k⌉."""
    n, k = int(n), int(k)
    if k < 2 or k > n:
        raise ParameterDomainError(f'fold count must satisfy 2 <= K <= n, got K={k}, n={n}')
    order = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    for fold, rows in enumerate(np.array_split(order, k)):
        assignments[rows] = fold
    return FoldPlan(assignments=assignments, k=k, seed=seed)


def _fit_fold(data, fold, plan, grid, bundle, epsilon):
    train = plan.complement(fold)
    test = plan.fold_rows(fold)
    covariates = data.covariates[test]
    try:
        e_hat = clip_propensity(fit_propensity(data, train, bundle.propensity)(covariates), epsilon)
        mu_fits = [fit_outcome_regression(data, train, arm, bundle.regression) for arm in ARMS]
        mu = np.column_stack([fit(covariates) for fit in mu_fits])

        per_lambda = []
        if data.is_binary:
            mu = np.clip(mu, 0.0, 1.0)
            for params in grid:
                q_plus, q_minus, rho_plus, rho_minus = binary_nuisances(mu, params)
                per_lambda.append((q_plus, q_minus, rho_plus, rho_minus))
        else:
            for params in grid:
                fitted = {}
                for side in Side:
                    quantiles, rhos = [], []
                    for arm in ARMS:
                        alpha = params.quantile_level(side)
                        q_hat = fit_quantile(data, train, arm, alpha, bundle.quantile, side=side)
                        rho_hat = fit_rho(
                            data, train, arm, q_hat, params, side,
                            bundle.regression, bundle.strategy, mu_hat=mu_fits[arm],
                        )
                        quantiles.append(q_hat(covariates))
                        rhos.append(rho_hat(covariates))
                    fitted[side] = (np.column_stack(quantiles), np.column_stack(rhos))
                per_lambda.append(
                    (fitted[Side.UPPER][0], fitted[Side.LOWER][0], fitted[Side.UPPER][1], fitted[Side.LOWER][1])
                )
    except FitError as exc:
        exc.fold = fold
        raise
    logger.debug('Fold %d: fitted nuisances on %d rows, evaluated on %d', fold, train.size, test.size)
    return test, e_hat, mu, per_lambda


def crossfit_grid(data, grid, bundle, plan, epsilon, threads=1):
    """Cross-fit nuisances for every SensitivityParams in ``grid`` on one fold plan.

    ê and μ̂ are fitted once per fold and shared across the grid; quantiles
    and ϱ̂ are refitted per Λ. Returns one NuisanceSet per grid entry.
    """
    if plan.n != data.n:
        raise ParameterDomainError(f'fold plan covers {plan.n} rows but the dataset has {data.n}')
    grid = list(grid)
    results = Parallel(n_jobs=max(1, int(threads)), backend='threading')(
        delayed(_fit_fold)(data, fold, plan, grid, bundle, epsilon) for fold in range(plan.k)
    )

    e_hat = np.empty(data.n)
    mu = np.empty((data.n, 2))
    parts = [[np.empty((data.n, 2)) for _ in range(4)] for _ in grid]
    for test, fold_e, fold_mu, per_lambda in results:
        e_hat[test] = fold_e
        mu[test] = fold_mu
        for target, values in zip(parts, per_lambda):
            for array, fold_values in zip(target, values):
                array[test] = fold_values

    return [
        NuisanceSet(
            e_hat=e_hat, q_plus=q_plus, q_minus=q_minus, rho_plus=rho_plus, rho_minus=rho_minus,
            mu=mu, epsilon=epsilon,
        )
        for q_plus, q_minus, rho_plus, rho_minus in parts
    ]


def crossfit_nuisances(data, params, bundle, plan, epsilon, threads=1):
    return crossfit_grid(data, [params], bundle, plan, epsilon, threads=threads)[0]


def _arm_influence(y, z, eta, params, arm, side):
    e = eta.e_hat
    q = eta.quantile(side)[:, arm]
    rho = eta.rho(side)[:, arm]
    kernel = weighting_kernel(y, q, params, side)
    if arm == 1:
        return z * y + (1 - z) * rho + ((1 - e) * z / e) * (kernel - rho)
    return (1 - z) * y + z * rho + (e * (1 - z) / (1 - e)) * (kernel - rho)


def influence_array(y, z, eta, params, estimand, side):
    """Per-row φ values for Mean1, Mean0 or ATE on one side of the interval."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    estimand, side = Estimand(estimand), Side(side)
    if estimand is Estimand.MEAN1:
        return _arm_influence(y, z, eta, params, 1, side)
    if estimand is Estimand.MEAN0:
        return _arm_influence(y, z, eta, params, 0, side)
    if estimand is Estimand.ATE:
        return _arm_influence(y, z, eta, params, 1, side) - _arm_influence(y, z, eta, params, 0, side.opposite)
    raise ParameterDomainError(f'{estimand.value} has no per-row influence function')


def influence(row, eta_row, params, estimand, side):
    """φ for a single observation ``row = (x, y, z)`` and its NuisanceRow."""
    _, y, z = row
    eta = NuisanceSet.from_row(eta_row)
    return float(influence_array([y], [z], eta, params, estimand, side)[0])


def _standard_error(values, center, count):
    return float(np.sqrt(np.sum((values - center) ** 2) / (count * (count - 1))))


def estimate_bounds(data, eta, params, estimand=Estimand.ATE):
    estimand = Estimand(estimand)
    if estimand is Estimand.ATT:
        return att_bounds(data, eta, params)
    if data.n < 2:
        raise EstimationError(f'standard errors need at least 2 rows, got {data.n}')
    if eta.n != data.n:
        raise EstimationError(f'nuisances cover {eta.n} rows but the dataset has {data.n}')

    values = {side: influence_array(data.outcome, data.treatment, eta, params, estimand, side) for side in Side}
    psi = {side: float(np.mean(values[side])) for side in Side}
    return BoundEstimate(
        estimand=estimand,
        lam=params.lam,
        psi_lower=psi[Side.LOWER],
        psi_upper=psi[Side.UPPER],
        se_lower=_standard_error(values[Side.LOWER], psi[Side.LOWER], data.n),
        se_upper=_standard_error(values[Side.UPPER], psi[Side.UPPER], data.n),
        influence_lower=values[Side.LOWER],
        influence_upper=values[Side.UPPER],
    )


def att_bounds(data, eta, params):
    """Ratio-form bounds on the effect on the treated: (Ȳ − ψ̂₀∓) / Z̄."""
    treated = int(data.treatment.sum())
    if treated < 2:
        raise EstimationError(f'effect-on-the-treated bounds need at least 2 treated rows, got {treated}')
    y = data.outcome
    z = data.treatment.astype(float)
    phi0 = {side: influence_array(y, z, eta, params, Estimand.MEAN0, side) for side in Side}
    y_bar, z_bar = float(np.mean(y)), float(np.mean(z))

    # The upper ATT bound uses the lower control-mean bound and vice versa.
    psi, terms, se = {}, {}, {}
    for side in Side:
        control = phi0[side.opposite]
        psi[side] = (y_bar - float(np.mean(control))) / z_bar
        terms[side] = y - control - z * psi[side]
        se[side] = float(np.sqrt(np.sum(terms[side] ** 2) / (treated * (treated - 1))))
    return BoundEstimate(
        estimand=Estimand.ATT,
        lam=params.lam,
        psi_lower=psi[Side.LOWER],
        psi_upper=psi[Side.UPPER],
        se_lower=se[Side.LOWER],
        se_upper=se[Side.UPPER],
        influence_lower=terms[Side.LOWER],
        influence_upper=terms[Side.UPPER],
    )


def wald_bounds(est, alpha):
    """(ψ̂⁻ − z₁₋α·σ̂₋, ψ̂⁺ + z₁₋α·σ̂₊); pass α/2 for a two-sided region."""
    if not 0 < alpha < 1:
        raise ParameterDomainError(f'alpha must lie in (0, 1), got {alpha!r}')
    z = float(norm.ppf(1 - alpha))
    return est.psi_lower - z * est.se_lower, est.psi_upper + z * est.se_upper


def aipw(data, e_hat, mu_hat):
    """The augmented inverse propensity weighting estimate of the ATE."""
    y = data.outcome
    z = data.treatment.astype(float)
    e = np.asarray(e_hat, dtype=float)
    mu = np.asarray(mu_hat, dtype=float)
    summands = (
        mu[:, 1] - mu[:, 0]
        + z * (y - mu[:, 1]) / e
        - (1 - z) * (y - mu[:, 0]) / (1 - e)
    )
    return float(np.mean(summands))


def manski_bounds_binary(data):
    """No-assumption bounds on the ATE for an outcome in {0, 1}."""
    y = data.outcome
    if np.any((y != 0) & (y != 1)):
        raise ParameterDomainError('Manski bounds need a binary outcome')
    z = data.treatment.astype(float)
    mean1 = (float(np.mean(z * y)), float(np.mean(z * y + (1 - z))))
    mean0 = (float(np.mean((1 - z) * y)), float(np.mean((1 - z) * y + z)))
    return mean1[0] - mean0[1], mean1[1] - mean0[0]


def sensitivity_curve(data, grid, bundle, estimand, k, seed, epsilon, alpha, threads=1):
    """Bounds and two-sided Wald limits at every Λ in ``grid`` on one shared fold plan.

    Each side of the Wald region uses α/2, so the region covers the
    identified set with probability at least 1 − α.
    """
    grid = sorted(grid, key=lambda params: params.lam)
    plan = split_folds(data.n, k, seed)
    etas = crossfit_grid(data, grid, bundle, plan, epsilon, threads=threads)
    records = []
    for params, eta in zip(grid, etas):
        est = estimate_bounds(data, eta, params, estimand)
        ci_lower, ci_upper = wald_bounds(est, alpha / 2)
        records.append(SensitivityRecord(estimate=est, ci_lower=ci_lower, ci_upper=ci_upper, k=plan.k, seed=seed))
        logger.debug('Lambda %g: bounds [%.6g, %.6g]', params.lam, est.psi_lower, est.psi_upper)
    logger.debug('Estimated %s bounds at %d sensitivity levels on n=%d rows', Estimand(estimand).value, len(records), data.n)
    return records
