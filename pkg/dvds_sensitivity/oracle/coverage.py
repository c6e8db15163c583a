"""Monte Carlo coverage of the two-sided Wald region for the true sharp bounds."""
import logging

import numpy as np
from django.conf import settings
from joblib import Parallel, delayed

from msm.exceptions import HarnessError, ParameterDomainError, SensitivityError
from msm.models import Estimand
from msm.services import sensitivity_params
from nuisance.serializers import LearnerBundleSerializer

from .models import PAPER_KINDS, CoverageEntry, CoverageReport
from .replication import replication_seed, run_replication
from .simulation import population_bounds
from .tasks import run_coverage_replication

logger = logging.getLogger(__name__)

DISPATCH_CHOICES = ('local', 'celery')


def _attempt(spec, lambdas, n, bundle, k, alpha, seed, estimand, epsilon):
    try:
        return {'records': run_replication(spec, lambdas, n, bundle, k, alpha, seed, estimand, epsilon)}
    except SensitivityError as e:
        return {'error': str(e)}


def _run_local(spec, lambdas, n, bundle, k, alpha, seeds, estimand, epsilon, threads):
    return Parallel(n_jobs=max(1, int(threads)), backend='threading')(
        delayed(_attempt)(spec, lambdas, n, bundle, k, alpha, seed, estimand, epsilon) for seed in seeds
    )


def _run_celery(spec, lambdas, n, bundle, k, alpha, seeds, estimand, epsilon):
    if spec.kind not in PAPER_KINDS or bundle.is_injected:
        raise ParameterDomainError('celery dispatch supports the built-in designs with configurable learners only')
    config = LearnerBundleSerializer(bundle).data
    pending = [
        run_coverage_replication.apply_async(
            args=(spec.name, list(lambdas), n, dict(config), k, alpha, seed, Estimand(estimand).value, epsilon)
        )
        for seed in seeds
    ]
    return [result.get() for result in pending]


def _entry(lam, estimand, reps, truth, rows, failures):
    lower, upper = truth
    psi_lower = np.array([row['psi_lower'] for row in rows])
    psi_upper = np.array([row['psi_upper'] for row in rows])
    ci_lower = np.array([row['ci_lower'] for row in rows])
    ci_upper = np.array([row['ci_upper'] for row in rows])
    covered = (ci_lower <= lower) & (ci_upper >= upper)
    return CoverageEntry(
        lam=lam,
        estimand=estimand,
        reps=reps,
        failures=failures,
        truth_lower=lower,
        truth_upper=upper,
        bias_lower=float(np.mean(psi_lower) - lower),
        bias_upper=float(np.mean(psi_upper) - upper),
        coverage=float(np.mean(covered)),
        mean_width=float(np.mean(ci_upper - ci_lower)),
        upper_above_truth_lower=float(np.mean(psi_upper >= lower)),
    )


def monte_carlo_coverage(spec, lambdas, reps, n, bundle, k, alpha, seed, estimand=Estimand.ATE,
                         epsilon=0.01, threads=1, dispatch='local'):
    """Simulate ``reps`` datasets and score each Wald region against the true sharp bounds.

    Replication ``r`` uses ``replication_seed(seed, r)``, so results do not
    depend on ``threads`` or on the dispatch route. Failed replications are
    recorded; losing more than ``DVDS_MAX_FAILURE_RATE`` of them raises
    HarnessError.
    """
    reps = int(reps)
    if reps < 1:
        raise ParameterDomainError(f'reps must be >= 1, got {reps}')
    if dispatch not in DISPATCH_CHOICES:
        raise ParameterDomainError(f'dispatch must be one of {", ".join(DISPATCH_CHOICES)}, got {dispatch!r}')
    estimand = Estimand(estimand)
    lambdas = sorted({float(lam) for lam in lambdas})
    grid = [sensitivity_params(lam) for lam in lambdas]
    seeds = [replication_seed(seed, r) for r in range(reps)]

    logger.info('Running %d %s replications of %s at n=%d via %s', reps, estimand.value, spec.name, n, dispatch)
    if dispatch == 'celery':
        outcomes = _run_celery(spec, lambdas, n, bundle, k, alpha, seeds, estimand, epsilon)
    else:
        outcomes = _run_local(spec, lambdas, n, bundle, k, alpha, seeds, estimand, epsilon, threads)

    failures = []
    for replication, (rep_seed, outcome) in enumerate(zip(seeds, outcomes)):
        if 'error' in outcome:
            logger.warning('Replication %d (seed %d) failed: %s', replication, rep_seed, outcome['error'])
            failures.append({'replication': replication, 'seed': rep_seed, 'error': outcome['error']})
    if len(failures) > settings.DVDS_MAX_FAILURE_RATE * reps or len(failures) == reps:
        raise HarnessError(f'{len(failures)} of {reps} replications failed; first error: {failures[0]["error"]}')

    truths = {params.lam: population_bounds(spec, params, estimand) for params in grid}
    records = []
    for replication, (rep_seed, outcome) in enumerate(zip(seeds, outcomes)):
        for row in outcome.get('records', ()):
            lower, upper = truths[row['lambda']]
            covered = row['ci_lower'] <= lower and row['ci_upper'] >= upper
            records.append({'replication': replication, **row, 'covered': bool(covered)})

    entries = tuple(
        _entry(lam, estimand, reps, truths[lam], [row for row in records if row['lambda'] == lam], len(failures))
        for lam in lambdas
    )
    for entry in entries:
        logger.info('Lambda %g: coverage %.3f, mean width %.4g', entry.lam, entry.coverage, entry.mean_width)
    return CoverageReport(
        spec=spec.name,
        estimand=estimand,
        n=int(n),
        k=int(k),
        alpha=float(alpha),
        seed=int(seed),
        reps=reps,
        replication_seeds=tuple(seeds),
        entries=entries,
        records=tuple(records),
        failures=tuple(failures),
    )
