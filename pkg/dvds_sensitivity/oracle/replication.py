import logging

import numpy as np

from estimator.services import sensitivity_curve
from msm.services import sensitivity_params

from .simulation import simulate

logger = logging.getLogger(__name__)


def replication_seed(seed, replication):
    """Seed of replication ``replication``; depends only on the master seed and the counter."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(replication),))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def run_replication(spec, lambdas, n, bundle, k, alpha, seed, estimand, epsilon):
    """Simulate one dataset and estimate its sensitivity curve.

    The same seed drives the simulation and the fold plan. Returns one
    plain dict per Λ, as produced by ``SensitivityRecord.as_dict``.
    """
    data = simulate(spec, n, seed)
    grid = [sensitivity_params(lam) for lam in lambdas]
    records = sensitivity_curve(data, grid, bundle, estimand, k, seed, epsilon, alpha)
    return [record.as_dict() for record in records]
