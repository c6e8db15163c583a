"""Simulation designs, their true nuisances and quadrature for their true bounds.

The two built-in designs draw X ~ Uniform([-1, 1]^5), then
Z | X ~ Bernoulli(e(X)) with e(x) = 1 / (1 + exp(x1 + 0.5·1{x2 > 0} + 0.5·x2·x3)),
then Y | X independently of Z:

* paper_binary: Y ~ Bernoulli(1 / (1 + exp(0.5·x1 + x2 + 0.25·x2·x3)))
* paper_continuous: Y ~ Normal(2·sign(x1) + x2 + x2·x3, sd = 1 + x4²)

Neither outcome law involves Z, so the true ATE is 0 for both.
"""
import logging

import numpy as np
from scipy.special import expit, roots_legendre
from scipy.stats import norm

from cvar.models import DiscreteDist
from cvar.services import empirical_quantile
from msm.exceptions import ParameterDomainError
from msm.models import Dataset, Estimand, OutcomeKind
from nuisance.models import LearnerBundle, LearnerSpec, Target
from nuisance.services import binary_nuisances

from .models import PAPER_DIMENSION, DiscreteDGP, GenerativeKind
from .services import aggregate_bounds, mixture_bounds, true_nuisances

logger = logging.getLogger(__name__)

# Nodes per half-axis; every axis is split at 0 where the designs have kinks.
BINARY_NODES = 24
CONTINUOUS_NODES = 16
# Covariates each design actually depends on.
BINARY_AXES = 3
CONTINUOUS_AXES = 4


def paper_propensity(x):
    x = np.asarray(x, dtype=float)
    return expit(-(x[:, 0] + 0.5 * (x[:, 1] > 0) + 0.5 * x[:, 1] * x[:, 2]))


def paper_binary_mean(x):
    x = np.asarray(x, dtype=float)
    return expit(-(0.5 * x[:, 0] + x[:, 1] + 0.25 * x[:, 1] * x[:, 2]))


def paper_continuous_mean(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * np.sign(x[:, 0]) + x[:, 1] + x[:, 1] * x[:, 2]


def paper_continuous_sd(x):
    x = np.asarray(x, dtype=float)
    return 1.0 + x[:, 3] ** 2


def gaussian_quantile(mean, sd, alpha):
    return mean + sd * norm.ppf(alpha)


def gaussian_rho(mean, sd, params, side):
    """Λ⁻¹μ + (1 − Λ⁻¹)·CVaR± for a normal law; CVaR± = μ ± sd·φ(Φ⁻¹(τ)) / (1 − τ)."""
    inv = params.inv_lam
    if params.lam == 1:
        return np.asarray(mean, dtype=float).copy()
    shift = sd * norm.pdf(norm.ppf(params.tau)) * params.tail_weight
    return inv * mean + (1.0 - inv) * (mean + int(side) * shift)


def _simulate_discrete(dgp, n, rng):
    level = rng.choice(dgp.n_levels, size=n, p=dgp.level_probs)
    covariates = dgp.levels[level]
    treatment = (rng.random(n) < dgp.propensity[level]).astype(np.int8)
    outcome = np.empty(n)
    for index in range(dgp.n_levels):
        for arm in (0, 1):
            rows = np.flatnonzero((level == index) & (treatment == arm))
            if rows.size:
                dist = dgp.dist(index, arm)
                outcome[rows] = rng.choice(dist.atoms, size=rows.size, p=dist.weights)
    return covariates, treatment, outcome


def simulate(spec, n, seed):
    """Draw ``n`` rows from ``spec``; a fixed seed gives an identical Dataset."""
    n = int(n)
    if n < 1:
        raise ParameterDomainError(f'n must be >= 1, got {n}')
    rng = np.random.default_rng(seed)
    if spec.kind is GenerativeKind.CUSTOM_DISCRETE:
        covariates, treatment, outcome = _simulate_discrete(spec.dgp, n, rng)
    else:
        covariates = rng.uniform(-1.0, 1.0, size=(n, PAPER_DIMENSION))
        treatment = (rng.random(n) < paper_propensity(covariates)).astype(np.int8)
        if spec.kind is GenerativeKind.PAPER_BINARY:
            outcome = (rng.random(n) < paper_binary_mean(covariates)).astype(float)
        else:
            outcome = rng.normal(paper_continuous_mean(covariates), paper_continuous_sd(covariates))
    logger.debug('Simulated %d rows from %s with seed %s', n, spec.name, seed)
    return Dataset(covariates=covariates, treatment=treatment, outcome=outcome, outcome_kind=spec.outcome_kind)


def random_discrete_dgp(rng, max_levels=5, max_atoms=6):
    """A random finite law; atoms are rounded to one decimal so ties occur."""
    count = int(rng.integers(1, max_levels + 1))
    pairs = []
    for _ in range(count):
        pair = []
        for _ in (0, 1):
            size = int(rng.integers(1, max_atoms + 1))
            weights = rng.dirichlet(np.ones(size))
            atoms = np.round(rng.normal(scale=2.0, size=size), 1)
            pair.append(DiscreteDist(atoms, weights / weights.sum()))
        pairs.append(tuple(pair))
    probs = rng.dirichlet(np.ones(count))
    return DiscreteDGP(
        levels=np.arange(count, dtype=float),
        level_probs=probs / probs.sum(),
        propensity=rng.uniform(0.1, 0.9, size=count),
        outcome_dists=tuple(pairs),
    )


def quadrature_grid(axes, nodes):
    """Tensor Gauss–Legendre points on [-1, 1]^axes and weights of the uniform law.

    Each axis uses ``nodes`` points on [-1, 0] and ``nodes`` on [0, 1]; the
    weights sum to one.
    """
    roots, base = roots_legendre(nodes)
    points = np.concatenate([(roots - 1.0) / 2.0, (roots + 1.0) / 2.0])
    weights = np.concatenate([base, base]) / 4.0
    mesh = np.meshgrid(*([points] * axes), indexing='ij')
    mesh_weights = np.meshgrid(*([weights] * axes), indexing='ij')
    grid = np.column_stack([axis.ravel() for axis in mesh])
    return grid, np.prod(np.column_stack([axis.ravel() for axis in mesh_weights]), axis=1)


def _padded(grid):
    return np.pad(grid, ((0, 0), (0, PAPER_DIMENSION - grid.shape[1])))


def expected_propensity(spec):
    """E[e(X)] under the design."""
    if spec.kind is GenerativeKind.CUSTOM_DISCRETE:
        return float(spec.dgp.level_probs @ spec.dgp.propensity)
    grid, weights = quadrature_grid(BINARY_AXES, BINARY_NODES)
    return float(weights @ paper_propensity(_padded(grid)))


def _pair(values):
    return np.column_stack([values, values])


def population_bounds(spec, params, estimand=Estimand.ATE):
    """True sharp (lower, upper) bounds at ``params``.

    Built-in designs integrate the closed-form nuisances by quadrature;
    discrete laws sum exactly.
    """
    if spec.kind is GenerativeKind.CUSTOM_DISCRETE:
        return mixture_bounds(spec.dgp, params, estimand)
    if spec.kind is GenerativeKind.PAPER_BINARY:
        grid, weights = quadrature_grid(BINARY_AXES, BINARY_NODES)
        x = _padded(grid)
        mu = paper_binary_mean(x)
        _, _, rho_plus, rho_minus = binary_nuisances(mu, params)
    else:
        grid, weights = quadrature_grid(CONTINUOUS_AXES, CONTINUOUS_NODES)
        x = _padded(grid)
        mu = paper_continuous_mean(x)
        sd = paper_continuous_sd(x)
        rho_plus = gaussian_rho(mu, sd, params, 1)
        rho_minus = gaussian_rho(mu, sd, params, -1)
    e = paper_propensity(x)
    return aggregate_bounds(weights, e, _pair(mu), _pair(rho_plus), _pair(rho_minus), estimand)


def _paper_oracle(spec):
    binary = spec.outcome_kind is OutcomeKind.BINARY

    def oracle(covariates, query):
        if query.target is Target.PROPENSITY:
            return paper_propensity(covariates)
        if binary:
            mu = paper_binary_mean(covariates)
            if query.target is Target.MEAN:
                return mu
            params = query.params
            if query.target is Target.QUANTILE:
                return (mu > 1 - query.alpha).astype(float)
            _, _, rho_plus, rho_minus = binary_nuisances(mu, params)
            return rho_plus if query.side > 0 else rho_minus
        mean, sd = paper_continuous_mean(covariates), paper_continuous_sd(covariates)
        if query.target is Target.MEAN:
            return mean
        if query.target is Target.QUANTILE:
            return gaussian_quantile(mean, sd, query.alpha)
        return gaussian_rho(mean, sd, query.params, query.side)

    return oracle


def _discrete_oracle(dgp):
    by_lambda = {}

    def oracle(covariates, query):
        level = dgp.level_of(covariates)
        if query.target is Target.PROPENSITY:
            return dgp.propensity[level]
        dists = [dgp.dist(index, query.arm) for index in range(dgp.n_levels)]
        if query.target is Target.MEAN:
            return np.array([dist.mean for dist in dists])[level]
        if query.target is Target.QUANTILE:
            return np.array([empirical_quantile(dist, query.alpha) for dist in dists])[level]
        params = query.params
        if params.lam not in by_lambda:
            by_lambda[params.lam] = true_nuisances(dgp, params)
        eta = by_lambda[params.lam]
        rho = eta.rho_plus if query.side > 0 else eta.rho_minus
        return rho[level, query.arm]

    return oracle


def oracle_bundle(spec):
    """Learners that return the design's true nuisances instead of fitting them."""
    if spec.kind is GenerativeKind.CUSTOM_DISCRETE:
        fn = _discrete_oracle(spec.dgp)
    else:
        fn = _paper_oracle(spec)
    injected = LearnerSpec.injected(fn)
    return LearnerBundle(propensity=injected, quantile=injected, regression=injected)
