"""Exact sharp bounds for finite laws, derived three independent ways.

* ``sharp_bound_oracle`` reweights each conditional outcome pmf greedily
  inside the likelihood-ratio box [1/Λ, Λ].
* ``mixture_bounds`` aggregates the quantile/CVaR nuisances of
  ``true_nuisances``.
* ``adversarial_ipw_bound`` weights outcomes by the inverse of the
  worst-case propensity from ``adversarial_propensity``.
"""
import logging

import numpy as np

from cvar.services import cvar, empirical_quantile, transformed_outcome
from estimator.services import influence_array
from msm.exceptions import OracleError
from msm.models import Estimand, Side

from .models import LevelNuisances

logger = logging.getLogger(__name__)

ARMS = (0, 1)
# Slack allowed when the boundary multiplier is checked against [1/Λ, Λ].
FEASIBILITY_SLACK = 1e-9


def true_nuisances(dgp, params):
    shape = (dgp.n_levels, 2)
    mu, q_plus, q_minus, rho_plus, rho_minus = (np.empty(shape) for _ in range(5))
    inv = params.inv_lam
    for level in range(dgp.n_levels):
        for arm in ARMS:
            dist = dgp.dist(level, arm)
            mu[level, arm] = dist.mean
            q_plus[level, arm] = empirical_quantile(dist, params.quantile_level(Side.UPPER))
            q_minus[level, arm] = empirical_quantile(dist, params.quantile_level(Side.LOWER))
            rho_plus[level, arm] = inv * dist.mean + (1 - inv) * cvar(dist, params, Side.UPPER)
            rho_minus[level, arm] = inv * dist.mean + (1 - inv) * cvar(dist, params, Side.LOWER)
    return LevelNuisances(
        e=dgp.propensity, mu=mu, q_plus=q_plus, q_minus=q_minus, rho_plus=rho_plus, rho_minus=rho_minus
    )


def aggregate_bounds(weights, e, mu, rho_plus, rho_minus, estimand):
    """Combine per-point nuisances into (lower, upper) for an estimand.

    ``weights`` integrate over covariate points; pair arrays have columns
    (control, treated). Used for finite laws and for quadrature alike.
    """
    weights, e = np.asarray(weights), np.asarray(e)
    rho = {Side.UPPER: np.asarray(rho_plus), Side.LOWER: np.asarray(rho_minus)}
    mean1 = {side: float(weights @ (e * mu[:, 1] + (1 - e) * rho[side][:, 1])) for side in Side}
    mean0 = {side: float(weights @ ((1 - e) * mu[:, 0] + e * rho[side][:, 0])) for side in Side}
    estimand = Estimand(estimand)
    if estimand is Estimand.MEAN1:
        return mean1[Side.LOWER], mean1[Side.UPPER]
    if estimand is Estimand.MEAN0:
        return mean0[Side.LOWER], mean0[Side.UPPER]
    if estimand is Estimand.ATE:
        return mean1[Side.LOWER] - mean0[Side.UPPER], mean1[Side.UPPER] - mean0[Side.LOWER]
    mean_y = float(weights @ (e * mu[:, 1] + (1 - e) * mu[:, 0]))
    mean_z = float(weights @ e)
    return (mean_y - mean0[Side.UPPER]) / mean_z, (mean_y - mean0[Side.LOWER]) / mean_z


def mixture_bounds(dgp, params, estimand):
    eta = true_nuisances(dgp, params)
    return aggregate_bounds(dgp.level_probs, eta.e, eta.mu, eta.rho_plus, eta.rho_minus, estimand)


def reweighted_regression(dist, params, side):
    """Extreme mean of Y over laws G with dG/dF in [1/Λ, Λ].

    Every atom starts at weight w/Λ; the remaining mass 1 − 1/Λ goes to the
    largest atoms (smallest for Side.LOWER), each taking up to (Λ − 1/Λ)·w.
    """
    lam = params.lam
    descending = Side(side) is Side.UPPER
    order = np.argsort(-dist.atoms if descending else dist.atoms, kind='stable')
    mass = dist.weights / lam
    remaining = 1.0 - 1.0 / lam
    extra = np.zeros_like(mass)
    for index in order:
        if remaining <= 0:
            break
        take = min((lam - 1.0 / lam) * dist.weights[index], remaining)
        extra[index] = take
        remaining -= take
    return float((mass + extra) @ dist.atoms)


def sharp_bound_oracle(dgp, params, estimand):
    """Sharp (lower, upper) bounds by direct reweighting of each conditional pmf."""
    count = dgp.n_levels
    p, e = dgp.level_probs, dgp.propensity
    mu = np.array([[dgp.dist(level, arm).mean for arm in ARMS] for level in range(count)])
    extreme = {
        side: np.array([[reweighted_regression(dgp.dist(level, arm), params, side) for arm in ARMS]
                        for level in range(count)])
        for side in Side
    }
    estimand = Estimand(estimand)
    if estimand is not Estimand.ATT:
        return aggregate_bounds(p, e, mu, extreme[Side.UPPER], extreme[Side.LOWER], estimand)

    # E[Y(1) - Y(0) | Z = 1] with the treated units' unseen control mean pushed to each extreme.
    treated_mean = float(p @ (e * mu[:, 1]))
    share = float(p @ e)
    lower = (treated_mean - float(p @ (e * extreme[Side.UPPER][:, 0]))) / share
    upper = (treated_mean - float(p @ (e * extreme[Side.LOWER][:, 0]))) / share
    return lower, upper


def _boundary_split(dist, q):
    above = float(dist.weights[dist.atoms > q].sum())
    below = float(dist.weights[dist.atoms < q].sum())
    at = float(dist.weights[dist.atoms == q].sum())
    return above, below, at


def inverse_odds_multipliers(dist, params, side):
    """1/m(y) for every atom of ``dist``; Σ f(y)/m(y) = 1 holds exactly.

    For the upper side atoms above Q_τ get Λ, atoms below get 1/Λ, and the
    boundary atom absorbs the rest. The lower side mirrors this around Q_{1-τ}.
    """
    lam = params.lam
    q = empirical_quantile(dist, params.quantile_level(side))
    above, below, at = _boundary_split(dist, q)
    heavy, light = (above, below) if Side(side) is Side.UPPER else (below, above)
    if at <= 0:
        raise OracleError(f'quantile {q!r} carries no probability mass')
    boundary = (1.0 - lam * heavy - light / lam) / at
    if not (1.0 / lam - FEASIBILITY_SLACK <= boundary <= lam + FEASIBILITY_SLACK):
        raise OracleError(f'boundary multiplier {boundary!r} falls outside [1/{lam}, {lam}]')
    boundary = min(max(boundary, 1.0 / lam), lam)
    upweighted = dist.atoms > q if Side(side) is Side.UPPER else dist.atoms < q
    inverse = np.where(upweighted, lam, 1.0 / lam)
    return np.where(dist.atoms == q, boundary, inverse), q


def adversarial_propensity(dgp, params, level, y, side, arm=1):
    """Worst-case treatment propensity e₊(x, y) for the arm-``arm`` regression.

    Returned as P(Z = 1 | X, Y(arm) = y) in both cases; for arm 0 the
    construction runs on the control odds.
    """
    dist = dgp.dist(level, arm)
    arm_prob = dgp.arm_prob(level, arm)
    inverse, q = inverse_odds_multipliers(dist, params, side)
    matches = np.flatnonzero(dist.atoms == y)
    if matches.size:
        inverse_m = float(inverse[matches[0]])
    else:
        lam = params.lam
        upweighted = y > q if Side(side) is Side.UPPER else y < q
        inverse_m = lam if upweighted else 1.0 / lam
    odds = arm_prob / (1.0 - arm_prob) / inverse_m
    arm_adversarial = odds / (1.0 + odds)
    return arm_adversarial if arm == 1 else 1.0 - arm_adversarial


def adversarial_ipw_bound(dgp, params, arm, side):
    """E[Y·1{Z = arm} / P₊(Z = arm | X, Y)] under the adversarial propensity."""
    total = 0.0
    for level in range(dgp.n_levels):
        dist = dgp.dist(level, arm)
        arm_prob = dgp.arm_prob(level, arm)
        adversarial = np.array([
            adversarial_propensity(dgp, params, level, atom, side, arm=arm) for atom in dist.atoms
        ])
        arm_adversarial = adversarial if arm == 1 else 1.0 - adversarial
        total += dgp.level_probs[level] * arm_prob * float(dist.weights @ (dist.atoms / arm_adversarial))
    return total


def adversarial_bounds(dgp, params, estimand):
    estimand = Estimand(estimand)
    mean = {(arm, side): adversarial_ipw_bound(dgp, params, arm, side) for arm in ARMS for side in Side}
    if estimand is Estimand.MEAN1:
        return mean[1, Side.LOWER], mean[1, Side.UPPER]
    if estimand is Estimand.MEAN0:
        return mean[0, Side.LOWER], mean[0, Side.UPPER]
    if estimand is Estimand.ATE:
        return mean[1, Side.LOWER] - mean[0, Side.UPPER], mean[1, Side.UPPER] - mean[0, Side.LOWER]
    p, e = dgp.level_probs, dgp.propensity
    mean_y = sum(
        p[level] * (e[level] * dgp.dist(level, 1).mean + (1 - e[level]) * dgp.dist(level, 0).mean)
        for level in range(dgp.n_levels)
    )
    share = float(p @ e)
    return (mean_y - mean[0, Side.UPPER]) / share, (mean_y - mean[0, Side.LOWER]) / share


def conditional_moment(dgp, params, level, side, arm=1):
    """E[1{Z = arm} / P₊(Z = arm | X, Y) | X = level]; equals one for the adversarial propensity."""
    dist = dgp.dist(level, arm)
    arm_prob = dgp.arm_prob(level, arm)
    adversarial = np.array([adversarial_propensity(dgp, params, level, atom, side, arm=arm) for atom in dist.atoms])
    arm_adversarial = adversarial if arm == 1 else 1.0 - adversarial
    return arm_prob * float(dist.weights @ (1.0 / arm_adversarial))


def exact_rho(dgp, params, q_override, side):
    """ϱ(x, z; Q̂): the conditional mean of the transformed outcome built on ``q_override``."""
    q_override = np.asarray(q_override, dtype=float)
    rho = np.empty((dgp.n_levels, 2))
    for level in range(dgp.n_levels):
        for arm in ARMS:
            dist = dgp.dist(level, arm)
            q = q_override[level, arm]
            rho[level, arm] = dist.expect(lambda y: transformed_outcome(y, q, params, side))
    return rho


def _joint_atoms(dgp):
    levels, arms, outcomes, weights = [], [], [], []
    for level in range(dgp.n_levels):
        for arm in ARMS:
            dist = dgp.dist(level, arm)
            size = dist.atoms.size
            levels.append(np.full(size, level))
            arms.append(np.full(size, arm))
            outcomes.append(dist.atoms)
            weights.append(dgp.level_probs[level] * dgp.arm_prob(level, arm) * dist.weights)
    return tuple(np.concatenate(part) for part in (levels, arms, outcomes, weights))


def population_dvds(dgp, params, estimand, side, eta_override=None):
    """The exact expectation of the influence function under the law ``dgp``.

    ``eta_override`` is a LevelNuisances used in place of the true nuisances.
    """
    eta_levels = eta_override if eta_override is not None else true_nuisances(dgp, params)
    level, arm, y, weight = _joint_atoms(dgp)
    eta = eta_levels.for_rows(level)
    estimand, side = Estimand(estimand), Side(side)
    if estimand is not Estimand.ATT:
        return float(weight @ influence_array(y, arm, eta, params, estimand, side))
    control = float(weight @ influence_array(y, arm, eta, params, Estimand.MEAN0, side.opposite))
    return (float(weight @ y) - control) / float(weight @ arm)
