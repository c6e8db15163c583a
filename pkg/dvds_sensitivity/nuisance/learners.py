"""Built-in linear learners: feature maps, penalized logistic regression,
ridge regression and linear quantile regression.

Every learner works on standardized features with an unpenalized intercept
and returns a ``LinearModel`` whose ``predict`` is a pure function.
"""
import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import linalg
from scipy.special import expit

from msm.exceptions import ConvergenceError

from .models import FeatureExpansion

logger = logging.getLogger(__name__)

# Columns whose training standard deviation falls below this are dropped.
MIN_SCALE = 1e-12


def _expand(covariates, expansion):
    if FeatureExpansion(expansion) is FeatureExpansion.RAW or covariates.shape[1] < 2:
        return covariates
    pairs = [covariates[:, i] * covariates[:, j] for i, j in combinations(range(covariates.shape[1]), 2)]
    return np.column_stack([covariates, *pairs])


@dataclass(frozen=True, eq=False)
class FeatureMap:
    expansion: FeatureExpansion
    center: np.ndarray
    scale: np.ndarray
    keep: np.ndarray

    @classmethod
    def fit(cls, covariates, expansion):
        expanded = _expand(np.asarray(covariates, dtype=float), expansion)
        center = expanded.mean(axis=0)
        scale = expanded.std(axis=0)
        keep = scale > MIN_SCALE
        return cls(expansion=expansion, center=center[keep], scale=scale[keep], keep=keep)

    @property
    def width(self):
        return int(self.keep.sum())

    def transform(self, covariates):
        expanded = _expand(np.asarray(covariates, dtype=float), self.expansion)
        return (expanded[:, self.keep] - self.center) / self.scale


@dataclass(frozen=True, eq=False)
class LinearModel:
    features: FeatureMap
    intercept: float
    coef: np.ndarray
    link: str = 'identity'

    def linear_predictor(self, covariates):
        return self.intercept + self.features.transform(covariates) @ self.coef

    def predict(self, covariates):
        eta = self.linear_predictor(covariates)
        if self.link == 'logit':
            return expit(eta)
        return eta


def _with_intercept(design):
    return np.column_stack([np.ones(design.shape[0]), design])


def _logistic_objective(beta, design, target, reg):
    eta = design @ beta
    # log(1 + exp(eta)) - target * eta, computed without overflow.
    loss = np.mean(np.logaddexp(0.0, eta) - target * eta)
    return loss + 0.5 * reg * float(beta[1:] @ beta[1:])


def fit_logistic(covariates, target, expansion, regularization, max_iter, tol):
    """Damped Newton on the mean log-loss plus (reg / 2)·||w||², intercept free.

    Stops when the largest gradient component drops below ``tol``; raises
    ConvergenceError carrying the last iterate after ``max_iter`` steps.
    """
    features = FeatureMap.fit(covariates, expansion)
    design = _with_intercept(features.transform(covariates))
    target = np.asarray(target, dtype=float)
    n, width = design.shape
    penalty = np.full(width, float(regularization))
    penalty[0] = 0.0

    mean = np.clip(target.mean(), 1e-6, 1 - 1e-6)
    beta = np.zeros(width)
    beta[0] = np.log(mean / (1 - mean))
    objective = _logistic_objective(beta, design, target, regularization)

    for iteration in range(int(max_iter)):
        prob = expit(design @ beta)
        gradient = design.T @ (prob - target) / n + penalty * beta
        if np.max(np.abs(gradient)) < tol:
            logger.debug('Logistic fit converged after %d Newton steps', iteration)
            return LinearModel(features, float(beta[0]), beta[1:].copy(), link='logit')
        weights = prob * (1 - prob)
        hessian = (design.T * weights) @ design / n + np.diag(penalty)
        try:
            step = linalg.solve(hessian, gradient, assume_a='pos')
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(hessian, gradient)[0]

        # Backtracking keeps every accepted step a descent step.
        size = 1.0
        while size > 1e-10:
            candidate = beta - size * step
            value = _logistic_objective(candidate, design, target, regularization)
            if value <= objective + 1e-4 * size * float(gradient @ -step):
                break
            size *= 0.5
        beta, objective = candidate, value

    raise ConvergenceError(
        f'logistic regression did not reach tolerance {tol} in {max_iter} iterations',
        last_iterate=beta.copy(),
    )


def fit_ridge(covariates, target, expansion, regularization):
    """Closed-form ridge on centered standardized features; reg = 0 is least squares."""
    features = FeatureMap.fit(covariates, expansion)
    design = features.transform(covariates)
    target = np.asarray(target, dtype=float)
    offset = float(target.mean())
    if features.width == 0:
        return LinearModel(features, offset, np.zeros(0))

    n = design.shape[0]
    gram = design.T @ design / n
    moment = design.T @ (target - offset) / n
    if regularization > 0:
        coef = linalg.solve(gram + regularization * np.eye(features.width), moment, assume_a='pos')
    else:
        coef = linalg.lstsq(gram, moment)[0]
    return LinearModel(features, offset, coef)


def _pinball_loss(residual, alpha):
    return float(np.mean(residual * (alpha - (residual < 0))))


def fit_pinball(covariates, target, alpha, expansion, regularization, max_iter, tol):
    """Linear α-quantile regression by normalized subgradient descent.

    Warm-started at the least-squares fit shifted by the α-quantile of its
    residuals. The subgradient at a zero residual uses α − 1. The iterate
    with the smallest penalized loss is returned.
    """
    start = fit_ridge(covariates, target, expansion, regularization)
    features = start.features
    design = _with_intercept(features.transform(covariates))
    target = np.asarray(target, dtype=float)
    residual = target - design[:, 1:] @ start.coef - start.intercept
    beta = np.concatenate([[start.intercept + np.quantile(residual, alpha, method='inverted_cdf')], start.coef])

    penalty = np.full(beta.size, float(regularization))
    penalty[0] = 0.0

    def loss(value):
        return _pinball_loss(target - design @ value, alpha) + 0.5 * float(penalty @ (value * value))

    best, best_loss = beta.copy(), loss(beta)
    step0 = 0.1 * max(float(np.std(target)), MIN_SCALE)
    for iteration in range(int(max_iter)):
        residual = target - design @ beta
        psi = alpha - (residual <= 0)
        gradient = -design.T @ psi / design.shape[0] + penalty * beta
        norm = float(np.linalg.norm(gradient))
        if norm < tol:
            break
        beta = beta - (step0 / np.sqrt(iteration + 1)) * gradient / norm
        current = loss(beta)
        if current < best_loss:
            best, best_loss = beta.copy(), current
    logger.debug('Pinball fit at alpha=%.4f finished with loss %.6g', alpha, best_loss)
    return LinearModel(features, float(best[0]), best[1:].copy())
