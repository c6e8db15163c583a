"""Quantiles, conditional value at risk and the two outcome kernels.

The kernels accept scalars or numpy arrays and broadcast; scalar inputs give
Python floats back.
"""
import numpy as np

from msm.exceptions import ParameterDomainError
from msm.models import Side

# Cumulative weights within this distance of alpha count as reaching it.
CDF_TOLERANCE = 1e-12


def _as_output(value):
    return float(value) if np.ndim(value) == 0 else value


def empirical_quantile(dist, alpha):
    """Left-continuous inverse: the smallest atom q with F(q) >= alpha."""
    if not 0 < alpha <= 1:
        raise ParameterDomainError(f'quantile level must lie in (0, 1], got {alpha!r}')
    values, weights = dist.merged()
    cdf = np.cumsum(weights)
    index = int(np.searchsorted(cdf, alpha - CDF_TOLERANCE, side='left'))
    return float(values[min(index, values.size - 1)])


def cvar(dist, params, side):
    """Upper CVaR at level tau, or the mirrored lower-tail value for Side.LOWER."""
    if Side(side) is Side.LOWER:
        return -cvar(dist.negated(), params, Side.UPPER)
    q = empirical_quantile(dist, params.tau)
    return q + params.tail_weight * dist.expect(lambda y: np.maximum(y - q, 0.0))


def cvar_dual_oracle(dist, params, side):
    """Solve sup E_G[Y] over dG/dF <= 1/(1 - tau) by greedy mass allocation.

    Atoms are visited from the most favourable down (stable order, so equal
    values keep their index order) and each takes min(cap * weight, mass left).
    """
    descending = Side(side) is Side.UPPER
    order = np.argsort(-dist.atoms if descending else dist.atoms, kind='stable')
    remaining = 1.0
    total = 0.0
    for index in order:
        if remaining <= 0:
            break
        mass = min(dist.weights[index] * params.tail_weight, remaining)
        total += mass * dist.atoms[index]
        remaining -= mass
    return total


def _tail_part(y, q, side):
    excess = np.subtract(y, q)
    if Side(side) is Side.UPPER:
        return np.maximum(excess, 0.0)
    return np.minimum(excess, 0.0)


def transformed_outcome(y, q, params, side):
    """Λ⁻¹y + (1 − Λ⁻¹)(q + {y − q}± / (1 − τ)); its conditional mean is ϱ±."""
    inv = params.inv_lam
    value = inv * np.asarray(y, dtype=float) + (1.0 - inv) * (q + params.tail_weight * _tail_part(y, q, side))
    return _as_output(value)


def cvar_part(y, q, params, side):
    """q + {y − q}± / (1 − τ), the quantity whose conditional mean is CVaR± at the true quantile."""
    return _as_output(np.asarray(q, dtype=float) + params.tail_weight * _tail_part(y, q, side))


def weighting_kernel(y, q, params, side):
    """q + Λ^{±sign(y − q)}(y − q) with sign(0) = +1."""
    excess = np.subtract(y, q, dtype=float)
    sign = np.where(excess >= 0, 1.0, -1.0)
    value = q + np.power(params.lam, int(Side(side)) * sign) * excess
    return _as_output(value)


def expected_transformed_outcome(dist, q, params, side):
    """E[transformed_outcome(Y, q)] under ``dist``; minimised over q at the true quantile."""
    return dist.expect(lambda y: transformed_outcome(y, q, params, side))
