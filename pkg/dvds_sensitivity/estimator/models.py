from dataclasses import dataclass

import numpy as np

from msm.models import Estimand, Side, frozen_array


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Fold index per row; a deterministic function of (n, k, seed)."""

    assignments: np.ndarray
    k: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, 'assignments', frozen_array(self.assignments, dtype=np.int64))

    @property
    def n(self):
        return self.assignments.shape[0]

    @property
    def sizes(self):
        return np.bincount(self.assignments, minlength=self.k)

    def fold_rows(self, fold):
        return np.flatnonzero(self.assignments == fold)

    def complement(self, fold):
        return np.flatnonzero(self.assignments != fold)


@dataclass(frozen=True, eq=False)
class BoundEstimate:
    """Point bounds, standard errors and the per-row influence values behind them.

    For Mean1, Mean0 and ATE each psi is the mean of its influence values.
    For ATT the influence values are the centered ratio-form terms
    Y - φ₀∓ - Z·ψ_ATT±, which average to zero.
    """

    estimand: Estimand
    lam: float
    psi_lower: float
    psi_upper: float
    se_lower: float
    se_upper: float
    influence_lower: np.ndarray
    influence_upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'estimand', Estimand(self.estimand))
        object.__setattr__(self, 'influence_lower', frozen_array(self.influence_lower))
        object.__setattr__(self, 'influence_upper', frozen_array(self.influence_upper))

    @property
    def n(self):
        return self.influence_upper.shape[0]

    def psi(self, side):
        return self.psi_upper if Side(side) is Side.UPPER else self.psi_lower

    def se(self, side):
        return self.se_upper if Side(side) is Side.UPPER else self.se_lower

    def __eq__(self, other):
        if not isinstance(other, BoundEstimate):
            return NotImplemented
        return (
            (self.estimand, self.lam, self.psi_lower, self.psi_upper, self.se_lower, self.se_upper)
            == (other.estimand, other.lam, other.psi_lower, other.psi_upper, other.se_lower, other.se_upper)
            and np.array_equal(self.influence_lower, other.influence_lower)
            and np.array_equal(self.influence_upper, other.influence_upper)
        )

    __hash__ = None


@dataclass(frozen=True)
class SensitivityRecord:
    """One point of a sensitivity curve: the bounds at a single Λ plus their Wald limits."""

    estimate: BoundEstimate
    ci_lower: float
    ci_upper: float
    k: int
    seed: int

    @property
    def lam(self):
        return self.estimate.lam

    def as_dict(self):
        est = self.estimate
        return {
            'lambda': est.lam,
            'psi_lower': est.psi_lower,
            'psi_upper': est.psi_upper,
            'se_lower': est.se_lower,
            'se_upper': est.se_upper,
            'ci_lower': self.ci_lower,
            'ci_upper': self.ci_upper,
            'n': est.n,
            'K': self.k,
            'seed': self.seed,
        }
