from dataclasses import dataclass

import numpy as np

from msm.exceptions import ParameterDomainError

WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """A finite outcome distribution: atoms with nonnegative weights summing to one."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float, ndmin=1)
        weights = np.array(self.weights, dtype=float, ndmin=1)
        if atoms.ndim != 1 or atoms.shape != weights.shape or atoms.size == 0:
            raise ParameterDomainError('atoms and weights must be nonempty vectors of equal length')
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
            raise ParameterDomainError('atoms and weights must be finite')
        if np.any(weights < 0):
            raise ParameterDomainError('weights must be nonnegative')
        if abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise ParameterDomainError(f'weights must sum to 1, got {weights.sum()!r}')
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, atoms):
        atoms = np.asarray(atoms, dtype=float)
        return cls(atoms, np.full(atoms.size, 1.0 / atoms.size))

    @classmethod
    def bernoulli(cls, p):
        return cls([0.0, 1.0], [1.0 - p, p])

    @classmethod
    def point(cls, value):
        return cls([value], [1.0])

    @property
    def mean(self):
        return float(self.weights @ self.atoms)

    def negated(self):
        return DiscreteDist(-self.atoms, self.weights)

    def merged(self):
        """Sorted distinct atoms with the weights of tied atoms summed."""
        values, inverse = np.unique(self.atoms, return_inverse=True)
        return values, np.bincount(inverse, weights=self.weights, minlength=values.size)

    def expect(self, fn):
        """E[fn(Y)] for a vectorised ``fn``."""
        return float(self.weights @ fn(self.atoms))
