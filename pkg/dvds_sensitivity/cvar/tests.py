import numpy as np
from django.test import SimpleTestCase
from scipy.stats import norm

from msm.exceptions import ParameterDomainError
from msm.models import Side
from msm.services import sensitivity_params

from .models import DiscreteDist
from .services import (
    cvar,
    cvar_dual_oracle,
    empirical_quantile,
    expected_transformed_outcome,
    transformed_outcome,
    weighting_kernel,
)

LAMBDAS = (1.0, 1.5, 2.0, 5.0)


def random_dist(rng, max_atoms=12):
    size = int(rng.integers(1, max_atoms + 1))
    # Rounded atoms create ties on purpose.
    atoms = np.round(rng.normal(scale=3.0, size=size), 1)
    weights = rng.dirichlet(np.ones(size))
    weights /= weights.sum()
    return DiscreteDist(atoms, weights)


class DiscreteDistTests(SimpleTestCase):
    def test_rejects_bad_weights(self):
        with self.assertRaises(ParameterDomainError):
            DiscreteDist([1, 2], [0.5, 0.6])
        with self.assertRaises(ParameterDomainError):
            DiscreteDist([1, 2], [1.5, -0.5])
        with self.assertRaises(ParameterDomainError):
            DiscreteDist([], [])

    def test_merges_ties(self):
        values, weights = DiscreteDist([2, 1, 2], [0.25, 0.5, 0.25]).merged()
        np.testing.assert_array_equal(values, [1, 2])
        np.testing.assert_allclose(weights, [0.5, 0.5])


class QuantileTests(SimpleTestCase):
    def test_cdf_walk(self):
        dist = DiscreteDist.uniform([1, 2, 3])
        self.assertEqual(empirical_quantile(dist, 0.5), 2)
        self.assertEqual(empirical_quantile(dist, 1.0), 3)

    def test_heavy_lower_atom(self):
        dist = DiscreteDist([0, 10], [0.9, 0.1])
        self.assertEqual(empirical_quantile(dist, 2 / 3), 0)

    def test_exact_cdf_hit_takes_lower_atom(self):
        dist = DiscreteDist.uniform([3, 1, 2])
        self.assertEqual(empirical_quantile(dist, 1 / 3), 1)

    def test_level_outside_unit_interval(self):
        dist = DiscreteDist.uniform([1, 2, 3])
        for alpha in (0.0, -0.1, 1.5):
            with self.assertRaises(ParameterDomainError):
                empirical_quantile(dist, alpha)


class CvarTests(SimpleTestCase):
    def setUp(self):
        self.dist = DiscreteDist([0, 10], [0.9, 0.1])
        self.params = sensitivity_params(2.0)

    def test_upper_tail(self):
        self.assertAlmostEqual(cvar(self.dist, self.params, Side.UPPER), 3.0, places=12)

    def test_lower_tail(self):
        self.assertAlmostEqual(cvar(self.dist, self.params, Side.LOWER), 0.0, places=12)

    def test_unconfounded_is_top_half_mean(self):
        dist = DiscreteDist.uniform([0, 10])
        self.assertAlmostEqual(cvar(dist, sensitivity_params(1.0), Side.UPPER), 10.0, places=12)

    def test_dual_oracle_examples(self):
        self.assertAlmostEqual(cvar_dual_oracle(self.dist, self.params, Side.UPPER), 3.0, places=12)
        self.assertEqual(cvar_dual_oracle(DiscreteDist.point(5.0), sensitivity_params(7.0), Side.UPPER), 5.0)
        wide = cvar_dual_oracle(DiscreteDist.uniform([-1, 1]), sensitivity_params(1e9), Side.UPPER)
        self.assertAlmostEqual(wide, 1.0, places=6)

    def test_dual_equivalence(self):
        rng = np.random.default_rng(20240601)
        for _ in range(1000):
            dist = random_dist(rng)
            for lam in LAMBDAS:
                params = sensitivity_params(lam)
                for side in Side:
                    self.assertLessEqual(
                        abs(cvar(dist, params, side) - cvar_dual_oracle(dist, params, side)), 1e-9
                    )

    def test_ordering_and_growth_in_lambda(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            dist = random_dist(rng)
            mean = dist.mean
            upper_gaps, lower_gaps = [], []
            for lam in LAMBDAS:
                params = sensitivity_params(lam)
                upper = cvar(dist, params, Side.UPPER)
                lower = cvar(dist, params, Side.LOWER)
                self.assertLessEqual(lower, mean + 1e-12)
                self.assertLessEqual(mean, upper + 1e-12)
                upper_gaps.append(upper - mean)
                lower_gaps.append(mean - lower)
            self.assertTrue(all(b >= a - 1e-12 for a, b in zip(upper_gaps, upper_gaps[1:])))
            self.assertTrue(all(b >= a - 1e-12 for a, b in zip(lower_gaps, lower_gaps[1:])))


class KernelTests(SimpleTestCase):
    def setUp(self):
        self.params = sensitivity_params(2.0)

    def test_transformed_outcome_examples(self):
        self.assertAlmostEqual(transformed_outcome(2.0, 1.0, self.params, Side.UPPER), 3.0, places=14)
        self.assertAlmostEqual(transformed_outcome(0.0, 1.0, self.params, Side.UPPER), 0.5, places=14)
        self.assertEqual(transformed_outcome(4.2, -7.0, sensitivity_params(1.0), Side.UPPER), 4.2)

    def test_weighting_kernel_examples(self):
        self.assertEqual(weighting_kernel(2.0, 1.0, self.params, Side.UPPER), 3.0)
        self.assertEqual(weighting_kernel(0.0, 1.0, self.params, Side.UPPER), 0.5)
        self.assertEqual(weighting_kernel(1.5, 1.5, self.params, Side.LOWER), 1.5)

    def test_kernels_agree_everywhere(self):
        rng = np.random.default_rng(7)
        size = 100_000
        y = rng.normal(scale=10.0, size=size)
        q = rng.normal(scale=10.0, size=size)
        # A slice of exact ties exercises sign(0) = +1.
        q[:1000] = y[:1000]
        lams = rng.uniform(1.0, 100.0, size=size)
        for side in Side:
            kernel = np.empty(size)
            transformed = np.empty(size)
            for lam in np.unique(np.round(lams, 0)):
                params = sensitivity_params(lam)
                mask = np.round(lams, 0) == lam
                kernel[mask] = weighting_kernel(y[mask], q[mask], params, side)
                transformed[mask] = transformed_outcome(y[mask], q[mask], params, side)
            scale = np.abs(y) + np.abs(q) + np.abs(kernel)
            self.assertTrue(np.all(np.abs(kernel - transformed) <= 1e-12 * scale))


class QuantileRobustnessTests(SimpleTestCase):
    def test_true_quantile_is_the_optimal_threshold(self):
        # Upper side is convex in q (minimised at Q+), lower side concave (maximised at Q-).
        rng = np.random.default_rng(5)
        grid = np.linspace(-8, 8, 161)
        for _ in range(100):
            dist = random_dist(rng)
            candidates = np.concatenate([grid, dist.atoms])
            for lam in LAMBDAS:
                params = sensitivity_params(lam)
                for side in Side:
                    q_true = empirical_quantile(dist, params.quantile_level(side))
                    best = expected_transformed_outcome(dist, q_true, params, side)
                    values = [expected_transformed_outcome(dist, q, params, side) for q in candidates]
                    if side is Side.UPPER:
                        self.assertLessEqual(best, min(values) + 1e-12)
                    else:
                        self.assertGreaterEqual(best, max(values) - 1e-12)
                    rho = params.inv_lam * dist.mean + (1 - params.inv_lam) * cvar(dist, params, side)
                    self.assertAlmostEqual(best, rho, places=10)

    def test_quantile_error_enters_at_second_order(self):
        step = 0.005
        atoms = np.arange(-6, 6 + step / 2, step)
        weights = norm.pdf(atoms)
        weights /= weights.sum()
        dist = DiscreteDist(atoms, weights)
        density_bound = weights.max() / step
        for lam in (1.5, 2.0, 5.0):
            params = sensitivity_params(lam)
            q_true = empirical_quantile(dist, params.tau)
            base = expected_transformed_outcome(dist, q_true, params, Side.UPPER)
            ratios = []
            for delta in (0.1, 0.05, 0.025):
                for signed in (delta, -delta):
                    error = expected_transformed_outcome(dist, q_true + signed, params, Side.UPPER) - base
                    self.assertGreaterEqual(error, -1e-12)
                    ratios.append(error / delta ** 2)
            self.assertLessEqual(max(ratios), lam * density_bound)
            self.assertGreater(min(ratios), 0.0)
