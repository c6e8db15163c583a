import numpy as np
from django.test import SimpleTestCase

from cvar.models import DiscreteDist
from cvar.services import cvar
from msm.exceptions import ConvergenceError, DegenerateFitError, ParameterDomainError
from msm.models import Dataset, OutcomeKind, Side
from msm.services import sensitivity_params

from .learners import FeatureMap
from .models import FeatureExpansion, LearnerKind, LearnerSpec, RhoStrategy, Target, default_bundle
from .serializers import LearnerBundleSerializer
from .services import (
    binary_nuisances,
    clip_propensity,
    fit_outcome_regression,
    fit_propensity,
    fit_quantile,
    fit_rho,
)

LOGISTIC = LearnerSpec(kind=LearnerKind.LOGISTIC, max_iter=500)
RIDGE = LearnerSpec(kind=LearnerKind.RIDGE)
CONSTANT = LearnerSpec(kind=LearnerKind.CONSTANT)


def all_rows(data):
    return np.arange(data.n)


class LearnerSpecTests(SimpleTestCase):
    def test_hyperparameter_domains(self):
        for kwargs in ({'regularization': -1.0}, {'max_iter': 0}, {'tol': 0.0}):
            with self.assertRaises(ParameterDomainError):
                LearnerSpec(kind='ridge', **kwargs)

    def test_injection_needs_a_callable(self):
        with self.assertRaises(ParameterDomainError):
            LearnerSpec(kind=LearnerKind.ORACLE_INJECTION)
        with self.assertRaises(ParameterDomainError):
            LearnerSpec(kind=LearnerKind.RIDGE, oracle=lambda x, query: x[:, 0])

    def test_feature_map_adds_pairs_and_drops_constants(self):
        covariates = np.array([[1.0, 2.0, 5.0], [2.0, 0.0, 5.0], [3.0, 1.0, 5.0]])
        features = FeatureMap.fit(covariates, FeatureExpansion.PAIRWISE)
        # Only x3 itself is constant.
        self.assertEqual(features.width, 5)
        np.testing.assert_allclose(features.transform(covariates).mean(axis=0), 0.0, atol=1e-12)


class ClipPropensityTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(clip_propensity(0.001, 0.01), 0.01)
        self.assertEqual(clip_propensity(0.5, 0.01), 0.5)
        self.assertEqual(clip_propensity(0.9999, 0.02), 0.98)

    def test_epsilon_domain(self):
        for epsilon in (0.0, 0.5, -0.1):
            with self.assertRaises(ParameterDomainError):
                clip_propensity(0.3, epsilon)


class PropensityTests(SimpleTestCase):
    def setUp(self):
        x = np.linspace(-2, 2, 100).reshape(-1, 1)
        outcome = np.random.default_rng(0).normal(size=100)
        self.data = Dataset(covariates=x, treatment=(x[:, 0] > 0).astype(int), outcome=outcome)

    def test_separable_direction_is_recovered(self):
        predictor = fit_propensity(self.data, all_rows(self.data), LOGISTIC)
        grid = np.linspace(-2, 2, 41).reshape(-1, 1)
        grid = grid[grid[:, 0] != 0]
        predictions = predictor(grid)
        np.testing.assert_array_equal(predictions >= 0.5, grid[:, 0] > 0)
        self.assertTrue(np.all((predictions > 0) & (predictions < 1)))

    def test_constant_is_treated_share(self):
        predictor = fit_propensity(self.data, all_rows(self.data), CONSTANT)
        share = self.data.treatment.mean()
        np.testing.assert_array_equal(predictor(np.zeros((3, 1))), np.full(3, share))

    def test_all_treated_rows(self):
        treated = np.flatnonzero(self.data.treatment == 1)
        with self.assertRaises(DegenerateFitError):
            fit_propensity(self.data, treated, LOGISTIC)

    def test_iteration_cap_reports_last_iterate(self):
        spec = LearnerSpec(kind=LearnerKind.LOGISTIC, max_iter=1, tol=1e-14)
        with self.assertRaises(ConvergenceError) as ctx:
            fit_propensity(self.data, all_rows(self.data), spec)
        self.assertIsNotNone(ctx.exception.last_iterate)

    def test_fits_are_deterministic(self):
        first = fit_propensity(self.data, all_rows(self.data), LOGISTIC)
        second = fit_propensity(self.data, all_rows(self.data), LOGISTIC)
        x = np.linspace(-1, 1, 7)
        np.testing.assert_array_equal(first(x), second(x))


class QuantileTests(SimpleTestCase):
    def test_linear_median(self):
        rng = np.random.default_rng(1)
        n = 5000
        x = rng.uniform(-2, 2, size=(n, 1))
        data = Dataset(covariates=x, treatment=np.ones(n), outcome=x[:, 0] + rng.normal(size=n))
        spec = default_bundle().quantile
        predictor = fit_quantile(data, all_rows(data), 1, 0.5, spec)
        grid = np.linspace(-1.5, 1.5, 31)
        self.assertLess(np.mean(np.abs(predictor(grid) - grid)), 0.15)

    def test_constant_is_empirical_quantile(self):
        data = Dataset(covariates=np.zeros(3), treatment=[1, 1, 1], outcome=[1.0, 2.0, 3.0])
        predictor = fit_quantile(data, all_rows(data), 1, 0.5, CONSTANT)
        np.testing.assert_array_equal(predictor(np.arange(4.0)), np.full(4, 2.0))

    def test_level_domain(self):
        data = Dataset(covariates=np.zeros(3), treatment=[1, 1, 1], outcome=[1.0, 2.0, 3.0])
        with self.assertRaises(ParameterDomainError):
            fit_quantile(data, all_rows(data), 1, 1.5, CONSTANT)

    def test_empty_arm(self):
        data = Dataset(covariates=np.zeros(3), treatment=[1, 1, 1], outcome=[1.0, 2.0, 3.0])
        with self.assertRaises(DegenerateFitError):
            fit_quantile(data, all_rows(data), 0, 0.5, CONSTANT)


class RhoTests(SimpleTestCase):
    def test_unconfounded_separate_is_outcome_regression(self):
        rng = np.random.default_rng(2)
        n = 400
        x = rng.normal(size=(n, 2))
        data = Dataset(covariates=x, treatment=rng.integers(0, 2, size=n), outcome=x @ [1.0, -0.5] + rng.normal(size=n))
        params = sensitivity_params(1.0)
        q_hat = fit_quantile(data, all_rows(data), 1, params.tau, default_bundle().quantile)
        rho = fit_rho(data, all_rows(data), 1, q_hat, params, Side.UPPER, RIDGE, RhoStrategy.SEPARATE)
        mu = fit_outcome_regression(data, all_rows(data), 1, RIDGE)
        np.testing.assert_array_equal(rho(x), mu(x))

    def test_direct_on_single_covariate_level(self):
        n = 1000
        outcome = np.zeros(n)
        outcome[::10] = 10.0
        data = Dataset(covariates=np.zeros(n), treatment=np.ones(n), outcome=outcome)
        zero = LearnerSpec.injected(lambda x, query: np.zeros(len(x)))
        q_hat = fit_quantile(data, all_rows(data), 1, 2 / 3, zero)
        rho = fit_rho(data, all_rows(data), 1, q_hat, sensitivity_params(2.0), Side.UPPER, RIDGE, RhoStrategy.DIRECT)
        np.testing.assert_allclose(rho(np.zeros(3)), 2.0, atol=1e-10)

    def test_separate_matches_direct_for_constant_learners(self):
        rng = np.random.default_rng(3)
        n = 300
        data = Dataset(covariates=rng.normal(size=n), treatment=np.ones(n), outcome=rng.exponential(size=n))
        params = sensitivity_params(3.0)
        q_hat = fit_quantile(data, all_rows(data), 1, params.tau, CONSTANT)
        fits = [
            fit_rho(data, all_rows(data), 1, q_hat, params, Side.LOWER, CONSTANT, strategy)
            for strategy in RhoStrategy
        ]
        np.testing.assert_allclose(fits[0]([0.0]), fits[1]([0.0]), atol=1e-12)

    def test_empty_arm(self):
        data = Dataset(covariates=np.zeros(3), treatment=[0, 0, 0], outcome=[1.0, 2.0, 3.0])
        q_hat = fit_quantile(data, all_rows(data), 0, 0.5, CONSTANT)
        with self.assertRaises(DegenerateFitError):
            fit_rho(data, all_rows(data), 1, q_hat, sensitivity_params(2.0), Side.UPPER, RIDGE)

    def test_injected_rho_receives_the_query(self):
        seen = []

        def oracle(covariates, query):
            seen.append(query)
            return np.full(len(covariates), 7.0)

        data = Dataset(covariates=np.zeros(2), treatment=[0, 1], outcome=[0.0, 1.0])
        params = sensitivity_params(2.0)
        rho = fit_rho(data, all_rows(data), 1, None, params, Side.LOWER, LearnerSpec.injected(oracle))
        np.testing.assert_array_equal(rho([0.0, 1.0]), [7.0, 7.0])
        self.assertEqual((seen[0].target, seen[0].arm, seen[0].side), (Target.RHO, 1, Side.LOWER))


class BinaryNuisanceTests(SimpleTestCase):
    def test_half_at_lambda_two(self):
        self.assertEqual(binary_nuisances(0.5, sensitivity_params(2.0)), (1.0, 0.0, 0.75, 0.25))

    def test_degenerate_outcome(self):
        for lam in (1.0, 2.0, 50.0):
            _, _, rho_plus, rho_minus = binary_nuisances(0.0, sensitivity_params(lam))
            self.assertEqual((rho_plus, rho_minus), (0.0, 0.0))

    def test_unconfounded_collapse(self):
        mu = np.linspace(0, 1, 11)
        _, _, rho_plus, rho_minus = binary_nuisances(mu, sensitivity_params(1.0))
        np.testing.assert_array_equal(rho_plus, mu)
        np.testing.assert_array_equal(rho_minus, mu)

    def test_domain(self):
        with self.assertRaises(ParameterDomainError):
            binary_nuisances(1.2, sensitivity_params(2.0))

    def test_ordering_and_nesting(self):
        mu = np.linspace(0, 1, 101)
        previous = None
        for lam in (1.0, 1.5, 2.0, 5.0, 1e6):
            _, _, rho_plus, rho_minus = binary_nuisances(mu, sensitivity_params(lam))
            self.assertTrue(np.all(rho_minus <= mu + 1e-15))
            self.assertTrue(np.all(mu <= rho_plus + 1e-15))
            if previous is not None:
                self.assertTrue(np.all(rho_plus >= previous[0] - 1e-15))
                self.assertTrue(np.all(rho_minus <= previous[1] + 1e-15))
            previous = (rho_plus, rho_minus)
        interior = (mu > 0) & (mu < 1)
        np.testing.assert_allclose(previous[0][interior], 1.0, atol=1e-4)
        np.testing.assert_allclose(previous[1][interior], 0.0, atol=1e-4)

    def test_agrees_with_cvar_of_bernoulli(self):
        for lam in (1.0, 1.5, 2.0, 5.0):
            params = sensitivity_params(lam)
            for mu in np.linspace(0, 1, 41):
                dist = DiscreteDist.bernoulli(mu)
                closed = binary_nuisances(mu, params)
                for side, rho in ((Side.UPPER, closed[2]), (Side.LOWER, closed[3])):
                    generic = params.inv_lam * mu + (1 - params.inv_lam) * cvar(dist, params, side)
                    self.assertAlmostEqual(generic, rho, delta=1e-12)


class LearnerConfigTests(SimpleTestCase):
    def test_partial_config_keeps_defaults(self):
        serializer = LearnerBundleSerializer(
            data={'quantile': {'kind': 'constant'}, 'strategy': 'direct'},
            context={'outcome_kind': OutcomeKind.CONTINUOUS},
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        bundle = serializer.save()
        self.assertIs(bundle.quantile.kind, LearnerKind.CONSTANT)
        self.assertIs(bundle.propensity.kind, LearnerKind.LOGISTIC)
        self.assertIs(bundle.strategy, RhoStrategy.DIRECT)

    def test_binary_defaults_use_logistic_regression(self):
        serializer = LearnerBundleSerializer(data={}, context={'outcome_kind': OutcomeKind.BINARY})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertIs(serializer.save().regression.kind, LearnerKind.LOGISTIC)

    def test_rejects_injection_and_misplaced_kinds(self):
        for data in ({'propensity': {'kind': 'oracle_injection'}}, {'quantile': {'kind': 'ridge'}}):
            serializer = LearnerBundleSerializer(data=data)
            self.assertFalse(serializer.is_valid())

    def test_hyperparameters_are_validated(self):
        serializer = LearnerBundleSerializer(data={'regression': {'kind': 'ridge', 'regularization': -1}})
        self.assertFalse(serializer.is_valid())
        self.assertIn('regression', serializer.errors)

    def test_logistic_regression_needs_binary_outcome(self):
        data = {'regression': {'kind': 'logistic'}}
        serializer = LearnerBundleSerializer(data=data, context={'outcome_kind': OutcomeKind.CONTINUOUS})
        self.assertFalse(serializer.is_valid())
        self.assertIn('binary', str(serializer.errors['regression']))
        serializer = LearnerBundleSerializer(data=data, context={'outcome_kind': OutcomeKind.BINARY})
        self.assertTrue(serializer.is_valid(), serializer.errors)
