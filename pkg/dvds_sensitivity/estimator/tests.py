import numpy as np
from django.test import SimpleTestCase

from msm.exceptions import DegenerateFitError, EstimationError, ParameterDomainError
from msm.models import Dataset, Estimand, NuisanceRow, NuisanceSet, OutcomeKind, Side
from msm.services import sensitivity_params
from nuisance.models import LearnerBundle, LearnerKind, LearnerSpec, Target, default_bundle
from nuisance.services import binary_nuisances

from .models import BoundEstimate
from .services import (
    aipw,
    att_bounds,
    crossfit_grid,
    crossfit_nuisances,
    estimate_bounds,
    influence,
    influence_array,
    manski_bounds_binary,
    sensitivity_curve,
    split_folds,
    wald_bounds,
)


def continuous_data(n, seed, heavy_tails=False):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 2))
    z = rng.binomial(1, 1 / (1 + np.exp(-x[:, 0])))
    noise = rng.standard_t(2, size=n) if heavy_tails else rng.normal(size=n)
    y = x[:, 0] + 0.5 * x[:, 1] + noise
    return Dataset(covariates=x, treatment=z, outcome=y)


def binary_data(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(n, 2))
    z = rng.binomial(1, 1 / (1 + np.exp(-x[:, 0])))
    y = rng.binomial(1, 1 / (1 + np.exp(-x[:, 1])))
    return Dataset(covariates=x, treatment=z, outcome=y, outcome_kind=OutcomeKind.BINARY)


def random_nuisances(n, rng, unconfounded=False):
    mu = rng.normal(size=(n, 2))
    spread = np.abs(rng.normal(size=(n, 2)))
    return NuisanceSet(
        e_hat=rng.uniform(0.1, 0.9, size=n),
        q_plus=mu + spread,
        q_minus=mu - spread,
        rho_plus=mu if unconfounded else mu + spread,
        rho_minus=mu if unconfounded else mu - spread,
        mu=mu,
    )


class SplitFoldsTests(SimpleTestCase):
    def test_nearly_even_sizes(self):
        plan = split_folds(10, 3, seed=7)
        self.assertEqual(sorted(plan.sizes.tolist()), [3, 3, 4])

    def test_singleton_folds(self):
        plan = split_folds(6, 6, seed=0)
        self.assertEqual(plan.sizes.tolist(), [1] * 6)

    def test_more_folds_than_rows(self):
        with self.assertRaises(ParameterDomainError):
            split_folds(5, 6, seed=0)
        with self.assertRaises(ParameterDomainError):
            split_folds(5, 1, seed=0)

    def test_deterministic_in_seed(self):
        first = split_folds(101, 5, seed=3)
        np.testing.assert_array_equal(first.assignments, split_folds(101, 5, seed=3).assignments)
        self.assertFalse(np.array_equal(first.assignments, split_folds(101, 5, seed=4).assignments))


class InfluenceTests(SimpleTestCase):
    def setUp(self):
        self.row = NuisanceRow(
            e_hat=0.5, q_plus=(0.0, 0.0), q_minus=(0.0, 0.0), rho_plus=(0.0, 2.0), rho_minus=(0.0, -1.0)
        )

    def test_substitution_example(self):
        value = influence((None, 0.0, 1), self.row, sensitivity_params(2.0), Estimand.MEAN1, Side.UPPER)
        self.assertEqual(value, -2.0)

    def test_control_row_keeps_only_the_regression(self):
        params = sensitivity_params(3.0)
        self.assertEqual(influence((None, 5.0, 0), self.row, params, Estimand.MEAN1, Side.UPPER), 2.0)
        self.assertEqual(influence((None, 5.0, 0), self.row, params, Estimand.MEAN1, Side.LOWER), -1.0)

    def test_unconfounded_is_aipw_summand(self):
        rng = np.random.default_rng(4)
        params = sensitivity_params(1.0)
        for _ in range(200):
            e, mu1, q, y = rng.uniform(0.05, 0.95), rng.normal(), rng.normal(), rng.normal()
            z = int(rng.integers(0, 2))
            row = NuisanceRow(e_hat=e, q_plus=(q, q), q_minus=(q, q), rho_plus=(0.0, mu1), rho_minus=(0.0, mu1))
            expected = z * y + (1 - z) * mu1 + ((1 - e) / e) * z * (y - mu1)
            for side in Side:
                value = influence((None, y, z), row, params, Estimand.MEAN1, side)
                self.assertAlmostEqual(value, expected, delta=1e-14 * (1 + abs(q) + abs(y) / e))

    def test_effect_on_the_treated_has_no_row_form(self):
        with self.assertRaises(ParameterDomainError):
            influence((None, 1.0, 1), self.row, sensitivity_params(2.0), Estimand.ATT, Side.UPPER)


class EstimateBoundsTests(SimpleTestCase):
    def test_constant_influence(self):
        n = 6
        data = Dataset(covariates=np.zeros(n), treatment=np.zeros(n), outcome=np.arange(n))
        pair = np.full((n, 2), 1.25)
        eta = NuisanceSet(e_hat=np.full(n, 0.5), q_plus=pair, q_minus=pair, rho_plus=pair, rho_minus=pair)
        est = estimate_bounds(data, eta, sensitivity_params(2.0), Estimand.MEAN1)
        self.assertEqual((est.psi_lower, est.psi_upper, est.se_lower, est.se_upper), (1.25, 1.25, 0.0, 0.0))

    def test_single_row(self):
        data = Dataset(covariates=[0.0], treatment=[1], outcome=[1.0])
        eta = random_nuisances(1, np.random.default_rng(0))
        with self.assertRaises(EstimationError):
            estimate_bounds(data, eta, sensitivity_params(2.0), Estimand.ATE)

    def test_means_and_standard_errors_match_influence(self):
        rng = np.random.default_rng(8)
        data = continuous_data(300, seed=8)
        eta = random_nuisances(data.n, rng)
        for estimand in (Estimand.MEAN1, Estimand.MEAN0, Estimand.ATE):
            est = estimate_bounds(data, eta, sensitivity_params(2.5), estimand)
            for side in Side:
                values = est.influence_upper if side is Side.UPPER else est.influence_lower
                self.assertAlmostEqual(est.psi(side), values.mean(), delta=1e-12)
                # Independent two-pass variance.
                centered = [value - sum(values) / len(values) for value in values]
                variance = sum(value * value for value in centered) / (len(values) - 1)
                self.assertAlmostEqual(est.se(side), np.sqrt(variance / len(values)), delta=1e-12)

    def test_ate_combines_opposite_sides(self):
        rng = np.random.default_rng(9)
        data = continuous_data(50, seed=9)
        eta = random_nuisances(data.n, rng)
        params = sensitivity_params(2.0)
        upper = influence_array(data.outcome, data.treatment, eta, params, Estimand.ATE, Side.UPPER)
        mean1 = influence_array(data.outcome, data.treatment, eta, params, Estimand.MEAN1, Side.UPPER)
        mean0 = influence_array(data.outcome, data.treatment, eta, params, Estimand.MEAN0, Side.LOWER)
        np.testing.assert_array_equal(upper, mean1 - mean0)

    def test_unconfounded_bounds_collapse_to_aipw(self):
        rng = np.random.default_rng(10)
        for seed in range(5):
            data = continuous_data(200, seed=seed)
            eta = random_nuisances(data.n, rng, unconfounded=True)
            est = estimate_bounds(data, eta, sensitivity_params(1.0), Estimand.ATE)
            reference = aipw(data, eta.e_hat, eta.mu)
            self.assertLessEqual(abs(est.psi_upper - est.psi_lower), 1e-10)
            self.assertAlmostEqual(est.psi_upper, reference, delta=1e-10)
            self.assertAlmostEqual(est.psi_lower, reference, delta=1e-10)

    def test_manski_limit_for_binary_outcomes(self):
        rng = np.random.default_rng(11)
        data = binary_data(400, seed=11)
        params = sensitivity_params(1e6)
        mu = rng.uniform(0.05, 0.95, size=(data.n, 2))
        q_plus, q_minus, rho_plus, rho_minus = binary_nuisances(mu, params)
        eta = NuisanceSet(
            e_hat=rng.uniform(0.1, 0.9, size=data.n),
            q_plus=q_plus, q_minus=q_minus, rho_plus=rho_plus, rho_minus=rho_minus, mu=mu,
        )
        est = estimate_bounds(data, eta, params, Estimand.ATE)
        lower, upper = manski_bounds_binary(data)
        self.assertAlmostEqual(est.psi_lower, lower, delta=1e-3)
        self.assertAlmostEqual(est.psi_upper, upper, delta=1e-3)


class AttBoundsTests(SimpleTestCase):
    def test_ratio_form_example(self):
        data = Dataset(covariates=np.zeros(4), treatment=[1, 1, 0, 0], outcome=[1.0, 0.0, 1.0, 0.0])
        control = np.array([-0.1, -0.1, 1.0, 0.0])
        pair = np.column_stack([control, np.zeros(4)])
        eta = NuisanceSet(e_hat=np.full(4, 0.5), q_plus=pair, q_minus=pair, rho_plus=pair, rho_minus=pair)
        est = att_bounds(data, eta, sensitivity_params(1.0))
        self.assertAlmostEqual(est.psi_upper, 0.6, delta=1e-12)
        self.assertEqual(est.psi_upper, est.psi_lower)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(12)
        data = continuous_data(120, seed=12)
        eta = random_nuisances(data.n, rng)
        lam = 2.0
        est = estimate_bounds(data, eta, sensitivity_params(lam), Estimand.ATT)

        def phi0(i, sign):
            y, z, e = data.outcome[i], data.treatment[i], eta.e_hat[i]
            q = (eta.q_plus if sign > 0 else eta.q_minus)[i, 0]
            rho = (eta.rho_plus if sign > 0 else eta.rho_minus)[i, 0]
            power = sign if y >= q else -sign
            kernel = q + lam ** power * (y - q)
            return (1 - z) * y + z * rho + e * (1 - z) / (1 - e) * (kernel - rho)

        n = data.n
        treated = int(data.treatment.sum())
        y_bar = sum(data.outcome) / n
        z_bar = treated / n
        for sign, psi, se in ((1, est.psi_upper, est.se_upper), (-1, est.psi_lower, est.se_lower)):
            control = [phi0(i, -sign) for i in range(n)]
            expected = (y_bar - sum(control) / n) / z_bar
            squares = sum(
                (data.outcome[i] - control[i] - data.treatment[i] * expected) ** 2 for i in range(n)
            )
            self.assertAlmostEqual(psi, expected, delta=1e-12)
            self.assertAlmostEqual(se, np.sqrt(squares / (treated * (treated - 1))), delta=1e-12)

    def test_all_treated_rows(self):
        rng = np.random.default_rng(13)
        data = Dataset(covariates=rng.normal(size=10), treatment=np.ones(10), outcome=rng.normal(size=10))
        eta = random_nuisances(10, rng)
        est = att_bounds(data, eta, sensitivity_params(2.0))
        phi0 = influence_array(data.outcome, data.treatment, eta, sensitivity_params(2.0), Estimand.MEAN0, Side.LOWER)
        self.assertAlmostEqual(est.psi_upper, data.outcome.mean() - phi0.mean(), delta=1e-12)

    def test_needs_two_treated_rows(self):
        data = Dataset(covariates=np.zeros(3), treatment=[1, 0, 0], outcome=[1.0, 0.0, 1.0])
        with self.assertRaises(EstimationError):
            att_bounds(data, random_nuisances(3, np.random.default_rng(0)), sensitivity_params(2.0))


class WaldBoundsTests(SimpleTestCase):
    def make(self, se):
        return BoundEstimate(
            estimand=Estimand.ATE, lam=2.0, psi_lower=-1.0, psi_upper=1.0, se_lower=se, se_upper=se,
            influence_lower=[0.0], influence_upper=[0.0],
        )

    def test_zero_standard_errors(self):
        self.assertEqual(wald_bounds(self.make(0.0), 0.05), (-1.0, 1.0))

    def test_two_sided_example(self):
        lower, upper = wald_bounds(self.make(0.1), 0.025)
        self.assertAlmostEqual(upper, 1.196, delta=1e-3)
        self.assertAlmostEqual(lower, -1.196, delta=1e-3)
        self.assertAlmostEqual((upper - 1.0) / 0.1, 1.959964, delta=1e-6)

    def test_alpha_domain(self):
        for alpha in (0.0, 1.0, 1.5):
            with self.assertRaises(ParameterDomainError):
                wald_bounds(self.make(0.1), alpha)


class AipwTests(SimpleTestCase):
    def test_single_row(self):
        data = Dataset(covariates=[0.0], treatment=[1], outcome=[2.0])
        self.assertAlmostEqual(aipw(data, [0.5], [[0.0, 1.0]]), 1.0 + (2.0 - 1.0) / 0.5)

    def test_outcome_matched_regressions(self):
        data = continuous_data(40, seed=1)
        y, z = data.outcome, data.treatment
        mu = np.column_stack([np.where(z == 0, y, 0.0), np.where(z == 1, y, 0.0)])
        expected = np.mean(mu[:, 1] - mu[:, 0])
        self.assertAlmostEqual(aipw(data, np.full(data.n, 0.5), mu), expected, delta=1e-12)


class ManskiTests(SimpleTestCase):
    def test_all_treated_successes(self):
        data = Dataset(covariates=np.zeros(4), treatment=np.ones(4), outcome=np.ones(4))
        self.assertEqual(manski_bounds_binary(data), (0.0, 1.0))

    def test_balanced_failures(self):
        data = Dataset(covariates=np.zeros(4), treatment=[0, 1, 0, 1], outcome=np.zeros(4))
        self.assertEqual(manski_bounds_binary(data), (-0.5, 0.5))

    def test_width_is_one(self):
        data = binary_data(101, seed=5)
        lower, upper = manski_bounds_binary(data)
        self.assertAlmostEqual(upper - lower, 1.0, delta=1e-12)

    def test_continuous_outcome(self):
        with self.assertRaises(ParameterDomainError):
            manski_bounds_binary(continuous_data(10, seed=0))


class CrossFitTests(SimpleTestCase):
    def test_binary_constant_regression_uses_complement_means(self):
        data = binary_data(60, seed=2)
        constant = LearnerSpec(kind=LearnerKind.CONSTANT)
        bundle = LearnerBundle(propensity=constant, quantile=constant, regression=constant)
        plan = split_folds(data.n, 3, seed=1)
        params = sensitivity_params(2.0)
        eta = crossfit_nuisances(data, params, bundle, plan, epsilon=0.01)
        for fold in range(plan.k):
            train = plan.complement(fold)
            for arm in (0, 1):
                mean = data.outcome[data.arm_rows(train, arm)].mean()
                q_plus, q_minus, rho_plus, rho_minus = binary_nuisances(mean, params)
                rows = plan.fold_rows(fold)
                np.testing.assert_allclose(eta.rho_plus[rows, arm], rho_plus, atol=1e-15)
                np.testing.assert_allclose(eta.rho_minus[rows, arm], rho_minus, atol=1e-15)
                np.testing.assert_array_equal(eta.q_plus[rows, arm], q_plus)
                np.testing.assert_array_equal(eta.q_minus[rows, arm], q_minus)

    def test_injected_nuisances_are_evaluated_rowwise(self):
        def oracle(covariates, query):
            x = covariates[:, 0]
            if query.target is Target.PROPENSITY:
                return 0.3 + 0.1 * x
            if query.target is Target.QUANTILE:
                return x + query.arm + query.alpha
            if query.target is Target.RHO:
                return 10 * x + query.arm + int(query.side)
            return x - query.arm

        data = Dataset(covariates=[1.0, 2.0, 3.0, 4.0], treatment=[0, 1, 0, 1], outcome=[0.0, 1.0, 2.0, 3.0])
        injected = LearnerSpec.injected(oracle)
        bundle = LearnerBundle(propensity=injected, quantile=injected, regression=injected)
        params = sensitivity_params(3.0)
        eta = crossfit_nuisances(data, params, bundle, split_folds(4, 2, seed=0), epsilon=0.01)
        x = np.array([1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(eta.e_hat, 0.3 + 0.1 * x)
        np.testing.assert_allclose(eta.q_plus[:, 1], x + 1 + 0.75)
        np.testing.assert_allclose(eta.q_minus[:, 0], x + 0.25)
        np.testing.assert_allclose(eta.rho_plus[:, 0], 10 * x + 1)
        np.testing.assert_allclose(eta.rho_minus[:, 1], 10 * x)
        np.testing.assert_allclose(eta.mu[:, 1], x - 1)

    def test_fold_without_treated_rows_names_the_fold(self):
        data = Dataset(covariates=np.arange(6.0), treatment=[1, 0, 0, 0, 0, 0], outcome=np.zeros(6))
        plan = split_folds(6, 2, seed=0)
        constant = LearnerSpec(kind=LearnerKind.CONSTANT)
        bundle = LearnerBundle(propensity=constant, quantile=constant, regression=constant)
        with self.assertRaises(DegenerateFitError) as ctx:
            crossfit_nuisances(data, sensitivity_params(2.0), bundle, plan, epsilon=0.01)
        fold = int(plan.assignments[0])
        self.assertEqual(ctx.exception.fold, fold)
        self.assertIn(f'fold {fold}', str(ctx.exception))

    def test_grid_shares_propensity_across_lambda(self):
        data = continuous_data(150, seed=3)
        grid = [sensitivity_params(lam) for lam in (1.0, 2.0)]
        etas = crossfit_grid(data, grid, default_bundle(), split_folds(data.n, 3, seed=2), epsilon=0.01)
        np.testing.assert_array_equal(etas[0].e_hat, etas[1].e_hat)
        np.testing.assert_array_equal(etas[0].rho_plus, etas[0].mu)

    def test_unconfounded_pipeline_collapses_to_aipw(self):
        data = continuous_data(300, seed=6)
        eta = crossfit_nuisances(data, sensitivity_params(1.0), default_bundle(), split_folds(data.n, 5, 0), 0.01)
        est = estimate_bounds(data, eta, sensitivity_params(1.0), Estimand.ATE)
        self.assertAlmostEqual(est.psi_upper, aipw(data, eta.e_hat, eta.mu), delta=1e-10)
        self.assertAlmostEqual(est.psi_lower, est.psi_upper, delta=1e-10)


class SensitivityCurveTests(SimpleTestCase):
    def test_deterministic_across_thread_counts(self):
        data = continuous_data(200, seed=7)
        grid = [sensitivity_params(lam) for lam in (2.0, 1.0, 1.5)]
        args = (data, grid, default_bundle(), Estimand.ATE, 4, 11, 0.01, 0.05)
        first = sensitivity_curve(*args, threads=1)
        second = sensitivity_curve(*args, threads=3)
        self.assertEqual([record.lam for record in first], [1.0, 1.5, 2.0])
        self.assertEqual([record.as_dict() for record in first], [record.as_dict() for record in second])
        self.assertEqual(first[0].estimate, second[0].estimate)

    def test_binary_widths_grow_with_lambda(self):
        data = binary_data(500, seed=8)
        grid = [sensitivity_params(lam) for lam in (1.0, 1.5, 2.0)]
        records = sensitivity_curve(data, grid, default_bundle(OutcomeKind.BINARY), Estimand.ATE, 5, 1, 0.01, 0.05)
        widths = [record.estimate.psi_upper - record.estimate.psi_lower for record in records]
        self.assertEqual(widths, sorted(widths))
        for record in records:
            self.assertLessEqual(record.estimate.psi_lower, record.estimate.psi_upper)
            self.assertLessEqual(record.ci_lower, record.estimate.psi_lower)
            self.assertGreaterEqual(record.ci_upper, record.estimate.psi_upper)

    def test_continuous_bounds_are_ordered(self):
        grid = [sensitivity_params(lam) for lam in (1.2, 2.0, 5.0)]
        for seed in range(3):
            for heavy_tails in (False, True):
                data = continuous_data(500, seed=20 + seed, heavy_tails=heavy_tails)
                for estimand in (Estimand.ATE, Estimand.MEAN1, Estimand.ATT):
                    records = sensitivity_curve(data, grid, default_bundle(), estimand, 3, seed, 0.01, 0.05)
                    for record in records:
                        with self.subTest(seed=seed, heavy_tails=heavy_tails, estimand=estimand, lam=record.estimate.lam):
                            self.assertLessEqual(record.estimate.psi_lower, record.estimate.psi_upper)

    def test_record_fields(self):
        data = continuous_data(60, seed=9)
        records = sensitivity_curve(
            data, [sensitivity_params(2.0)], default_bundle(), Estimand.MEAN1, 2, 5, 0.01, 0.05
        )
        self.assertEqual(
            set(records[0].as_dict()),
            {'lambda', 'psi_lower', 'psi_upper', 'se_lower', 'se_upper', 'ci_lower', 'ci_upper', 'n', 'K', 'seed'},
        )
