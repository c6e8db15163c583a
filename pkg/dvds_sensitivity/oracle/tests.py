import logging
import os
import unittest
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from cvar.models import DiscreteDist
from estimator.services import estimate_bounds, sensitivity_curve
from msm.exceptions import EstimationError, HarnessError, ParameterDomainError
from msm.models import Estimand, OutcomeKind, Side
from msm.services import sensitivity_params
from nuisance.models import LearnerBundle, LearnerKind, LearnerSpec, default_bundle

from .coverage import monte_carlo_coverage
from .models import DiscreteDGP, GenerativeKind, GenerativeSpec
from .replication import replication_seed
from .services import (
    adversarial_bounds,
    adversarial_ipw_bound,
    adversarial_propensity,
    conditional_moment,
    exact_rho,
    mixture_bounds,
    population_dvds,
    sharp_bound_oracle,
    true_nuisances,
)
from .simulation import (
    expected_propensity,
    oracle_bundle,
    population_bounds,
    quadrature_grid,
    random_discrete_dgp,
    simulate,
)

RUN_SLOW = os.getenv('DVDS_RUN_SLOW_TESTS') == '1'
ESTIMANDS = (Estimand.MEAN1, Estimand.MEAN0, Estimand.ATE, Estimand.ATT)


def skewed_dgp(e=0.5):
    """One level; treated outcomes are 10 with probability 0.1, controls are always 0."""
    return DiscreteDGP(
        levels=[0.0],
        level_probs=[1.0],
        propensity=[e],
        outcome_dists=((DiscreteDist.point(0.0), DiscreteDist([0.0, 10.0], [0.9, 0.1])),),
    )


def three_level_dgp():
    return DiscreteDGP(
        levels=[0.0, 1.0, 2.0],
        level_probs=[0.3, 0.5, 0.2],
        propensity=[0.3, 0.6, 0.8],
        outcome_dists=(
            (DiscreteDist([0.0, 1.0, 4.0], [0.5, 0.3, 0.2]), DiscreteDist([1.0, 2.0], [0.6, 0.4])),
            (DiscreteDist([-1.0, 0.0, 2.0], [0.2, 0.5, 0.3]), DiscreteDist([0.0, 3.0, 5.0], [0.3, 0.4, 0.3])),
            (DiscreteDist([2.0, 6.0], [0.7, 0.3]), DiscreteDist([-2.0, 1.0, 2.0, 8.0], [0.1, 0.4, 0.4, 0.1])),
        ),
    )


def random_dgps(count, seed):
    rng = np.random.default_rng(seed)
    return [random_discrete_dgp(rng) for _ in range(count)]


def oracle_estimate(dgp, params, estimand, n, seed, eta_levels=None):
    spec = GenerativeSpec(kind=GenerativeKind.CUSTOM_DISCRETE, dgp=dgp)
    data = simulate(spec, n, seed)
    levels = eta_levels if eta_levels is not None else true_nuisances(dgp, params)
    eta = levels.for_rows(dgp.level_of(data.covariates))
    return estimate_bounds(data, eta, params, estimand)


class DiscreteDGPTests(SimpleTestCase):
    def test_rejects_invalid_laws(self):
        pair = (DiscreteDist.point(0.0), DiscreteDist.point(1.0))
        with self.assertRaises(ParameterDomainError):
            DiscreteDGP(levels=[0.0], level_probs=[0.9], propensity=[0.5], outcome_dists=(pair,))
        with self.assertRaises(ParameterDomainError):
            DiscreteDGP(levels=[0.0], level_probs=[1.0], propensity=[1.0], outcome_dists=(pair,))
        with self.assertRaises(ParameterDomainError):
            DiscreteDGP(levels=[0.0, 1.0], level_probs=[0.5, 0.5], propensity=[0.5, 0.5], outcome_dists=(pair,))

    def test_level_lookup(self):
        dgp = three_level_dgp()
        np.testing.assert_array_equal(dgp.level_of([2.0, 0.0, 1.0]), [2, 0, 1])
        with self.assertRaises(ParameterDomainError):
            dgp.level_of([0.5])

    def test_generative_spec_names(self):
        self.assertIs(GenerativeSpec.named('paper_binary').outcome_kind, OutcomeKind.BINARY)
        self.assertIs(GenerativeSpec.named('paper_continuous').outcome_kind, OutcomeKind.CONTINUOUS)
        with self.assertRaises(ParameterDomainError):
            GenerativeSpec.named('unknown')
        with self.assertRaises(ParameterDomainError):
            GenerativeSpec.named('custom_discrete')


class TrueNuisanceTests(SimpleTestCase):
    def test_skewed_arm(self):
        eta = true_nuisances(skewed_dgp(), sensitivity_params(2.0))
        self.assertAlmostEqual(eta.mu[0, 1], 1.0)
        self.assertEqual(eta.q_plus[0, 1], 0.0)
        self.assertAlmostEqual(eta.rho_plus[0, 1], 2.0, places=12)

    def test_unconfounded_regressions(self):
        dgp = three_level_dgp()
        eta = true_nuisances(dgp, sensitivity_params(1.0))
        np.testing.assert_allclose(eta.rho_plus, eta.mu, atol=1e-12)
        np.testing.assert_allclose(eta.rho_minus, eta.mu, atol=1e-12)

    def test_bernoulli_matches_closed_form(self):
        coin = DiscreteDist.bernoulli(0.5)
        dgp = DiscreteDGP(levels=[0.0], level_probs=[1.0], propensity=[0.4], outcome_dists=((coin, coin),))
        eta = true_nuisances(dgp, sensitivity_params(2.0))
        self.assertAlmostEqual(eta.rho_plus[0, 1], 0.75, places=12)
        self.assertAlmostEqual(eta.rho_minus[0, 0], 0.25, places=12)


class SharpBoundTests(SimpleTestCase):
    def test_skewed_treated_mean(self):
        params = sensitivity_params(2.0)
        dgp = skewed_dgp()
        self.assertAlmostEqual(sharp_bound_oracle(dgp, params, Estimand.MEAN1)[1], 1.5, places=12)
        self.assertAlmostEqual(mixture_bounds(dgp, params, Estimand.MEAN1)[1], 1.5, places=12)
        self.assertAlmostEqual(adversarial_ipw_bound(dgp, params, 1, Side.UPPER), 1.5, places=12)

    def test_unconfounded_bounds_collapse(self):
        dgp = three_level_dgp()
        lower, upper = sharp_bound_oracle(dgp, sensitivity_params(1.0), Estimand.ATE)
        g_formula = sum(
            dgp.level_probs[level] * (dgp.dist(level, 1).mean - dgp.dist(level, 0).mean)
            for level in range(dgp.n_levels)
        )
        self.assertAlmostEqual(lower, g_formula, places=12)
        self.assertAlmostEqual(upper, g_formula, places=12)

    def test_three_routes_agree(self):
        for index, dgp in enumerate(random_dgps(120, seed=20)):
            for lam in (1.0, 1.5, 2.0, 5.0):
                params = sensitivity_params(lam)
                for estimand in ESTIMANDS:
                    greedy = sharp_bound_oracle(dgp, params, estimand)
                    mixture = mixture_bounds(dgp, params, estimand)
                    adversarial = adversarial_bounds(dgp, params, estimand)
                    with self.subTest(dgp=index, lam=lam, estimand=estimand.value):
                        np.testing.assert_allclose(mixture, greedy, atol=1e-9, rtol=0)
                        np.testing.assert_allclose(adversarial, greedy, atol=1e-9, rtol=0)

    def test_bounds_widen_with_lambda(self):
        lams = (1.0, 1.2, 1.5, 2.0, 3.0, 5.0, 10.0)
        for index, dgp in enumerate(random_dgps(100, seed=21)):
            for estimand in ESTIMANDS:
                bounds = np.array([sharp_bound_oracle(dgp, sensitivity_params(lam), estimand) for lam in lams])
                with self.subTest(dgp=index, estimand=estimand.value):
                    self.assertTrue(np.all(np.diff(bounds[:, 1]) >= -1e-12))
                    self.assertTrue(np.all(np.diff(bounds[:, 0]) <= 1e-12))
                    self.assertAlmostEqual(bounds[0, 0], bounds[0, 1], places=12)

    def test_effect_on_treated_routes_agree(self):
        for index, dgp in enumerate(random_dgps(100, seed=22)):
            params = sensitivity_params(2.0)
            direct = sharp_bound_oracle(dgp, params, Estimand.ATT)
            ratio = (
                population_dvds(dgp, params, Estimand.ATT, Side.LOWER),
                population_dvds(dgp, params, Estimand.ATT, Side.UPPER),
            )
            with self.subTest(dgp=index):
                np.testing.assert_allclose(ratio, direct, atol=1e-9, rtol=0)
                np.testing.assert_allclose(adversarial_bounds(dgp, params, Estimand.ATT), direct, atol=1e-9, rtol=0)


class AdversarialPropensityTests(SimpleTestCase):
    def test_odds_shift_off_the_boundary(self):
        dgp = skewed_dgp()
        params = sensitivity_params(2.0)
        self.assertAlmostEqual(adversarial_propensity(dgp, params, 0, -1.0, Side.UPPER), 2 / 3, places=12)
        self.assertAlmostEqual(adversarial_propensity(dgp, params, 0, 10.0, Side.UPPER), 1 / 3, places=12)

    def test_unconfounded_is_the_propensity(self):
        dgp = three_level_dgp()
        params = sensitivity_params(1.0)
        for level in range(dgp.n_levels):
            for arm in (0, 1):
                for y in dgp.dist(level, arm).atoms:
                    value = adversarial_propensity(dgp, params, level, y, Side.UPPER, arm=arm)
                    self.assertAlmostEqual(value, dgp.propensity[level], places=12)

    def test_conditional_moment_is_one(self):
        for index, dgp in enumerate(random_dgps(100, seed=23)):
            for lam in (1.5, 3.0):
                params = sensitivity_params(lam)
                for level in range(dgp.n_levels):
                    for arm in (0, 1):
                        for side in Side:
                            with self.subTest(dgp=index, lam=lam, level=level, arm=arm, side=side.name):
                                moment = conditional_moment(dgp, params, level, side, arm=arm)
                                self.assertAlmostEqual(moment, 1.0, delta=1e-12)

    def test_stays_within_the_odds_box(self):
        dgp = three_level_dgp()
        params = sensitivity_params(3.0)
        for level in range(dgp.n_levels):
            e = dgp.propensity[level]
            for y in dgp.dist(level, 1).atoms:
                value = adversarial_propensity(dgp, params, level, y, Side.LOWER)
                ratio = (value / (1 - value)) / (e / (1 - e))
                self.assertGreaterEqual(ratio, 1 / 3 - 1e-12)
                self.assertLessEqual(ratio, 3 + 1e-12)


class PopulationDvdsTests(SimpleTestCase):
    def test_true_nuisances_reach_the_sharp_bound(self):
        for index, dgp in enumerate(random_dgps(50, seed=24)):
            params = sensitivity_params(2.0)
            for estimand in (Estimand.MEAN1, Estimand.MEAN0, Estimand.ATE):
                sharp = sharp_bound_oracle(dgp, params, estimand)
                with self.subTest(dgp=index, estimand=estimand.value):
                    self.assertAlmostEqual(population_dvds(dgp, params, estimand, Side.LOWER), sharp[0], delta=1e-10)
                    self.assertAlmostEqual(population_dvds(dgp, params, estimand, Side.UPPER), sharp[1], delta=1e-10)

    def test_misplaced_quantile(self):
        params = sensitivity_params(2.0)
        dgp = skewed_dgp()
        eta = true_nuisances(dgp, params)
        eta = eta.replace(q_plus=np.full_like(eta.q_plus, 10.0))
        value = population_dvds(dgp, params, Estimand.MEAN1, Side.UPPER, eta_override=eta)
        self.assertAlmostEqual(value, 3.25, places=12)
        self.assertGreaterEqual(value, 1.5)

    def test_wrong_quantile_stays_valid(self):
        rng = np.random.default_rng(25)
        for index, dgp in enumerate(random_dgps(120, seed=26)):
            params = sensitivity_params(float(rng.choice([1.5, 2.0, 4.0])))
            truth = true_nuisances(dgp, params)
            shape = truth.mu.shape
            q_plus = truth.q_plus + rng.normal(scale=1.5, size=shape)
            q_minus = truth.q_minus + rng.normal(scale=1.5, size=shape)
            # Correct propensity with an arbitrary regression.
            by_propensity = truth.replace(
                q_plus=q_plus, q_minus=q_minus,
                rho_plus=rng.normal(size=shape), rho_minus=rng.normal(size=shape),
            )
            # Arbitrary propensity with the regression matching the wrong quantile.
            by_regression = truth.replace(
                e=rng.uniform(0.1, 0.9, size=dgp.n_levels),
                q_plus=q_plus, q_minus=q_minus,
                rho_plus=exact_rho(dgp, params, q_plus, Side.UPPER),
                rho_minus=exact_rho(dgp, params, q_minus, Side.LOWER),
            )
            for estimand in (Estimand.MEAN1, Estimand.MEAN0, Estimand.ATE, Estimand.ATT):
                lower, upper = sharp_bound_oracle(dgp, params, estimand)
                for eta in (by_propensity, by_regression):
                    with self.subTest(dgp=index, estimand=estimand.value):
                        self.assertGreaterEqual(
                            population_dvds(dgp, params, estimand, Side.UPPER, eta_override=eta), upper - 1e-10
                        )
                        self.assertLessEqual(
                            population_dvds(dgp, params, estimand, Side.LOWER, eta_override=eta), lower + 1e-10
                        )


class DoubleSharpnessTests(SimpleTestCase):
    """Estimates on 200000 simulated rows with partly wrong nuisances."""

    n = 200_000

    def setUp(self):
        self.dgp = three_level_dgp()
        self.params = sensitivity_params(2.0)
        self.truth = true_nuisances(self.dgp, self.params)
        self.sharp = sharp_bound_oracle(self.dgp, self.params, Estimand.ATE)
        self.bad_e = 0.5 * (self.truth.e + 0.5)
        self.bad_q_plus = self.truth.q_plus + 0.7
        self.bad_q_minus = self.truth.q_minus - 0.7

    def check_sharp(self, eta):
        for side, bound in zip((Side.LOWER, Side.UPPER), self.sharp):
            self.assertAlmostEqual(population_dvds(self.dgp, self.params, Estimand.ATE, side, eta), bound, delta=1e-10)
        est = oracle_estimate(self.dgp, self.params, Estimand.ATE, self.n, seed=4, eta_levels=eta)
        self.assertLessEqual(abs(est.psi_lower - self.sharp[0]), 3 * est.se_lower)
        self.assertLessEqual(abs(est.psi_upper - self.sharp[1]), 3 * est.se_upper)

    def check_valid(self, eta):
        self.assertGreaterEqual(population_dvds(self.dgp, self.params, Estimand.ATE, Side.UPPER, eta), self.sharp[1] - 1e-10)
        self.assertLessEqual(population_dvds(self.dgp, self.params, Estimand.ATE, Side.LOWER, eta), self.sharp[0] + 1e-10)
        est = oracle_estimate(self.dgp, self.params, Estimand.ATE, self.n, seed=5, eta_levels=eta)
        self.assertGreaterEqual(est.psi_upper, self.sharp[1] - 3 * est.se_upper)
        self.assertLessEqual(est.psi_lower, self.sharp[0] + 3 * est.se_lower)

    def test_right_quantile_and_propensity(self):
        self.check_sharp(self.truth.replace(rho_plus=self.truth.rho_plus + 1.0, rho_minus=self.truth.rho_minus - 2.0))

    def test_right_quantile_and_regression(self):
        self.check_sharp(self.truth.replace(e=self.bad_e))

    def test_wrong_quantile_right_propensity(self):
        self.check_valid(self.truth.replace(
            q_plus=self.bad_q_plus, q_minus=self.bad_q_minus,
            rho_plus=self.truth.mu, rho_minus=self.truth.mu,
        ))

    def test_wrong_quantile_matching_regression(self):
        self.check_valid(self.truth.replace(
            e=self.bad_e, q_plus=self.bad_q_plus, q_minus=self.bad_q_minus,
            rho_plus=exact_rho(self.dgp, self.params, self.bad_q_plus, Side.UPPER),
            rho_minus=exact_rho(self.dgp, self.params, self.bad_q_minus, Side.LOWER),
        ))


class SharpnessAtScaleTests(SimpleTestCase):
    def test_treated_mean_upper_bound(self):
        params = sensitivity_params(2.0)
        est = oracle_estimate(skewed_dgp(), params, Estimand.MEAN1, 200000, seed=1)
        self.assertLessEqual(abs(est.psi_upper - 1.5), 3 * est.se_upper)

    def test_three_level_ate(self):
        params = sensitivity_params(2.0)
        dgp = three_level_dgp()
        lower, upper = sharp_bound_oracle(dgp, params, Estimand.ATE)
        est = oracle_estimate(dgp, params, Estimand.ATE, 200000, seed=2)
        self.assertLessEqual(abs(est.psi_lower - lower), 3 * est.se_lower)
        self.assertLessEqual(abs(est.psi_upper - upper), 3 * est.se_upper)


class SimulateTests(SimpleTestCase):
    def test_fixed_seed_is_reproducible(self):
        spec = GenerativeSpec.named('paper_binary')
        first = simulate(spec, 50, seed=3)
        self.assertEqual(first, simulate(spec, 50, seed=3))
        self.assertNotEqual(first, simulate(spec, 50, seed=4))
        self.assertEqual(first.covariate_names, ('x1', 'x2', 'x3', 'x4', 'x5'))
        self.assertTrue(np.all(np.isin(first.outcome, (0.0, 1.0))))

    def test_continuous_outcomes(self):
        data = simulate(GenerativeSpec.named('paper_continuous'), 5, seed=0)
        self.assertEqual(data.n, 5)
        self.assertIs(data.outcome_kind, OutcomeKind.CONTINUOUS)
        self.assertEqual(np.unique(data.outcome).size, 5)

    def test_rejects_empty_samples(self):
        with self.assertRaises(ParameterDomainError):
            simulate(GenerativeSpec.named('paper_binary'), 0, seed=0)

    def test_treated_share_matches_quadrature(self):
        spec = GenerativeSpec.named('paper_binary')
        n = 1_000_000
        data = simulate(spec, n, seed=10)
        share = expected_propensity(spec)
        self.assertLessEqual(abs(data.treatment.mean() - share), 3 * np.sqrt(share * (1 - share) / n))

    def test_discrete_draws_follow_the_law(self):
        dgp = three_level_dgp()
        data = simulate(GenerativeSpec(kind=GenerativeKind.CUSTOM_DISCRETE, dgp=dgp), 100000, seed=6)
        levels = dgp.level_of(data.covariates)
        shares = np.bincount(levels, minlength=3) / data.n
        np.testing.assert_allclose(shares, dgp.level_probs, atol=0.01)
        self.assertTrue(np.all(np.isin(data.outcome[(levels == 2) & (data.treatment == 0)], (2.0, 6.0))))


class QuadratureTests(SimpleTestCase):
    def test_integrates_the_uniform_law(self):
        grid, weights = quadrature_grid(2, 8)
        self.assertAlmostEqual(weights.sum(), 1.0, places=13)
        self.assertAlmostEqual(weights @ grid[:, 0] ** 2, 1 / 3, places=13)
        self.assertAlmostEqual(weights @ (grid[:, 0] > 0), 0.5, places=13)

    def test_outcomes_ignore_treatment(self):
        for name in ('paper_binary', 'paper_continuous'):
            spec = GenerativeSpec.named(name)
            lower, upper = population_bounds(spec, sensitivity_params(1.0))
            self.assertAlmostEqual(lower, 0.0, places=12)
            self.assertAlmostEqual(upper, 0.0, places=12)

    def test_bounds_widen_with_lambda(self):
        spec = GenerativeSpec.named('paper_continuous')
        bounds = np.array([population_bounds(spec, sensitivity_params(lam)) for lam in (1.0, 1.5, 2.0)])
        self.assertTrue(np.all(np.diff(bounds[:, 1]) > 0))
        self.assertTrue(np.all(np.diff(bounds[:, 0]) < 0))

    def test_discrete_specs_sum_exactly(self):
        dgp = three_level_dgp()
        spec = GenerativeSpec(kind=GenerativeKind.CUSTOM_DISCRETE, dgp=dgp)
        params = sensitivity_params(1.5)
        np.testing.assert_allclose(
            population_bounds(spec, params, Estimand.ATT), sharp_bound_oracle(dgp, params, Estimand.ATT), atol=1e-12
        )

    def test_oracle_learners_recover_a_null_effect(self):
        spec = GenerativeSpec.named('paper_binary')
        data = simulate(spec, 20000, seed=8)
        record = sensitivity_curve(
            data, [sensitivity_params(1.0)], oracle_bundle(spec), Estimand.ATE, 2, 8, 0.01, 0.05
        )[0]
        self.assertLessEqual(abs(record.estimate.psi_upper), 4 * record.estimate.se_upper)


def fake_records(lambdas, width):
    return [
        {
            'lambda': lam, 'psi_lower': -width, 'psi_upper': width, 'se_lower': 0.1, 'se_upper': 0.1,
            'ci_lower': -2 * width, 'ci_upper': 2 * width, 'n': 100, 'K': 2, 'seed': 0,
        }
        for lam in lambdas
    ]


class CoverageTests(SimpleTestCase):
    def setUp(self):
        self.spec = GenerativeSpec(kind=GenerativeKind.CUSTOM_DISCRETE, dgp=three_level_dgp())
        self.bundle = oracle_bundle(self.spec)

    def test_replication_seeds_depend_on_counter_only(self):
        seeds = [replication_seed(7, r) for r in range(5)]
        self.assertEqual(len(set(seeds)), 5)
        self.assertEqual(seeds[3], replication_seed(7, 3))
        self.assertNotEqual(seeds[0], replication_seed(8, 0))

    def test_rejects_empty_runs(self):
        with self.assertRaises(ParameterDomainError):
            monte_carlo_coverage(self.spec, [1.0], 0, 100, self.bundle, 2, 0.05, seed=1)

    def test_report_shape(self):
        report = monte_carlo_coverage(self.spec, [2.0, 1.0], 6, 300, self.bundle, 2, 0.05, seed=1)
        self.assertEqual([entry.lam for entry in report.entries], [1.0, 2.0])
        self.assertEqual(len(report.records), 12)
        self.assertEqual(len(report.replication_seeds), 6)
        for entry in report.entries:
            self.assertEqual(entry.reps, 6)
            self.assertEqual(entry.failures, 0)
            self.assertGreaterEqual(entry.coverage, 0.0)
            self.assertLessEqual(entry.coverage, 1.0)
        truth = sharp_bound_oracle(self.spec.dgp, sensitivity_params(2.0), Estimand.ATE)
        self.assertAlmostEqual(report.entries[1].truth_upper, truth[1], places=12)

    def test_independent_of_thread_count(self):
        args = (self.spec, [1.0, 2.0], 4, 200, self.bundle, 2, 0.05)
        first = monte_carlo_coverage(*args, seed=3, threads=1)
        second = monte_carlo_coverage(*args, seed=3, threads=4)
        self.assertEqual(first.records, second.records)
        self.assertEqual(first.entries, second.entries)

    def test_replications_log_below_info(self):
        with self.assertLogs(level='DEBUG') as logs:
            monte_carlo_coverage(self.spec, [1.0, 2.0], 4, 200, self.bundle, 2, 0.05, seed=3)
        loud = [record for record in logs.records if record.levelno >= logging.INFO]
        self.assertEqual({record.name for record in loud}, {'oracle.coverage'})
        self.assertEqual(len(loud), 3)

    def test_failures_are_recorded(self):
        seeds = [replication_seed(5, r) for r in range(200)]

        def flaky(spec, lambdas, n, bundle, k, alpha, seed, estimand, epsilon):
            if seed == seeds[17]:
                raise EstimationError('standard errors need at least 2 rows, got 1')
            return fake_records(lambdas, 0.1)

        with mock.patch('oracle.coverage.run_replication', side_effect=flaky):
            report = monte_carlo_coverage(self.spec, [1.5], 200, 10, self.bundle, 2, 0.05, seed=5)
        self.assertEqual(report.entries[0].failures, 1)
        self.assertEqual(report.failures[0]['replication'], 17)
        self.assertEqual(len(report.records), 199)

    def test_too_many_failures(self):
        with mock.patch('oracle.coverage.run_replication', side_effect=EstimationError('broken')):
            with self.assertRaises(HarnessError):
                monte_carlo_coverage(self.spec, [1.0], 10, 10, self.bundle, 2, 0.05, seed=5)

    def test_celery_dispatch_matches_local(self):
        spec = GenerativeSpec.named('paper_binary')
        constant = LearnerSpec(kind=LearnerKind.CONSTANT)
        bundle = LearnerBundle(propensity=constant, quantile=constant, regression=constant)
        args = (spec, [1.0, 2.0], 3, 200, bundle, 2, 0.05)
        local = monte_carlo_coverage(*args, seed=9)
        remote = monte_carlo_coverage(*args, seed=9, dispatch='celery')
        self.assertEqual(local.records, remote.records)

    def test_celery_dispatch_needs_configurable_learners(self):
        spec = GenerativeSpec.named('paper_binary')
        with self.assertRaises(ParameterDomainError):
            monte_carlo_coverage(spec, [1.0], 2, 100, oracle_bundle(spec), 2, 0.05, seed=1, dispatch='celery')


@unittest.skipUnless(RUN_SLOW, 'set DVDS_RUN_SLOW_TESTS=1 to run the Monte Carlo acceptance runs')
class SlowCoverageTests(SimpleTestCase):
    def test_oracle_nuisances_point_identified(self):
        spec = GenerativeSpec.named('paper_binary')
        report = monte_carlo_coverage(spec, [1.0], 500, 1000, oracle_bundle(spec), 5, 0.05, seed=2024, threads=4)
        band = 3 * np.sqrt(0.95 * 0.05 / 500)
        self.assertLessEqual(abs(report.entries[0].coverage - 0.95), band)

    def test_binary_design_with_built_in_learners(self):
        spec = GenerativeSpec.named('paper_binary')
        report = monte_carlo_coverage(
            spec, [1.0, 1.5, 2.0], 500, 1000, default_bundle(OutcomeKind.BINARY), 5, 0.05, seed=7, threads=4
        )
        for entry in report.entries:
            self.assertGreaterEqual(entry.coverage, 0.90)
            self.assertLessEqual(entry.coverage, 0.99)

    def test_continuous_design_smoke(self):
        spec = GenerativeSpec.named('paper_continuous')
        report = monte_carlo_coverage(spec, [2.0], 100, 1000, default_bundle(), 5, 0.05, seed=11, threads=4)
        entry = report.entries[0]
        self.assertGreaterEqual(entry.upper_above_truth_lower, 0.99)
        self.assertGreaterEqual(entry.coverage, 0.90)
