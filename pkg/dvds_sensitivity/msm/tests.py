from io import StringIO

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from .exceptions import DataError, ParameterDomainError
from .models import Dataset, NuisanceSet, OutcomeKind, Side
from .services import infer_outcome_kind, sensitivity_params, validate_dataset


class SensitivityParamsTests(SimpleTestCase):
    def test_unconfounded_boundary(self):
        params = sensitivity_params(1.0)
        self.assertEqual(params.lam, 1.0)
        self.assertEqual(params.tau, 0.5)

    def test_tau_is_derived(self):
        params = sensitivity_params(2.0)
        self.assertEqual(params.tau, 2.0 / 3.0)
        self.assertEqual(params.tail_weight, 1.0 / (1.0 - 2.0 / 3.0))

    def test_rejects_lambda_below_one(self):
        with self.assertRaises(ParameterDomainError):
            sensitivity_params(0.5)

    def test_rejects_non_finite(self):
        for value in (float('inf'), float('nan'), 'abc'):
            with self.assertRaises(ParameterDomainError):
                sensitivity_params(value)

    def test_tau_is_monotone_and_tends_to_one(self):
        taus = [sensitivity_params(lam).tau for lam in (1, 1.5, 2, 5, 100, 1e9)]
        self.assertEqual(taus, sorted(taus))
        self.assertEqual(len(set(taus)), len(taus))
        self.assertGreater(taus[-1], 1 - 1e-8)

    def test_quantile_level_per_side(self):
        params = sensitivity_params(3.0)
        self.assertEqual(params.quantile_level(Side.UPPER), 0.75)
        self.assertEqual(params.quantile_level(Side.LOWER), 0.25)


class ValidateDatasetTests(SimpleTestCase):
    def setUp(self):
        self.raw = pd.DataFrame({
            'age': [1.0, 2.0, 3.0],
            'score': [0.5, -0.5, 0.0],
            'z': [0, 1, 1],
            'y': [1.5, 2.5, -1.0],
        })
        self.roles = {'treatment': 'z', 'outcome': 'y', 'covariates': ['age', 'score']}

    def test_well_formed_table(self):
        data = validate_dataset(self.raw, self.roles, 'continuous')
        self.assertEqual((data.n, data.d), (3, 2))
        self.assertEqual(data.covariate_names, ('age', 'score'))
        self.assertFalse(data.outcome.flags.writeable)

    def test_rest_selects_remaining_columns(self):
        roles = dict(self.roles, covariates='rest')
        data = validate_dataset(self.raw, roles, OutcomeKind.CONTINUOUS)
        self.assertEqual(data.covariate_names, ('age', 'score'))

    def test_treatment_outside_zero_one(self):
        raw = self.raw.assign(z=[0, 2, 1])
        with self.assertRaises(DataError) as ctx:
            validate_dataset(raw, self.roles, 'continuous')
        self.assertEqual(ctx.exception.problems[0][:2], (1, 'z'))

    def test_binary_flag_with_fractional_outcome(self):
        raw = self.raw.assign(y=[0, 0.5, 1])
        with self.assertRaises(DataError) as ctx:
            validate_dataset(raw, self.roles, 'binary')
        self.assertIn("row 1, column 'y'", str(ctx.exception))

    def test_missing_cells_are_listed(self):
        raw = self.raw.copy()
        raw.loc[2, 'score'] = np.nan
        raw.loc[0, 'y'] = np.inf
        with self.assertRaises(DataError) as ctx:
            validate_dataset(raw, self.roles, 'continuous')
        located = {(row, column) for row, column, _ in ctx.exception.problems}
        self.assertEqual(located, {(2, 'score'), (0, 'y')})

    def test_missing_outcome_column_is_named(self):
        roles = dict(self.roles, outcome='survival')
        with self.assertRaises(DataError) as ctx:
            validate_dataset(self.raw, roles, 'continuous')
        self.assertIn('survival', str(ctx.exception))

    def test_round_trip_through_frame(self):
        data = validate_dataset(self.raw, self.roles, 'continuous')
        again = validate_dataset(data.to_frame(), data.roles(), data.outcome_kind)
        self.assertEqual(again, data)

    def test_round_trip_through_csv(self):
        rng = np.random.default_rng(3)
        data = Dataset(
            covariates=rng.normal(size=(25, 3)),
            treatment=rng.integers(0, 2, size=25),
            outcome=rng.normal(size=25),
        )
        text = data.to_frame().to_csv(index=False)
        frame = pd.read_csv(StringIO(text), float_precision='round_trip')
        self.assertEqual(validate_dataset(frame, data.roles(), 'continuous'), data)

    def test_infer_outcome_kind(self):
        self.assertIs(infer_outcome_kind(self.raw, 'y'), OutcomeKind.CONTINUOUS)
        self.assertIs(infer_outcome_kind(self.raw, 'z'), OutcomeKind.BINARY)


class DatasetTests(SimpleTestCase):
    def test_fractional_treatment_is_not_truncated(self):
        with self.assertRaises(DataError) as ctx:
            Dataset(covariates=np.zeros((3, 1)), treatment=[0.5, 1.7, 1.0], outcome=[1.0, 0.0, 1.0])
        self.assertEqual([row for row, _, _ in ctx.exception.problems], [0, 1])

    def test_treatment_of_two_is_rejected(self):
        with self.assertRaises(DataError):
            Dataset(covariates=np.zeros(3), treatment=[0, 1, 2], outcome=[1.0, 0.0, 1.0])

    def test_non_finite_cells_are_rejected(self):
        with self.assertRaises(DataError) as ctx:
            Dataset(covariates=[[0.0], [np.inf], [1.0]], treatment=[0, 1, 1], outcome=[1.0, np.nan, 0.3])
        self.assertEqual(
            [(row, column) for row, column, _ in ctx.exception.problems],
            [(1, 'covariates'), (1, 'outcome')],
        )

    def test_binary_outcome_domain(self):
        with self.assertRaises(DataError):
            Dataset(covariates=np.zeros(3), treatment=[0, 1, 1], outcome=[1.0, 0.0, 0.3],
                    outcome_kind=OutcomeKind.BINARY)
        data = Dataset(covariates=np.zeros(3), treatment=[0, 1, 1], outcome=[1.0, 0.0, 0.3])
        self.assertFalse(data.is_binary)

    def test_row_counts_must_agree(self):
        with self.assertRaises(DataError) as ctx:
            Dataset(covariates=np.zeros((5, 1)), treatment=[0, 1], outcome=[1.0, 2.0, 3.0])
        self.assertIn('covariates=5', str(ctx.exception))

    def test_empty_dataset_is_rejected(self):
        with self.assertRaises(DataError):
            Dataset(covariates=np.zeros((0, 1)), treatment=[], outcome=[])

    def test_covariate_names_match_columns(self):
        with self.assertRaises(DataError):
            Dataset(covariates=np.zeros((2, 2)), treatment=[0, 1], outcome=[0.0, 1.0], covariate_names=('age',))

    def test_valid_arrays_are_frozen(self):
        data = Dataset(covariates=np.zeros(2), treatment=[0.0, 1.0], outcome=[0.0, 1.0])
        self.assertEqual(data.treatment.dtype, np.int8)
        self.assertFalse(data.outcome.flags.writeable)


class NuisanceSetTests(SimpleTestCase):
    def test_rejects_unclipped_propensity(self):
        pair = np.zeros((2, 2))
        with self.assertRaises(ParameterDomainError):
            NuisanceSet(e_hat=[0.005, 0.5], q_plus=pair, q_minus=pair, rho_plus=pair, rho_minus=pair, epsilon=0.01)

    def test_row_and_side_accessors(self):
        eta = NuisanceSet(
            e_hat=[0.4],
            q_plus=[[1.0, 2.0]],
            q_minus=[[-1.0, -2.0]],
            rho_plus=[[3.0, 4.0]],
            rho_minus=[[-3.0, -4.0]],
        )
        row = eta.row(0)
        self.assertEqual(row.q_plus, (1.0, 2.0))
        np.testing.assert_array_equal(eta.rho(Side.LOWER), [[-3.0, -4.0]])
        self.assertIs(Side.UPPER.opposite, Side.LOWER)
