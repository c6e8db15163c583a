import json
import os
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import numpy as np
from django.conf import settings
from django.core.management import CommandError, call_command
from django.db import connections
from django.test import SimpleTestCase
from rest_framework import serializers

import dvds_sensitivity
from estimator.services import sensitivity_curve
from msm.exceptions import HarnessError
from msm.models import Estimand, OutcomeKind
from msm.services import sensitivity_params
from nuisance.models import default_bundle

from .serializers import AnalysisConfigSerializer, CoverageConfigSerializer, parse_lambda_grid
from .services import RECORD_COLUMNS, REPLICATION_COLUMNS, read_dataset

FIXTURE = Path(__file__).resolve().parent / 'fixtures' / 'binary_sample.csv'
GOLDEN = FIXTURE.with_name('binary_sample_golden.json')
UPDATE_GOLDEN = os.getenv('DVDS_UPDATE_GOLDEN') == '1'


def run(command, *args, **options):
    stdout, stderr = StringIO(), StringIO()
    call_command(command, *args, stdout=stdout, stderr=stderr, **options)
    return stdout.getvalue()


class LambdaGridTests(SimpleTestCase):
    def test_inclusive_grid(self):
        self.assertEqual(parse_lambda_grid('1:2:0.5'), [1.0, 1.5, 2.0])
        grid = parse_lambda_grid('1:2:0.1')
        self.assertEqual(len(grid), 11)
        self.assertEqual(grid[1], 1.1)
        self.assertEqual(grid[-1], 2.0)

    def test_malformed_grids(self):
        for text in ('1:2', '1:x:0.5', '1:2:0', '2:1:0.5'):
            with self.subTest(text=text), self.assertRaises(serializers.ValidationError):
                parse_lambda_grid(text)


class ConfigSerializerTests(SimpleTestCase):
    def base(self, **changes):
        data = {'data': 'in.csv', 'treatment': 'z', 'outcome': 'y', 'seed': 1, 'lambdas': [2.0, 1.0, 2.0]}
        data.update(changes)
        return data

    def test_lambdas_sorted_and_deduplicated(self):
        serializer = AnalysisConfigSerializer(data=self.base(lambda_grid='1:1.5:0.5'))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        config = serializer.save()
        self.assertEqual(config.lambdas, (1.0, 1.5, 2.0))
        self.assertEqual(config.covariates, 'rest')
        self.assertIs(config.estimand, Estimand.ATE)
        self.assertIsNone(config.outcome_kind)

    def test_rejects_out_of_range_settings(self):
        for changes in ({'lambdas': [0.5]}, {'lambdas': []}, {'alpha': 1.0}, {'folds': 1}, {'epsilon': 0.5},
                        {'estimand': 'ite'}, {'format': 'xml'}):
            with self.subTest(changes=changes):
                self.assertFalse(AnalysisConfigSerializer(data=self.base(**changes)).is_valid())

    def test_seed_is_required(self):
        data = self.base()
        del data['seed']
        serializer = AnalysisConfigSerializer(data=data)
        self.assertFalse(serializer.is_valid())
        self.assertIn('seed', serializer.errors)

    def test_coverage_config(self):
        data = {'spec': 'paper_binary', 'reps': 10, 'n': 100, 'seed': 3, 'lambdas': [1.0]}
        serializer = CoverageConfigSerializer(data=data)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save().dispatch, 'local')
        self.assertFalse(CoverageConfigSerializer(data={**data, 'reps': 0}).is_valid())
        self.assertFalse(CoverageConfigSerializer(data={**data, 'spec': 'custom_discrete'}).is_valid())
        self.assertFalse(CoverageConfigSerializer(
            data={**data, 'dispatch': 'celery', 'oracle_nuisances': True}
        ).is_valid())


class ReadDatasetTests(SimpleTestCase):
    def test_infers_binary_outcomes(self):
        data = read_dataset(FIXTURE, 'z', 'y')
        self.assertIs(data.outcome_kind, OutcomeKind.BINARY)
        self.assertEqual(data.covariate_names, ('x1', 'x2'))
        self.assertEqual(data.n, 240)

    def test_explicit_kind_wins(self):
        self.assertIs(read_dataset(FIXTURE, 'z', 'y', 'x1', OutcomeKind.CONTINUOUS).outcome_kind, OutcomeKind.CONTINUOUS)


class AnalyzeCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def analyze(self, **options):
        defaults = {'data': str(FIXTURE), 'treatment': 'z', 'outcome': 'y', 'seed': 17}
        defaults.update(options)
        return run('analyze', **defaults)

    def test_grid_records(self):
        out = self.path('bounds.json')
        self.analyze(lambda_grid='1:2:0.5', out=out)
        payload = json.loads(Path(out).read_text())
        self.assertEqual(payload['version'], dvds_sensitivity.__version__)
        self.assertEqual(payload['estimand'], 'ate')
        self.assertEqual(set(payload), {'version', 'estimand', 'outcome_kind', 'alpha', 'epsilon', 'records'})
        self.assertEqual(payload['outcome_kind'], 'binary')
        records = payload['records']
        self.assertEqual([record['lambda'] for record in records], [1.0, 1.5, 2.0])
        self.assertEqual(set(records[0]), set(RECORD_COLUMNS))
        widths = [record['psi_upper'] - record['psi_lower'] for record in records]
        self.assertEqual(widths, sorted(widths))
        self.assertEqual({record['K'] for record in records}, {5})

    def test_unconfounded_record_is_symmetric(self):
        record = json.loads(self.analyze(lambdas=[1.0]))['records'][0]
        self.assertAlmostEqual(record['psi_lower'], record['psi_upper'], delta=1e-12)
        self.assertAlmostEqual(
            record['ci_upper'] - record['psi_upper'], record['psi_lower'] - record['ci_lower'], delta=1e-12
        )

    def test_matches_library_calls(self):
        payload = json.loads(self.analyze(lambdas=[1.5, 3.0], estimand='att', folds=4))
        data = read_dataset(FIXTURE, 'z', 'y')
        grid = [sensitivity_params(lam) for lam in (1.5, 3.0)]
        records = sensitivity_curve(data, grid, default_bundle(OutcomeKind.BINARY), Estimand.ATT, 4, 17, 0.01, 0.05)
        self.assertEqual(payload['records'], [record.as_dict() for record in records])

    def test_output_is_identical_across_runs_and_threads(self):
        outputs = []
        for index, threads in enumerate((1, 1, 3)):
            out = self.path(f'run{index}.json')
            self.analyze(lambda_grid='1:3:0.5', threads=threads, out=out)
            outputs.append(Path(out).read_bytes())
        self.assertEqual(outputs[0], outputs[1])
        self.assertEqual(outputs[0], outputs[2])

    def test_output_matches_committed_golden(self):
        # Regenerate with DVDS_UPDATE_GOLDEN=1 after an intended output change.
        options = {'lambda_grid': '1:3:0.5', 'estimand': 'ate'}
        if UPDATE_GOLDEN or not GOLDEN.exists():
            self.analyze(threads=1, out=str(GOLDEN), **options)
        golden = GOLDEN.read_bytes()
        for threads in (1, 3):
            out = self.path(f'golden{threads}.json')
            self.analyze(threads=threads, out=out, **options)
            self.assertEqual(Path(out).read_bytes(), golden, f'threads={threads}')

    def test_csv_format(self):
        lines = self.analyze(lambdas=[1.0, 2.0], format='csv').splitlines()
        self.assertEqual(lines[0], f'# dvds-sensitivity {dvds_sensitivity.__version__}')
        self.assertEqual(lines[1], ','.join(RECORD_COLUMNS))
        self.assertEqual(len(lines), 4)

    def test_learner_config_file(self):
        config = self.path('learners.json')
        Path(config).write_text(json.dumps({'propensity': {'kind': 'constant'}, 'regression': {'kind': 'constant'}}))
        record = json.loads(self.analyze(lambdas=[1.0], learner_config=config))['records'][0]
        self.assertTrue(np.isfinite(record['psi_upper']))

        Path(config).write_text(json.dumps({'propensity': {'kind': 'pinball_linear'}}))
        with self.assertRaises(CommandError) as ctx:
            self.analyze(lambdas=[1.0], learner_config=config)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('propensity', str(ctx.exception))

    def test_missing_column_is_an_input_error(self):
        out = self.path('never.json')
        with self.assertRaises(CommandError) as ctx:
            self.analyze(lambdas=[1.0], outcome='nope', out=out)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn('nope', str(ctx.exception))
        self.assertFalse(os.path.exists(out))

    def test_missing_file_and_bad_lambda(self):
        with self.assertRaises(CommandError) as ctx:
            self.analyze(lambdas=[1.0], data=self.path('absent.csv'))
        self.assertEqual(ctx.exception.returncode, 2)
        with self.assertRaises(CommandError) as ctx:
            self.analyze(lambdas=[0.9])
        self.assertEqual(ctx.exception.returncode, 2)

    def test_fit_failure_is_a_runtime_error(self):
        data = self.path('treated.csv')
        Path(data).write_text('x,z,y\n' + ''.join(f'{i},1,{i % 3}\n' for i in range(12)))
        out = self.path('never.json')
        with self.assertRaises(CommandError) as ctx:
            self.analyze(data=data, lambdas=[2.0], folds=3, out=out)
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn('fold', str(ctx.exception))
        self.assertFalse(os.path.exists(out))


class SimulateCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_byte_identical_per_seed(self):
        paths = [os.path.join(self.tmp.name, f'sim{i}.csv') for i in range(2)]
        for path in paths:
            run('simulate', spec='paper_binary', n=1000, seed=1, out=path)
        self.assertEqual(Path(paths[0]).read_bytes(), Path(paths[1]).read_bytes())

    def test_continuous_rows(self):
        lines = run('simulate', spec='paper_continuous', n=5, seed=2).splitlines()
        self.assertEqual(lines[0], 'x1,x2,x3,x4,x5,z,y')
        self.assertEqual(len(lines), 6)

    def test_round_trip_through_analyze(self):
        path = os.path.join(self.tmp.name, 'sim.csv')
        run('simulate', spec='paper_binary', n=400, seed=3, out=path)
        data = read_dataset(path, 'z', 'y')
        self.assertIs(data.outcome_kind, OutcomeKind.BINARY)
        self.assertEqual(data.d, 5)

    def test_unknown_spec(self):
        with self.assertRaises(CommandError) as ctx:
            run('simulate', spec='unknown', n=5, seed=0)
        self.assertEqual(ctx.exception.returncode, 2)


class CoverageCommandTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = os.path.join(self.tmp.name, 'coverage.json')

    def coverage(self, **options):
        defaults = {'spec': 'paper_binary', 'reps': 50, 'n': 500, 'seed': 5, 'lambdas': [1.0, 2.0],
                    'oracle_nuisances': True, 'out': self.out}
        defaults.update(options)
        return run('coverage', **defaults)

    def test_report_shape(self):
        self.coverage()
        payload = json.loads(Path(self.out).read_text())
        self.assertEqual(payload['reps'], 50)
        self.assertEqual(len(payload['replication_seeds']), 50)
        self.assertEqual([entry['lambda'] for entry in payload['entries']], [1.0, 2.0])
        for entry in payload['entries']:
            self.assertGreaterEqual(entry['coverage'], 0.0)
            self.assertLessEqual(entry['coverage'], 1.0)
        lines = Path(self.tmp.name, 'coverage_records.csv').read_text().splitlines()
        self.assertTrue(lines[0].startswith('# dvds-sensitivity'))
        self.assertEqual(lines[1], ','.join(REPLICATION_COLUMNS))
        self.assertEqual(len(lines), 2 + 100)

    def test_fixed_seed_is_reproducible(self):
        self.coverage(reps=5, n=200)
        first = Path(self.out).read_bytes()
        self.coverage(reps=5, n=200)
        self.assertEqual(first, Path(self.out).read_bytes())

    def test_zero_reps(self):
        with self.assertRaises(CommandError) as ctx:
            self.coverage(reps=0)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_harness_failure(self):
        with mock.patch('reports.management.commands.coverage.run_coverage', side_effect=HarnessError('lost 3 of 5')):
            with self.assertRaises(CommandError) as ctx:
                self.coverage(reps=5)
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertFalse(os.path.exists(self.out))


class ProjectSettingsTests(SimpleTestCase):
    def test_no_database_or_auth_apps(self):
        self.assertEqual(connections['default'].settings_dict['ENGINE'], 'django.db.backends.dummy')
        self.assertFalse([app for app in settings.INSTALLED_APPS if app.startswith('django.contrib.')])
