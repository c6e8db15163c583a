"""Dataset ingestion, the analyze/coverage runs and their file outputs."""
import io
import json
import logging
import os
import tempfile

import pandas as pd
from rest_framework import serializers

import dvds_sensitivity
from estimator.services import sensitivity_curve
from msm.exceptions import DataError
from msm.models import Estimand, OutcomeKind
from msm.services import infer_outcome_kind, sensitivity_params, validate_dataset
from nuisance.serializers import LearnerBundleSerializer
from oracle.coverage import monte_carlo_coverage
from oracle.models import GenerativeSpec
from oracle.simulation import oracle_bundle

from .models import OutputFormat

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ('lambda', 'psi_lower', 'psi_upper', 'se_lower', 'se_upper', 'ci_lower', 'ci_upper', 'n', 'K', 'seed')
REPLICATION_COLUMNS = ('replication',) + RECORD_COLUMNS + ('covered',)


def read_table(path):
    try:
        return pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f'No such data file: {path}') from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f'Cannot parse {path} as CSV: {e}') from None


def read_learner_config(path):
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise DataError(f'No such learner config: {path}') from None
    except json.JSONDecodeError as e:
        raise DataError(f'Learner config {path} is not valid JSON: {e}') from None


def read_dataset(path, treatment, outcome, covariates='rest', outcome_kind=None):
    """Load a CSV into a validated Dataset, inferring the outcome kind when it is None."""
    raw = read_table(path)
    if outcome_kind is None:
        outcome_kind = infer_outcome_kind(raw, outcome) if outcome in raw.columns else OutcomeKind.CONTINUOUS
        logger.info('Treating outcome %r as %s', outcome, outcome_kind.value)
    roles = {'treatment': treatment, 'outcome': outcome, 'covariates': covariates}
    return validate_dataset(raw, roles, outcome_kind)


def learner_bundle(config, outcome_kind):
    serializer = LearnerBundleSerializer(data=config or {}, context={'outcome_kind': outcome_kind})
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def run_analysis(config):
    """Returns the dataset and one SensitivityRecord per Λ, in ascending Λ."""
    data = read_dataset(config.data, config.treatment, config.outcome, config.covariates, config.outcome_kind)
    bundle = learner_bundle(config.learner_config, data.outcome_kind)
    grid = [sensitivity_params(lam) for lam in config.lambdas]
    records = sensitivity_curve(
        data, grid, bundle, config.estimand, config.k, config.seed, config.epsilon, config.alpha,
        threads=config.threads,
    )
    logger.info(
        'Estimated %s bounds at %d sensitivity levels on n=%d rows', Estimand(config.estimand).value, len(records), data.n,
    )
    return data, records


def run_coverage(config):
    spec = GenerativeSpec.named(config.spec_name)
    if config.oracle_nuisances:
        bundle = oracle_bundle(spec)
    else:
        bundle = learner_bundle(config.learner_config, spec.outcome_kind)
    return monte_carlo_coverage(
        spec, config.lambdas, config.reps, config.n, bundle, config.k, config.alpha, config.seed,
        estimand=config.estimand, epsilon=config.epsilon, threads=config.threads, dispatch=config.dispatch,
    )


def analysis_payload(config, data, records):
    return {
        'version': dvds_sensitivity.__version__,
        'estimand': config.estimand.value,
        'outcome_kind': data.outcome_kind.value,
        'alpha': config.alpha,
        'epsilon': config.epsilon,
        'records': [record.as_dict() for record in records],
    }


def coverage_payload(report):
    return {
        'version': dvds_sensitivity.__version__,
        'estimand': report.estimand.value,
        'spec': report.spec,
        'n': report.n,
        'K': report.k,
        'alpha': report.alpha,
        'seed': report.seed,
        'reps': report.reps,
        'replication_seeds': list(report.replication_seeds),
        'entries': [entry.as_dict() for entry in report.entries],
        'failures': list(report.failures),
    }


def render_json(payload):
    return json.dumps(payload, indent=2) + '\n'


def render_csv(rows, columns, banner=True):
    """CSV text with a fixed column order; ``banner`` adds the version comment line."""
    buffer = io.StringIO()
    if banner:
        buffer.write(f'# dvds-sensitivity {dvds_sensitivity.__version__}\n')
    pd.DataFrame(list(rows), columns=list(columns)).to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def render_analysis(config, data, records):
    if config.fmt == OutputFormat.CSV:
        return render_csv((record.as_dict() for record in records), RECORD_COLUMNS)
    return render_json(analysis_payload(config, data, records))


def render_dataset(data):
    """x1..xd, z, y with no banner, so the file reads back as a plain table."""
    return data.to_frame().to_csv(index=False, lineterminator='\n')


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    handle = tempfile.NamedTemporaryFile('w', dir=directory, prefix='.dvds-', suffix='.tmp', delete=False, newline='')
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        if os.path.exists(handle.name):
            os.unlink(handle.name)
        raise
    logger.debug('Wrote %s', path)


def records_path(out):
    root, _ = os.path.splitext(out)
    return f'{root}_records.csv'


def as_validation_messages(error):
    """Flatten a DRF ValidationError into 'field: message' lines."""
    detail = error.detail if isinstance(error, serializers.ValidationError) else error
    if isinstance(detail, dict):
        return [
            f'{field}: {line}'
            for field, messages in detail.items()
            for line in as_validation_messages(messages)
        ]
    if isinstance(detail, list):
        return [line for item in detail for line in as_validation_messages(item)]
    return [str(detail)]
