import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from msm.exceptions import (
    DataError,
    EstimationError,
    FitError,
    HarnessError,
    OracleError,
    ParameterDomainError,
)

from ..services import as_validation_messages, atomic_write, read_learner_config

INPUT_ERROR = 2
RUNTIME_ERROR = 3

logger = logging.getLogger(__name__)


class SensitivityCommand(BaseCommand):
    """Maps input problems to exit code 2 and estimation failures to exit code 3."""

    def add_run_arguments(self, parser):
        parser.add_argument('--lambda', dest='lambdas', type=float, action='append',
                            help='Sensitivity level Λ >= 1; repeat for several.')
        parser.add_argument('--lambda-grid', dest='lambda_grid', help='Grid of Λ values as start:stop:step.')
        parser.add_argument('--folds', type=int, default=settings.DVDS_DEFAULT_FOLDS)
        parser.add_argument('--epsilon', type=float, default=settings.DVDS_DEFAULT_EPSILON,
                            help='Propensity clipping level.')
        parser.add_argument('--alpha', type=float, default=settings.DVDS_DEFAULT_ALPHA)
        parser.add_argument('--seed', type=int, required=True)
        parser.add_argument('--estimand', default='ate', help='ate, att, mean1 or mean0.')
        parser.add_argument('--learner-config', dest='learner_config', help='JSON file with learner settings.')
        parser.add_argument('--threads', type=int, default=settings.DVDS_DEFAULT_THREADS)

    def run_settings(self, options):
        data = {
            'seed': options['seed'],
            'folds': options['folds'],
            'epsilon': options['epsilon'],
            'alpha': options['alpha'],
            'estimand': options['estimand'],
            'threads': options['threads'],
        }
        if options.get('lambdas'):
            data['lambdas'] = options['lambdas']
        if options.get('lambda_grid'):
            data['lambda_grid'] = options['lambda_grid']
        if options.get('learner_config'):
            data['learner_config'] = read_learner_config(options['learner_config'])
        return data

    def load_config(self, serializer_class, data):
        serializer = serializer_class(data=data)
        serializer.is_valid(raise_exception=True)
        return serializer.save()

    def emit(self, text, path):
        if path:
            atomic_write(path, text)
        else:
            self.stdout.write(text, ending='')

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except serializers.ValidationError as e:
            raise CommandError('Invalid configuration: ' + '; '.join(as_validation_messages(e)),
                               returncode=INPUT_ERROR) from e
        except (DataError, ParameterDomainError, OSError) as e:
            raise CommandError(str(e), returncode=INPUT_ERROR) from e
        except (FitError, EstimationError, HarnessError, OracleError) as e:
            logger.error('%s failed: %s', self.__module__.rsplit('.', 1)[-1], e)
            raise CommandError(str(e), returncode=RUNTIME_ERROR) from e

    def run(self, **options):
        raise NotImplementedError
