"""
Django settings for the dvds_sensitivity project.

The project has no web surface: Django provides settings, logging, the
management-command CLI and the test runner, Django REST Framework validates
configuration, and Celery distributes Monte Carlo replications.
"""
import os
import sys
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'dvds-sensitivity-local')

DEBUG = os.getenv('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'msm',
    'cvar',
    'nuisance',
    'estimator',
    'oracle',
    'reports',
]

# Nothing is persisted, so no database is configured.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging
# Quieter default under the test runner.
TESTING = sys.argv[1:2] == ['test']
DVDS_LOG_LEVEL = os.getenv('DVDS_LOG_LEVEL', 'WARNING' if TESTING else 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {name} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': DVDS_LOG_LEVEL,
    },
}


# Sensitivity analysis defaults (command-line flags override these)
DVDS_DEFAULT_FOLDS = int(os.getenv('DVDS_DEFAULT_FOLDS', '5'))
DVDS_DEFAULT_EPSILON = float(os.getenv('DVDS_DEFAULT_EPSILON', '0.01'))
DVDS_DEFAULT_ALPHA = float(os.getenv('DVDS_DEFAULT_ALPHA', '0.05'))
DVDS_DEFAULT_THREADS = int(os.getenv('DVDS_DEFAULT_THREADS', '1'))

# Replications failing above this share abort a coverage run
DVDS_MAX_FAILURE_RATE = float(os.getenv('DVDS_MAX_FAILURE_RATE', '0.01'))


# Celery settings
CELERY_BROKER_URL = os.getenv('CELERY_BROKER_URL', 'redis://localhost:6379/0')
CELERY_RESULT_BACKEND = os.getenv('CELERY_RESULT_BACKEND', CELERY_BROKER_URL)
CELERY_TASK_ALWAYS_EAGER = os.getenv('CELERY_TASK_ALWAYS_EAGER', 'True').lower() == 'true'
CELERY_TASK_EAGER_PROPAGATES = True
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_ACCEPT_CONTENT = ['json']
