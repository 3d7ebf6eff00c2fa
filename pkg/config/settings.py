"""
Django settings for the memorec project.

The project is a command-line toolkit: there is no database, URL routing or
template layer. Everything runs through ``manage.py memorec <subcommand>``.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path

from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Nothing is signed or served, but Django refuses to start without a key.
SECRET_KEY = config('DJANGO_SECRET_KEY', default="memorec-insecure-local-key")

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "memorec",
]

# No persistence: traces, plans and reports are plain files.
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Logging
# Console only; the CLI's --verbosity flag adjusts the memorec logger at run time.

MEMOREC_LOG_LEVEL = config('MEMOREC_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'console': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'console',
        },
    },
    'loggers': {
        'memorec': {
            'handlers': ['console'],
            'level': MEMOREC_LOG_LEVEL,
            'propagate': False,
        },
    },
}

# Recommender, workload and replay defaults.
MEMOREC = {
    'TRACE': {
        'ON_ERROR': 'abort',
        'APPLICATION_PACKAGES': ['store'],
        'INTERNAL_PACKAGES': ['java', 'javax'],
    },
    'WORKLOAD': {
        'READ_FRACTION': 0.80,
        'CLOSE_PROBABILITY': 0.05,
        'THINK_TIME_NS': 1_000_000_000,
        'JITTER_FRACTION': 0.05,
    },
    'APL': {
        'K': 1.0,
        'CHANGEABILITY_CEILING': 0.1,
        'MIN_INPUT_OCCURRENCES': 2,
    },
    'MEM': {
        'MIN_MEAN_TIME_NS': 5000,
        'KERNEL': 'exhaustive',
        'INITIAL_DEPTH': 1,
        'MAX_DEPTH': 16,
        'COST_BASIS': 'total',
        'STOP_WHEN_STABLE': False,
        'SIZE_PENALTY_NS': 0,
    },
    'CACHE': {
        'DEFAULT_TTL_NS': None,  # unbounded
        'HIT_LOOKUP_NS': 500,
        'MISS_OVERHEAD_NS': 1500,
        'WHITELIST_CHECK_NS': 200,
    },
    'REPORT': {
        'FORMAT': 'csv',
    },
}
