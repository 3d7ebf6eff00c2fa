"""
Toolkit settings, read from the ``MEMOREC`` dict in the Django settings.

Works like DRF's ``api_settings``: user values are merged section by section
over the defaults below, so a settings file only needs to name what it changes.

    from memorec.conf import memorec_settings
    memorec_settings.APL['K']
"""
from copy import deepcopy

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.core.signals import setting_changed

DEFAULTS = {
    'TRACE': {
        'ON_ERROR': 'abort',
        'APPLICATION_PACKAGES': [],
        'INTERNAL_PACKAGES': [],
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
        'DEFAULT_TTL_NS': None,
        'HIT_LOOKUP_NS': 500,
        'MISS_OVERHEAD_NS': 1500,
        'WHITELIST_CHECK_NS': 200,
    },
    'REPORT': {
        'FORMAT': 'csv',
    },
}


class MemorecSettings:
    """Section-level access to the merged toolkit settings."""

    def __init__(self, defaults=None):
        self.defaults = defaults or DEFAULTS
        self._cached = {}

    def _user_settings(self):
        try:
            return getattr(settings, 'MEMOREC', {}) or {}
        except ImproperlyConfigured:
            # Used as a library without a configured Django project
            return {}

    def __getattr__(self, section):
        if section not in self.defaults:
            raise AttributeError(f"Invalid memorec setting section: '{section}'")
        if section not in self._cached:
            merged = deepcopy(self.defaults[section])
            merged.update(self._user_settings().get(section, {}))
            self._cached[section] = merged
        return self._cached[section]

    def reload(self):
        self._cached.clear()


memorec_settings = MemorecSettings(DEFAULTS)


def reload_memorec_settings(*args, **kwargs):
    if kwargs.get('setting') == 'MEMOREC':
        memorec_settings.reload()


setting_changed.connect(reload_memorec_settings)
