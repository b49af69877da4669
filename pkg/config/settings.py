"""
Django settings for the anti-bandit search project.

Le projet n'expose aucune API HTTP et n'utilise aucune base de données :
Django fournit la configuration, la journalisation, les commandes
d'administration (search, compare, sweep, resume) et le lanceur de tests.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from decouple import config


# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = config('SECRET_KEY', default='django-insecure-abandit-local-only')
DEBUG = config('DEBUG', default=False, cast=bool)
ALLOWED_HOSTS = []


# Application definition
INSTALLED_APPS = [
    'rest_framework',
    'search_space',
    'bandit',
    'evaluators',
    'robust_ops',
    'experiments',
]

# Pas de base de données : les runs sont des fichiers (JSON / CSV)
DATABASES = {}

LANGUAGE_CODE = 'fr-fr'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Les serializers DRF servent uniquement à valider les documents JSON
REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
    ],
}


# ================================
# CONFIGURATION DE LA RECHERCHE
# ================================

ABANDIT = {
    'SCHEMA_VERSION': 1,
    'OUTPUT_DIR': config('ABANDIT_OUTPUT_DIR', default=str(BASE_DIR / 'runs')),
    'JOBS': config('ABANDIT_JOBS', default=1, cast=int),
    'BRUTE_FORCE_LIMIT': config('ABANDIT_BRUTE_FORCE_LIMIT', default=10**6, cast=int),
    'CHECKPOINT_NAME': 'checkpoint.json',
    # Grilles par défaut de la commande sweep (λ = 0.7 est la valeur de référence)
    'LAMBDA_GRID': [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    'T_GRID': [1, 2, 3, 4, 5],
    # Dossier de vidage binaire des noyaux / perturbations (vide = désactivé)
    'DUMP_DIR': config('ABANDIT_DUMP_DIR', default=''),
}


# ================================
# JOURNALISATION
# ================================

LOG_LEVEL = config('ABANDIT_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name} {message}',
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
        'level': 'WARNING',
    },
    'loggers': {
        app: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for app in ['search_space', 'bandit', 'evaluators', 'robust_ops', 'experiments']
    },
}
