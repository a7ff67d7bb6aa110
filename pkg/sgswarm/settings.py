import os
from pathlib import Path

BASE_DIR = Path(__file__).resolve().parent.parent
SECRET_KEY = os.environ.get('SGSWARM_SECRET_KEY', 'sgswarm-local-only-not-served')

DEBUG = False

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Applications
    'numcore',
    'swarmsim',
    'marl',
    'skillgraph',
    'orchestrator',
    'cli',

    # Celery results
    'django_celery_results',

]

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.environ.get('SGSWARM_DB', str(BASE_DIR / 'sgswarm.sqlite3')),
    }
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# Logging: one logger per app, verbosity from SGSWARM_LOG
SGSWARM_LOG_LEVEL = os.environ.get('SGSWARM_LOG', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
            'datefmt': '%Y-%m-%d %H:%M:%S',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        app: {
            'handlers': ['console'],
            'level': SGSWARM_LOG_LEVEL,
            'propagate': False,
        }
        for app in ('numcore', 'swarmsim', 'marl', 'skillgraph', 'orchestrator', 'cli')
    },
}

# Skill graph defaults (32-skill library scale)
SGSWARM = {
    'GRAPH_DIM': 96,
    'GRAPH_HIDDEN_SIZE': 256,
    'GRAPH_HIDDEN_LAYERS': 3,
    'GRAPH_ITERATIONS': 500,
    'GRAPH_BATCH': 256,
    'GRAPH_LEARNING_RATE': 1e-3,
    'GRAPH_LAMBDA': 3.0,
    'ALPHA_HIGH': 0.95,
    'ALPHA_LOW': 0.85,
    'BLEND_CAP': 4,
    'MAX_NEGATIVES_PER_POSITIVE': 4,
    'ENV_DELTA_WEIGHTS': (0.95, 0.05),
    'TASK_DELTA_WEIGHTS': {
        'adversarial': (0.0, 0.0, 0.0, 3.0, 1.0),
        # 'shifted' puts the 3/1 weights on (d_ref, r_perc); 'positional' keeps the padded slots
        'flocking-shifted': (0.0, 0.0, 3.0, 1.0, 0.0),
        'flocking-positional': (0.0, 0.0, 0.0, 3.0, 1.0),
    },
    'FLOCKING_DELTA_PROFILE': 'flocking-shifted',
    'SCENARIO_STEP_BUDGET': 3000,
    'SCENARIO_FINAL_STAGE_STEPS': 100,
}

# Celery settings
CELERY_BROKER_URL = os.environ.get('SGSWARM_BROKER_URL', 'redis://localhost:6379/0')
CELERY_RESULT_BACKEND = 'django-db'
CELERY_ACCEPT_CONTENT = ['application/json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'
CELERY_TASK_ALWAYS_EAGER = os.environ.get('SGSWARM_EAGER', '1') not in ('0', 'false', 'False')
CELERY_TASK_EAGER_PROPAGATES = True
