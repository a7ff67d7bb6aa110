from swarmsim.constants.swarmsim_constants import ADVERSARIAL, FIXED, FLOCKING, PERIODIC

# Entity kinds
ENVIRONMENT = 'environment'
TASK = 'task'

ENTITY_KIND_CHOICES = (
    (ENVIRONMENT, 'Environment'),
    (TASK, 'Task'),
)

ENV_FEATURE_DIM = 2
TASK_FEATURE_DIM = 5

# Relations, in storage order
ENV_TO_SKILL = 'env_to_skill'
TASK_TO_SKILL = 'task_to_skill'

RELATION_CHOICES = (
    (ENV_TO_SKILL, 'environment -> skill'),
    (TASK_TO_SKILL, 'task -> skill'),
)
RELATIONS = (ENV_TO_SKILL, TASK_TO_SKILL)
RELATION_FOR_KIND = {ENVIRONMENT: ENV_TO_SKILL, TASK: TASK_TO_SKILL}

# Sample kinds
POSITIVE = 'positive'
NEGATIVE = 'negative'
SOFT = 'soft'

SAMPLE_KIND_CHOICES = (
    (POSITIVE, 'Positive'),
    (NEGATIVE, 'Negative'),
    (SOFT, 'Soft'),
)

# Dispatch bands
REUSE = 'reuse'
BLEND = 'blend'
FINETUNE = 'finetune'

BAND_CHOICES = (
    (REUSE, 'Reuse the top skill'),
    (BLEND, 'Blend the skills in the middle band'),
    (FINETUNE, 'Fine-tune the top skill'),
)

# Similarity weight profiles for flocking tasks
FLOCKING_SHIFTED = 'flocking-shifted'
FLOCKING_POSITIONAL = 'flocking-positional'

FLOCKING_PROFILE_CHOICES = (
    (FLOCKING_SHIFTED, 'Weights on (d_ref, r_perc)'),
    (FLOCKING_POSITIONAL, 'Weights on padded slots 4 and 5'),
)

TRANSLATION_INIT_SCALE = 0.1
UNIT_NORM_TOLERANCE = 1e-6

# Graph bundle layout
GRAPH_FORMAT_VERSION = 1
ENV_ENCODER_STEM = 'env_encoder'
TASK_ENCODER_STEM = 'task_encoder'
SKILLS_INDEX_FILE = 'skills.index'
EMBEDDINGS_FILE = 'embeddings.bin'
RELATIONS_FILE = 'relations.bin'
GRAPH_META_FILE = 'graph.meta'
LOSS_FILE = 'loss.csv'
LOSS_FIELDS = ('iteration', 'loss')
SCORE_FIELDS = ('skill', 'S_env', 'S_task', 'S')

# Reference library: 8 flocking and 8 adversarial subtasks under two environments
LIBRARY_ENVIRONMENTS = (
    ('fixed', (FIXED, 6.0)),
    ('periodic', (PERIODIC, 6.0)),
)
LIBRARY_TASKS = (
    ('floc_1', (1.0, 0.0, 0.4, 2.0)),
    ('floc_2', (1.0, 0.0, 0.8, 2.0)),
    ('floc_3', (1.0, 0.0, 0.4, 3.0)),
    ('floc_4', (1.0, 0.0, 0.8, 3.0)),
    ('floc_5', (1.0, 0.0, 0.4, 4.0)),
    ('floc_6', (1.0, 0.0, 0.8, 4.0)),
    ('floc_7', (1.0, 0.0, 0.4, 5.0)),
    ('floc_8', (1.0, 0.0, 0.8, 5.0)),
    ('adve_1', (1.0, 0.0, 1.0, 2.0, 0.3)),
    ('adve_2', (1.0, 0.0, 1.0, 3.0, 0.3)),
    ('adve_3', (1.0, 0.0, 1.0, 4.0, 0.3)),
    ('adve_4', (1.0, 0.0, 1.0, 5.0, 0.3)),
    ('adve_5', (1.0, 0.0, 1.0, 2.0, 0.4)),
    ('adve_6', (1.0, 0.0, 1.0, 3.0, 0.4)),
    ('adve_7', (1.0, 0.0, 1.0, 4.0, 0.4)),
    ('adve_8', (1.0, 0.0, 1.0, 5.0, 0.4)),
)

TASK_KINDS = (FLOCKING, ADVERSARIAL)
