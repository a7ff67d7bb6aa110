from swarmsim.constants.swarmsim_constants import ADVERSARIAL, FLOCKING, GREEN, RED

# Local-critic MADDPG hyper-parameters per task kind
HYPERPARAMETERS = {
    ADVERSARIAL: {
        'episodes': 1200,
        'episode_len': 200,
        'buffer_size': 500000,
        'batch': 512,
        'hidden_size': 128,
        'hidden_layers': 2,
        'critic_lr': 1e-3,
        'actor_lr': 1e-4,
        'gamma': 0.99,
        'tau': 0.01,
        'noise_scale': 0.8,
        'exploration_decay': 0.1,
    },
    FLOCKING: {
        'episodes': 1800,
        'episode_len': 200,
        'buffer_size': 500000,
        'batch': 512,
        'hidden_size': 64,
        'hidden_layers': 3,
        'critic_lr': 1e-3,
        'actor_lr': 1e-4,
        'gamma': 0.99,
        'tau': 0.01,
        'noise_scale': 0.8,
        'exploration_decay': 0.1,
    },
}

ACTION_DIM = 2

LEARNER_TEAM = GREEN
OPPONENT_TEAM = RED

# Desk-scale training worlds
DEFAULT_TEAM_SIZE = 10
DEFAULT_LEADER_SPEED = 0.3  # m/s

REPLAY_INITIAL_ALLOCATION = 4096

# Evaluation
DISTANCE_ERROR_WINDOW = 50
EVAL_SEED_OFFSET = 1000003

# Skill record layout
SKILL_FORMAT_VERSION = 1
SKILL_META_FILE = 'skill.meta'
CURVE_FILE = 'curve.csv'
CURVE_FIELDS = ('episode', 'mean_reward', 'critic_loss', 'actor_loss')
ACTOR_STEM = 'actor'
CRITIC_STEM = 'critic'

# Provenance
TRAINED = 'trained'
FINE_TUNED = 'fine-tuned'

PROVENANCE_CHOICES = (
    (TRAINED, 'Trained from scratch'),
    (FINE_TUNED, 'Fine-tuned from a parent skill'),
)
