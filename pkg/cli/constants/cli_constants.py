TOOL_VERSION = '1.0.0'

# Exit codes
EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

# Subcommands
TRAIN_SKILL = 'train-skill'
BUILD_GRAPH = 'build-graph'
QUERY = 'query'
RUN_SCENARIO = 'run-scenario'
EVAL = 'eval'
REGISTRY = 'registry'

REGISTRY_ADD = 'add'
REGISTRY_LIST = 'list'
REGISTRY_VERIFY = 'verify'
REGISTRY_GC = 'gc'

# Output files
MANIFEST_FILE = 'manifest.json'
SCORES_FILE = 'scores.csv'
DECISION_FILE = 'decision.json'
METRICS_FILE = 'metrics.csv'
TRAJECTORY_DIR = 'trajectories'
FINETUNED_DIR = 'finetuned'

METRIC_FIELDS = ('metric', 'value', 'verdict')
PASS = 'PASS'
FAIL = 'FAIL'

# eval metric names
REWARD = 'reward'
WIN_RATE = 'win_rate'
DISTANCE_ERROR = 'distance_error'
SKILL_METRICS = {REWARD: 'mean_reward', WIN_RATE: 'win_rate', DISTANCE_ERROR: 'distance_error'}

GRADIENTS = 'gradients'
QUALITY = 'quality'
NORMALS = 'normals'
GRAPH_METRICS = (GRADIENTS, QUALITY, NORMALS)

# Graph checks
GRADIENT_TOLERANCE = 1e-4
GRADIENT_DIRECTIONS = 4
GRADIENT_SAMPLE_LIMIT = 64
QUALITY_FLOORS = {'positive_above': 0.95, 'negative_below': 0.95, 'soft_within': 0.90}
NORMAL_TOLERANCE = 1e-9

DEFAULT_EVAL_EPISODES = 20
DEFAULT_TABLE_ROWS = 16
