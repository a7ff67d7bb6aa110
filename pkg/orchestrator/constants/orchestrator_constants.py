# Stage entry conditions
START = 'start'
ENCOUNTER = 'encounter'
TEAM_ELIMINATED = 'team-eliminated'

ENTRY_CHOICES = (
    (START, 'Scenario start'),
    (ENCOUNTER, 'A robot comes within r_perc of the opposing centroid'),
    (TEAM_ELIMINATED, 'A team has no living robots'),
)

# Per-team policy sources
GRAPH_QUERY = 'graph-query'
SCRIPTED = 'scripted'
FIXED_SKILL = 'fixed-skill'

POLICY_SOURCE_CHOICES = (
    (GRAPH_QUERY, 'Skill graph query'),
    (SCRIPTED, 'Built-in scripted controller'),
    (FIXED_SKILL, 'Named registry skill'),
)

# Why a stage ended
NEXT_STAGE = 'next-stage'
FINAL_STEPS = 'final-steps'
BUDGET = 'budget'

EXIT_REASON_CHOICES = (
    (NEXT_STAGE, 'Next stage entered'),
    (FINAL_STEPS, 'Final stage ran its step count'),
    (BUDGET, 'Step budget exhausted'),
)

# Registry layout
REGISTRY_SKILLS_DIR = 'skills'
HASH_CHUNK = 1 << 16

# Scenario outputs
DECISION_LOG_FILE = 'decisions.jsonl'
STAGE_SUMMARY_FILE = 'stages.csv'
TRAJECTORY_FILE = 'trajectory_seed{seed}.jsonl'
STAGE_SUMMARY_FIELDS = (
    'seed', 'stage', 'name', 'entry_tick', 'exit_tick', 'steps', 'exit_reason', 'alive_green', 'alive_red',
)
