# Teams
GREEN = 'green'
RED = 'red'

TEAM_CHOICES = (
    (GREEN, 'Green'),
    (RED, 'Red'),
)

# Task kinds
FLOCKING = 'flocking'
ADVERSARIAL = 'adversarial'

TASK_KIND_CHOICES = (
    (FLOCKING, 'Flocking'),
    (ADVERSARIAL, 'Adversarial'),
)

# Feature arity -> task kind
TASK_ARITY = {
    4: FLOCKING,
    5: ADVERSARIAL,
}

# Boundary flag y of the environment feature
PERIODIC = 0
FIXED = 1

BOUNDARY_CHOICES = (
    (PERIODIC, 'periodic'),
    (FIXED, 'fixed'),
)

# Robot
ROBOT_RADIUS = 0.1  # m
ROBOT_MASS = 1.0  # kg
HP_MAX = 80.0
REGEN_FACTOR = 0.1
HP_SNAP_TOLERANCE = 1e-9

# Attack sectors, as fractions of pi
K_I = 0.4
K_II = 0.4

# Reward constants
K_SURV = 5.0
K_SITU = 1.0
K_ATTR = 1.0
K_REPL = 15.0
K_ALIG = 2.0

# Perception
N_H = 6
DEFAULT_R_PERC = 3.0  # m, adversarial tasks carry no r_perc attribute

# Integration and forces
DT = 0.1  # s
F_MAX = 2.0  # N per unit action
K_SPRING = 25.0  # N/m
ZERO_SPEED = 1e-9

# Scripted controllers
PURSUIT_KP = 1.0
PURSUIT_KV = 2.0
LEADER_KP = 1.0
LEADER_KV = 2.0
LEADER_SPEED = 0.5  # m/s
LEADERS_PER_50 = 2

# Spawning
SPAWN_JITTER = 0.05  # m
SPAWN_SPACING = 0.4  # m

# Robot experiment values, usable as config
ROBOT_ARENA_L = 5.0
ROBOT_D_REF_CHOICES = (0.7, 1.3)
