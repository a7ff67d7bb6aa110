from __future__ import annotations

import numpy as np

from swarmsim.constants.swarmsim_constants import K_ALIG, K_ATTR, K_REPL, K_SITU, K_SURV
from swarmsim.geometry import displacement, unit


def adversarial_reward(agent, outcome, k_surv=K_SURV, k_situ=K_SITU):
    """
    +k_surv per enemy this robot helped eliminate, -k_surv when it is eliminated, and
    k_situ once per step when it holds an attack position against any enemy.
    """
    if outcome is None:
        return 0.0
    reward = k_surv * outcome.kills_by(agent.id)
    if outcome.was_killed(agent.id):
        reward -= k_surv
    if agent.id in outcome.in_attack_position:
        reward += k_situ
    return float(reward)


def flocking_reward(agent, neighbors, d_ref, env, k_attr=K_ATTR, k_repl=K_REPL, k_alig=K_ALIG):
    """Attraction and repulsion averaged over neighbours, plus the alignment penalty. No neighbours, no reward."""
    if not neighbors:
        return 0.0

    attraction = 0.0
    repulsion = 0.0
    heading_gap = np.zeros(2)
    own_heading = unit(agent.v)
    for neighbor in neighbors:
        d_ij = float(np.linalg.norm(displacement(agent.p, neighbor.p, env)))
        if d_ij > d_ref:
            attraction -= k_attr * (d_ij - d_ref)
        elif d_ij < d_ref:
            repulsion -= k_repl * (d_ref - d_ij)
        heading_gap += unit(neighbor.v) - own_heading

    count = len(neighbors)
    alignment = -k_alig * float(np.linalg.norm(heading_gap / count))
    return attraction / count + repulsion / count + alignment
