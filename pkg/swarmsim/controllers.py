from __future__ import annotations

import numpy as np

from swarmsim.constants.swarmsim_constants import LEADER_KP, LEADER_KV, PURSUIT_KP, PURSUIT_KV


def pursuit_force(agent, world, k_p=PURSUIT_KP, k_v=PURSUIT_KV):
    """Unclipped k_p (p_c - p) + k_v (v_c - v) toward the nearest living enemy, or None if there is none."""
    enemies = world.living_enemies(agent.team)
    if not enemies:
        return None
    nearest = min(enemies, key=lambda enemy: (world.distance(agent, enemy), enemy.id))
    return k_p * world.displacement(agent.p, nearest.p) + k_v * (nearest.v - agent.v)


def scripted_pursuit(agent, world, k_p=PURSUIT_KP, k_v=PURSUIT_KV):
    force = pursuit_force(agent, world, k_p, k_v)
    if force is None:
        return np.zeros(2)
    return np.clip(force, -1.0, 1.0)


def leader_policy(agent, t, path, offset=None, env=None, k_p=LEADER_KP, k_v=LEADER_KV):
    """
    PD tracking of the path's reference point at time t, clipped to the action range.
    `offset` shifts the whole path; `env` enables the minimum image in periodic arenas.
    """
    reference_p, reference_v = path.reference(t)
    if offset is not None:
        reference_p = reference_p + offset
    gap = reference_p - agent.p
    if env is not None and env.periodic:
        gap = gap - env.L * np.round(gap / env.L)
    return np.clip(k_p * gap + k_v * (reference_v - agent.v), -1.0, 1.0)


def scripted_actions(world, agents=None):
    """
    Built-in behaviour for robots without a learned policy: leaders follow their path in
    flocking tasks, other robots pursue in adversarial tasks and hold still otherwise.
    """
    actions = {}
    for agent in agents if agents is not None else world.living():
        actions[agent.id] = scripted_action(world, agent)
    return actions


def scripted_action(world, agent):
    task = world.task_of(agent)
    if task.is_flocking:
        path = world.leader_paths.get(agent.team)
        if agent.is_leader and path is not None:
            return leader_policy(agent, world.time, path, world.leader_offsets.get(agent.id), world.env)
        return np.zeros(2)
    return scripted_pursuit(agent, world)
