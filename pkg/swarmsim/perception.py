from __future__ import annotations

from typing import List, NamedTuple

import numpy as np

from swarmsim.exceptions import DeadAgentError


class Perception(NamedTuple):
    teammates: List[int]
    enemies: List[int]


def observation_length(n_h):
    return 4 + 4 * n_h


def perceive(world, agent_id):
    """
    Neighbours within the agent's r_perc, nearest first with ties broken by id.

    Flocking tasks see up to n_h teammates and no enemies; adversarial tasks see up to
    n_h/2 of each.
    """
    agent = world.agent(agent_id)
    if not agent.alive:
        raise DeadAgentError(f"Robot {agent_id} is dead and cannot perceive")

    task = world.task_of(agent)
    n_h = world.config.n_h
    in_range = []
    for other in world.living():
        if other.id == agent.id:
            continue
        distance = world.distance(agent, other)
        if distance <= task.r_perc:
            in_range.append((distance, other.id, other.team == agent.team))
    in_range.sort(key=lambda entry: (entry[0], entry[1]))

    if task.is_flocking:
        teammates = [other_id for _, other_id, same in in_range if same][:n_h]
        return Perception(teammates, [])

    half = n_h // 2
    teammates = [other_id for _, other_id, same in in_range if same][:half]
    enemies = [other_id for _, other_id, same in in_range if not same][:half]
    return Perception(teammates, enemies)


def observe(world, agent_id):
    """
    [x_i, x_j1 - x_i, ...] with x = (p, v); relative positions use the minimum image.
    Flocking fills n_h teammate slots; adversarial fills n_h/2 teammate then n_h/2 enemy slots.
    Missing neighbours are zero.
    """
    perception = perceive(world, agent_id)
    agent = world.agent(agent_id)
    n_h = world.config.n_h
    obs = np.zeros(observation_length(n_h))
    obs[0:2] = agent.p
    obs[2:4] = agent.v

    def fill(ids, first_slot):
        for slot, other_id in enumerate(ids, start=first_slot):
            other = world.agent(other_id)
            base = 4 + 4 * slot
            obs[base:base + 2] = world.displacement(agent.p, other.p)
            obs[base + 2:base + 4] = other.v - agent.v

    fill(perception.teammates, 0)
    if not world.task_of(agent).is_flocking:
        fill(perception.enemies, n_h // 2)
    return obs
