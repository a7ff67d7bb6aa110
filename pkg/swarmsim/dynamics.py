"""
One simulation tick.

Order of a step: actions are clipped and scaled to forces, spring contacts are added,
velocity is integrated and clamped to the team's speed band, position follows
(semi-implicit Euler), the boundary rule is applied, combat is resolved when every
living team fights, and rewards are read off the post-step state.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from swarmsim.combat import CombatOutcome, resolve_combat
from swarmsim.constants.swarmsim_constants import ZERO_SPEED
from swarmsim.exceptions import ActionError
from swarmsim.geometry import pairwise_displacements
from swarmsim.perception import perceive
from swarmsim.rewards import adversarial_reward, flocking_reward

logger = logging.getLogger(__name__)


@dataclass
class StepResult:
    tick: int
    rewards: Dict[int, float] = field(default_factory=dict)
    combat: Optional[CombatOutcome] = None

    @property
    def kills(self):
        return [] if self.combat is None else self.combat.kills

    def events(self):
        return {'kills': [kill.to_dict() for kill in self.kills]}


def _validated_actions(world, actions, living):
    living_ids = {agent.id for agent in living}
    given = set(actions)
    if given != living_ids:
        missing = sorted(living_ids - given)
        extra = sorted(given - living_ids)
        raise ActionError(f"Actions must cover exactly the living robots; missing={missing} unexpected={extra}")
    forces = np.zeros((len(living), 2))
    for row, agent in enumerate(living):
        action = np.asarray(actions[agent.id], dtype=np.float64)
        if action.shape != (2,):
            raise ActionError(f"Robot {agent.id}: action must have 2 components, got shape {action.shape}")
        forces[row] = world.config.f_max * np.clip(action, -1.0, 1.0)
    return forces


def contact_forces(world, living):
    """Hooke forces from overlapping disks and, in a fixed arena, from penetrated walls."""
    config = world.config
    r = config.robot_radius
    positions = np.array([agent.p for agent in living]).reshape(-1, 2)
    forces = np.zeros_like(positions)

    if len(living) > 1:
        delta = pairwise_displacements(positions, world.env)
        distance = np.linalg.norm(delta, axis=2)
        overlap = np.clip(2.0 * r - distance, 0.0, None)
        np.fill_diagonal(overlap, 0.0)
        ids = np.array([agent.id for agent in living])
        # coincident disks separate along x, lower id to the left
        fallback = np.where(ids[:, None] < ids[None, :], 1.0, -1.0)
        safe = np.where(distance > ZERO_SPEED, distance, 1.0)
        direction = delta / safe[:, :, None]
        coincident = distance <= ZERO_SPEED
        direction[..., 0] = np.where(coincident, fallback, direction[..., 0])
        direction[..., 1] = np.where(coincident, 0.0, direction[..., 1])
        forces -= config.k_spring * np.sum(overlap[:, :, None] * direction, axis=1)

    if not world.env.periodic:
        length = world.env.L
        forces += config.k_spring * np.clip(r - positions, 0.0, None)
        forces -= config.k_spring * np.clip(positions - (length - r), 0.0, None)
    return forces


def _clamp_speed(v, previous, v_min, v_max):
    speed = float(np.linalg.norm(v))
    if speed > v_max:
        return v * (v_max / speed)
    if speed < v_min:
        if speed > ZERO_SPEED:
            return v * (v_min / speed)
        heading = previous if np.linalg.norm(previous) > ZERO_SPEED else np.array([1.0, 0.0])
        return heading / np.linalg.norm(heading) * v_min
    return v


def _apply_boundary(world, agent):
    length = world.env.L
    if world.env.periodic:
        agent.p = np.mod(agent.p, length)
        # mod can return L itself for tiny negative inputs
        agent.p[agent.p >= length] = 0.0
        return
    for axis in range(2):
        if agent.p[axis] < 0.0:
            agent.p[axis] = -agent.p[axis]
            agent.v[axis] = -agent.v[axis]
        elif agent.p[axis] > length:
            agent.p[axis] = 2.0 * length - agent.p[axis]
            agent.v[axis] = -agent.v[axis]
    agent.p = np.clip(agent.p, 0.0, length)


def step(world, actions):
    """
    Advance the world by one tick. `actions` maps every living robot id to a length-2
    action in [-1, 1]^2 (out-of-range components are clipped).
    """
    config = world.config
    living = world.living()
    active_forces = _validated_actions(world, actions, living)
    passive_forces = contact_forces(world, living)

    for row, agent in enumerate(living):
        task = world.task_of(agent)
        previous = agent.v
        velocity = agent.v + (active_forces[row] + passive_forces[row]) / config.mass * config.dt
        agent.v = _clamp_speed(velocity, previous, task.v_min, task.v_max)
        agent.p = agent.p + agent.v * config.dt
        _apply_boundary(world, agent)

    result = StepResult(tick=world.tick + 1)
    if world.combat_active():
        result.combat = resolve_combat(world)
        for kill in result.combat.kills:
            logger.debug("tick %d: robot %d (%s) eliminated by %s", result.tick, kill.victim, kill.victim_team,
                         list(kill.attackers))

    for agent in living:
        task = world.task_of(agent)
        if task.is_flocking:
            if not agent.alive:
                result.rewards[agent.id] = 0.0
                continue
            neighbors = [world.agent(i) for i in perceive(world, agent.id).teammates]
            result.rewards[agent.id] = flocking_reward(
                agent, neighbors, task.d_ref, world.env, config.k_attr, config.k_repl, config.k_alig,
            )
        else:
            result.rewards[agent.id] = adversarial_reward(agent, result.combat, config.k_surv, config.k_situ)

    world.tick += 1
    return result
