from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Set, Tuple

import numpy as np

from swarmsim.constants.swarmsim_constants import HP_SNAP_TOLERANCE, K_I, K_II, ZERO_SPEED
from swarmsim.geometry import displacement, pairwise_displacements


@dataclass(frozen=True)
class KillEvent:
    victim: int
    victim_team: str
    attackers: Tuple[int, ...]

    def to_dict(self):
        return {'victim': self.victim, 'victim_team': self.victim_team, 'attackers': list(self.attackers)}


@dataclass
class CombatOutcome:
    hp_loss: Dict[int, float] = field(default_factory=dict)
    attackers: Dict[int, Tuple[int, ...]] = field(default_factory=dict)
    kills: List[KillEvent] = field(default_factory=list)
    in_attack_position: Set[int] = field(default_factory=set)

    def kills_by(self, agent_id):
        return sum(1 for kill in self.kills if agent_id in kill.attackers)

    def was_killed(self, agent_id):
        return any(kill.victim == agent_id for kill in self.kills)


def _angle(a, b, norm_a, norm_b):
    return float(np.arccos(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0)))


def attack_predicate(attacker, target, r_atta, env, k_i=K_I, k_ii=K_II):
    """
    True when the attacker is behind the target, heading at it and within r_atta.

    theta_I is the angle between p_ki and the attacker's velocity, theta_II between p_ki
    and the target's velocity. Zero speed of either robot makes the angles undefined: false.
    """
    p_ki = displacement(attacker.p, target.p, env)
    distance = float(np.linalg.norm(p_ki))
    speed_i = float(np.linalg.norm(attacker.v))
    speed_k = float(np.linalg.norm(target.v))
    if speed_i < ZERO_SPEED or speed_k < ZERO_SPEED or distance < ZERO_SPEED:
        return False
    if distance >= r_atta:
        return False
    theta_i = _angle(p_ki, attacker.v, distance, speed_i)
    theta_ii = _angle(p_ki, target.v, distance, speed_k)
    return theta_i <= k_i * np.pi and theta_ii <= k_ii * np.pi


def attack_matrix(world, living):
    """
    can_attack[i, j] is attack_predicate(living[i], living[j]) for every pair, with
    r_atta taken from the attacker's task. Also returns the pairwise distances.
    """
    config = world.config
    positions = np.array([agent.p for agent in living]).reshape(-1, 2)
    velocities = np.array([agent.v for agent in living]).reshape(-1, 2)
    teams = np.array([agent.team for agent in living])
    r_atta = np.array([world.task_of(agent).r_atta or 0.0 for agent in living])

    delta = pairwise_displacements(positions, world.env)
    distance = np.linalg.norm(delta, axis=2)
    speed = np.linalg.norm(velocities, axis=1)

    valid = (teams[:, None] != teams[None, :]) & (distance >= ZERO_SPEED) & (distance < r_atta[:, None])
    valid &= (speed[:, None] >= ZERO_SPEED) & (speed[None, :] >= ZERO_SPEED)

    safe_distance = np.where(valid, distance, 1.0)
    safe_speed = np.where(speed >= ZERO_SPEED, speed, 1.0)
    cos_i = np.einsum('ijk,ik->ij', delta, velocities) / (safe_distance * safe_speed[:, None])
    cos_ii = np.einsum('ijk,jk->ij', delta, velocities) / (safe_distance * safe_speed[None, :])
    theta_i = np.arccos(np.clip(cos_i, -1.0, 1.0))
    theta_ii = np.arccos(np.clip(cos_ii, -1.0, 1.0))
    valid &= (theta_i <= config.k_i * np.pi) & (theta_ii <= config.k_ii * np.pi)
    return valid, distance


def resolve_combat(world):
    """
    Apply one round of simultaneous attacks.

    Each target loses delta_h (its team's task) per attacker, capped to the n_o nearest
    attackers that satisfy the attack predicate; ties go to the lower id. Robots nobody
    attacks regain regen_factor * delta_h up to hp_max. Every capped attacker of a robot
    that drops to hp <= 0 is credited with the kill.
    """
    config = world.config
    living = world.living()
    outcome = CombatOutcome()

    candidates = {agent.id: [] for agent in living}
    if living:
        can_attack, distance = attack_matrix(world, living)
        for i, j in zip(*np.nonzero(can_attack)):
            attacker, target = living[i], living[j]
            candidates[target.id].append((float(distance[i, j]), attacker.id))
            outcome.in_attack_position.add(attacker.id)

    for target in living:
        task = world.task_of(target)
        chosen = tuple(attacker_id for _, attacker_id in sorted(candidates[target.id])[:task.n_o])
        if chosen:
            outcome.attackers[target.id] = chosen
            outcome.hp_loss[target.id] = task.delta_h * len(chosen)

    for target in living:
        task = world.task_of(target)
        loss = outcome.hp_loss.get(target.id)
        if loss is None:
            target.hp = min(target.hp + config.regen_factor * task.delta_h, config.hp_max)
            if config.hp_max - target.hp < HP_SNAP_TOLERANCE:
                target.hp = config.hp_max
            continue
        target.hp -= loss
        if target.hp <= 0:
            target.hp = 0.0
            target.alive = False
            outcome.kills.append(KillEvent(target.id, target.team, outcome.attackers[target.id]))

    return outcome
