"""
World state: robots, team tasks, leader paths and the seeded spawn layout.

The integration step lives in swarmsim.dynamics; this module only owns state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from swarmsim.constants.swarmsim_constants import (
    DT, F_MAX, FLOCKING, HP_MAX, K_ALIG, K_ATTR, K_I, K_II, K_REPL, K_SITU, K_SPRING, K_SURV, LEADER_SPEED,
    LEADERS_PER_50, N_H, REGEN_FACTOR, ROBOT_MASS, ROBOT_RADIUS, SPAWN_JITTER, SPAWN_SPACING, TEAM_CHOICES,
)
from swarmsim.features import EnvFeature, TaskFeature
from swarmsim.geometry import displacement, unit


@dataclass
class AgentState:
    id: int
    team: str
    p: np.ndarray
    v: np.ndarray
    hp: float = HP_MAX
    alive: bool = True
    is_leader: bool = False

    @property
    def x(self):
        return np.concatenate([self.p, self.v])

    def to_dict(self):
        return {
            'id': self.id,
            'team': self.team,
            'p': [float(self.p[0]), float(self.p[1])],
            'v': [float(self.v[0]), float(self.v[1])],
            'hp': float(self.hp),
            'alive': self.alive,
            'is_leader': self.is_leader,
        }


@dataclass(frozen=True)
class LeaderPath:
    """Piecewise-linear path walked at constant speed; the reference parks on the last waypoint."""
    waypoints: Tuple[Tuple[float, float], ...]
    speed: float = LEADER_SPEED

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ValueError("A leader path needs at least one waypoint")
        if self.speed < 0:
            raise ValueError(f"Leader speed must be >= 0, got {self.speed}")

    @property
    def length(self):
        points = np.asarray(self.waypoints, dtype=np.float64)
        return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1))) if len(points) > 1 else 0.0

    def reference(self, t):
        """(position, velocity) of the reference point at time t."""
        points = np.asarray(self.waypoints, dtype=np.float64)
        travelled = self.speed * max(t, 0.0)
        for start, end in zip(points[:-1], points[1:]):
            segment = end - start
            seg_len = float(np.linalg.norm(segment))
            if seg_len == 0.0:
                continue
            if travelled < seg_len:
                direction = segment / seg_len
                return start + direction * travelled, direction * self.speed
            travelled -= seg_len
        return points[-1].copy(), np.zeros(2)


@dataclass
class TeamConfig:
    team: str
    task: TaskFeature
    size: int
    center: Tuple[float, float]
    heading: Tuple[float, float] = (1.0, 0.0)
    speed: float = 0.0
    spacing: float = SPAWN_SPACING
    jitter: float = SPAWN_JITTER
    leader_count: int = 0
    leader_path: Optional[LeaderPath] = None

    def __post_init__(self):
        if self.team not in dict(TEAM_CHOICES):
            raise ValueError(f"Unknown team {self.team!r}")
        if self.size < 1:
            raise ValueError(f"Team {self.team} needs at least one robot")
        if not 0 <= self.leader_count <= self.size:
            raise ValueError(f"Team {self.team}: leader_count must be in [0, {self.size}]")
        if self.leader_count and self.leader_path is None:
            raise ValueError(f"Team {self.team}: leaders need a leader_path")


@dataclass
class WorldConfig:
    env: EnvFeature
    teams: List[TeamConfig]
    robot_radius: float = ROBOT_RADIUS
    mass: float = ROBOT_MASS
    hp_max: float = HP_MAX
    regen_factor: float = REGEN_FACTOR
    k_i: float = K_I
    k_ii: float = K_II
    k_surv: float = K_SURV
    k_situ: float = K_SITU
    k_attr: float = K_ATTR
    k_repl: float = K_REPL
    k_alig: float = K_ALIG
    n_h: int = N_H
    dt: float = DT
    f_max: float = F_MAX
    k_spring: float = K_SPRING
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.n_h < 2 or self.n_h % 2:
            raise ValueError(f"n_h must be an even number >= 2, got {self.n_h}")
        names = [team.team for team in self.teams]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate team in world config: {names}")

    def team_config(self, team):
        for team_config in self.teams:
            if team_config.team == team:
                return team_config
        raise KeyError(team)


def default_leader_count(size):
    return max(1, round(LEADERS_PER_50 * size / 50))


class World:

    def __init__(self, config):
        self.config = config
        self.env = config.env
        self.tick = 0
        self.tasks: Dict[str, TaskFeature] = {team.team: team.task for team in config.teams}
        self.leader_paths: Dict[str, LeaderPath] = {
            team.team: team.leader_path for team in config.teams if team.leader_path is not None
        }
        self.leader_offsets: Dict[int, np.ndarray] = {}
        self.rng = np.random.default_rng(config.seed)
        self.agents: List[AgentState] = []
        for team_config in config.teams:
            self._spawn_team(team_config)
        self._by_id = {agent.id: agent for agent in self.agents}

    def _spawn_team(self, team_config):
        size = team_config.size
        cols = int(math.ceil(math.sqrt(size)))
        rows = int(math.ceil(size / cols))
        center = np.asarray(team_config.center, dtype=np.float64)
        velocity = unit(np.asarray(team_config.heading, dtype=np.float64)) * team_config.speed
        path = team_config.leader_path

        for k in range(size):
            row, col = divmod(k, cols)
            offset = np.array([col - (cols - 1) / 2.0, row - (rows - 1) / 2.0]) * team_config.spacing
            jitter = self.rng.uniform(-team_config.jitter, team_config.jitter, size=2)
            p = self._place(center + offset + jitter)
            agent = AgentState(
                id=len(self.agents),
                team=team_config.team,
                p=p,
                v=velocity.copy(),
                hp=self.config.hp_max,
                is_leader=k < team_config.leader_count,
            )
            if agent.is_leader:
                # each leader walks the team path shifted by its own spawn offset
                self.leader_offsets[agent.id] = p - np.asarray(path.waypoints[0], dtype=np.float64)
            self.agents.append(agent)

    def _place(self, p):
        if self.env.periodic:
            return np.mod(p, self.env.L)
        r = self.config.robot_radius
        return np.clip(p, r, self.env.L - r)

    @property
    def time(self):
        return self.tick * self.config.dt

    @property
    def teams(self):
        return [team.team for team in self.config.teams]

    def agent(self, agent_id):
        return self._by_id[agent_id]

    def living(self, team=None):
        return [a for a in self.agents if a.alive and (team is None or a.team == team)]

    def living_enemies(self, team):
        return [a for a in self.agents if a.alive and a.team != team]

    def living_count(self, team):
        return sum(1 for a in self.agents if a.alive and a.team == team)

    def task_of(self, agent):
        return self.tasks[agent.team]

    def set_task(self, team, task):
        self.tasks[team] = task

    def combat_active(self):
        """Combat runs while at least two teams are alive and every living team has an adversarial task."""
        alive_teams = [team for team in self.teams if self.living_count(team) > 0]
        return len(alive_teams) >= 2 and all(not self.tasks[team].is_flocking for team in alive_teams)

    def centroid(self, team):
        """Mean position of the team's living robots; circular mean per axis in a periodic arena."""
        members = self.living(team)
        if not members:
            return None
        positions = np.array([a.p for a in members])
        if not self.env.periodic:
            return positions.mean(axis=0)
        angles = 2.0 * np.pi * positions / self.env.L
        mean_angle = np.arctan2(np.sin(angles).mean(axis=0), np.cos(angles).mean(axis=0))
        return np.mod(mean_angle * self.env.L / (2.0 * np.pi), self.env.L)

    def displacement(self, origin, target):
        return displacement(origin, target, self.env)

    def distance(self, a, b):
        return float(np.linalg.norm(self.displacement(a.p, b.p)))

    def mean_neighbor_distance(self, team):
        """Mean distance from each living robot of `team` to its nearest living teammate (nan when < 2 alive)."""
        members = self.living(team)
        if len(members) < 2:
            return float('nan')
        nearest = []
        for agent in members:
            nearest.append(min(self.distance(agent, other) for other in members if other.id != agent.id))
        return float(np.mean(nearest))

    def snapshot(self):
        return [agent.to_dict() for agent in self.agents]


def flocking_leader_team(team, task, size, center, path, **kwargs):
    """TeamConfig for a flocking team with the default leader count."""
    if task.kind != FLOCKING:
        raise ValueError("Leaders are only used by flocking teams")
    return TeamConfig(
        team=team, task=task, size=size, center=center,
        leader_count=kwargs.pop('leader_count', default_leader_count(size)),
        leader_path=path, **kwargs,
    )
