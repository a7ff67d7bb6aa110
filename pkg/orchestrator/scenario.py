"""
Multi-stage scenarios: one continuous simulation whose team tasks and policies change
when a stage's entry condition is met. Graph-query teams get their policy from a skill
graph query at stage entry; every such decision is logged.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from django.conf import settings

from marl.policy import actor_action
from marl.trainer import TrainConfig
from orchestrator.constants.orchestrator_constants import (
    BUDGET, ENCOUNTER, ENTRY_CHOICES, FINAL_STEPS, FIXED_SKILL, GRAPH_QUERY, NEXT_STAGE, POLICY_SOURCE_CHOICES,
    SCRIPTED, START, TEAM_ELIMINATED, TRAJECTORY_FILE,
)
from orchestrator.exceptions import ScenarioError, UnresolvedSkill
from orchestrator.metrics import DecisionLog, DecisionRecord, StageSummary, alive_counts
from skillgraph.constants.skillgraph_constants import FINETUNE, REUSE
from skillgraph.dispatch import DispatchDecision, blended_act, dispatch, finetune, query
from skillgraph.exceptions import EmptyScoreTable
from swarmsim.constants.swarmsim_constants import GREEN, RED
from swarmsim.controllers import scripted_actions
from swarmsim.dynamics import step
from swarmsim.export import TrajectoryWriter
from swarmsim.features import TaskFeature
from swarmsim.perception import observation_length, observe
from swarmsim.world import World, WorldConfig

logger = logging.getLogger(__name__)


def resolve_skill(skills, skill_id):
    try:
        return skills[skill_id]
    except UnresolvedSkill:
        raise
    except KeyError:
        raise UnresolvedSkill(f"No skill record for {skill_id!r}") from None


@dataclass(frozen=True)
class PolicySource:
    kind: str = GRAPH_QUERY
    expected: Tuple[str, ...] = ()
    skill_id: Optional[str] = None

    def __post_init__(self):
        if self.kind not in dict(POLICY_SOURCE_CHOICES):
            raise ScenarioError(f"Unknown policy source {self.kind!r}")
        if self.kind == FIXED_SKILL and not self.skill_id:
            raise ScenarioError("A fixed-skill policy needs a skill_id")
        if self.kind == GRAPH_QUERY and not self.expected:
            raise ScenarioError("A graph-query policy needs its expected skill ids")


@dataclass(frozen=True)
class StageSpec:
    name: str
    entry: str
    tasks: Dict[str, TaskFeature]
    policies: Dict[str, PolicySource]

    def __post_init__(self):
        if self.entry not in dict(ENTRY_CHOICES):
            raise ScenarioError(f"Stage {self.name}: unknown entry condition {self.entry!r}")
        if not self.tasks:
            raise ScenarioError(f"Stage {self.name} sets no team tasks")
        if set(self.tasks) != set(self.policies):
            raise ScenarioError(f"Stage {self.name}: every team with a task needs a policy source")


@dataclass
class ScenarioSpec:
    """
    Initial world plus ordered stages. Only the first stage starts at `start`; the stage
    index never decreases during a run.
    """
    name: str
    world: WorldConfig
    stages: List[StageSpec]
    step_budget: Optional[int] = None
    final_stage_steps: Optional[int] = None

    def __post_init__(self):
        config = settings.SGSWARM
        if self.step_budget is None:
            self.step_budget = config['SCENARIO_STEP_BUDGET']
        if self.final_stage_steps is None:
            self.final_stage_steps = config['SCENARIO_FINAL_STAGE_STEPS']
        if not self.stages:
            raise ScenarioError(f"Scenario {self.name} has no stages")
        if self.stages[0].entry != START:
            raise ScenarioError(f"Scenario {self.name}: the first stage must enter at {START}")
        if any(stage.entry == START for stage in self.stages[1:]):
            raise ScenarioError(f"Scenario {self.name}: only the first stage may enter at {START}")
        teams = set(self.world_teams)
        for stage in self.stages:
            unknown = set(stage.tasks) - teams
            if unknown:
                raise ScenarioError(f"Stage {stage.name} names teams not in the world: {sorted(unknown)}")
        if set(self.stages[0].tasks) != teams:
            raise ScenarioError(f"Stage {self.stages[0].name} must set a task for every team")
        if self.step_budget < 1 or self.final_stage_steps < 1:
            raise ScenarioError("step_budget and final_stage_steps must be >= 1")

    @property
    def world_teams(self):
        return [team.team for team in self.world.teams]

    @property
    def env(self):
        return self.world.env

    def skill_ids(self):
        """Fixed-skill ids and expected ids named anywhere in the scenario."""
        ids = []
        for stage in self.stages:
            for source in stage.policies.values():
                for skill_id in ((source.skill_id,) if source.skill_id else ()) + source.expected:
                    if skill_id not in ids:
                        ids.append(skill_id)
        return ids


@dataclass
class ScenarioRun:
    seed: int
    decisions: DecisionLog
    stages: List[StageSummary]
    final_tick: int
    truncated: bool = False
    diagnostic: str = ''
    finetuned: list = field(default_factory=list)


class _Runner:
    """State of one seeded run: the world, the current stage and each team's policy."""

    def __init__(self, spec, skills, graph, seed, allow_finetune, finetune_overrides, trajectory):
        self.spec = spec
        self.skills = skills
        self.graph = graph
        self.seed = seed
        self.allow_finetune = allow_finetune
        self.finetune_overrides = finetune_overrides or {}
        self.trajectory = trajectory
        self.world = World(replace(spec.world, seed=seed))
        self.obs_dim = observation_length(self.world.config.n_h)
        self.policies = {}
        self.decisions = DecisionLog()
        self.summaries = []
        self.finetuned = []
        self.stage_index = 0
        self.stage_entry_tick = 0

    @property
    def stage(self):
        return self.spec.stages[self.stage_index]

    def _record(self, skill_id, task):
        record = resolve_skill(self.skills, skill_id)
        if record.task_kind != task.kind:
            raise ScenarioError(f"Skill {skill_id} is {record.task_kind}, stage task is {task.kind}")
        if record.actor_spec.input_dim != self.obs_dim:
            raise ScenarioError(f"Skill {skill_id} expects observations of length {record.actor_spec.input_dim}, "
                                f"the scenario world produces {self.obs_dim}")
        return record

    def _graph_policy(self, stage, task, expected, teams):
        env = self.spec.env
        table = query(self.graph.model, env, task)
        candidates = self.graph.kind_skill_ids(task.kind)
        try:
            decision = dispatch(table.restricted(candidates), self.graph.meta.get('alpha_high'),
                                self.graph.meta.get('alpha_low'))
        except EmptyScoreTable:
            raise ScenarioError(f"Stage {stage.name}: the graph holds no {task.kind} skills") from None

        finetuned = False
        if decision.band == FINETUNE:
            seed_record = self._record(decision.top, task)
            if self.allow_finetune:
                config = TrainConfig.for_task(task.kind, seed=self.seed, **self.finetune_overrides)
                result = finetune(decision, {decision.top: seed_record}, env, task, config,
                                  skill_id=f"{decision.top}-ft-{stage.name}-{self.seed}")
                self.finetuned.append(result.record)
                finetuned = True
                record = result.record

                def policy(obs):
                    return actor_action(record.actor_spec, record.actor, obs)
            else:
                logger.warning("Stage %s: query %s falls in the fine-tune band; running %s unchanged "
                               "(fine-tuning not allowed)", stage.name, task.label(), decision.top)
                fallback = DispatchDecision(REUSE, ((decision.top, 1.0),))
                records = {decision.top: seed_record}

                def policy(obs):
                    return blended_act(fallback, records, obs)
        else:
            records = {skill_id: self._record(skill_id, task) for skill_id in decision.skill_ids}

            def policy(obs):
                return blended_act(decision, records, obs)

        entry = DecisionRecord(
            seed=self.seed,
            stage=self.stage_index,
            stage_name=stage.name,
            tick=self.world.tick,
            teams=tuple(teams),
            env=tuple(float(v) for v in env.to_vector()),
            task=tuple(float(v) for v in task.to_vector()),
            table_digest=table.digest(),
            decision=decision,
            expected=tuple(expected),
            finetuned=finetuned,
        )
        self.decisions.append(entry)
        logger.info("Stage %s tick %d: %s -> %s %s (expected %s)", stage.name, self.world.tick, task.label(),
                    decision.band, list(decision.skill_ids), list(expected))
        return policy

    def enter(self, index):
        self.stage_index = index
        self.stage_entry_tick = self.world.tick
        stage = self.stage
        logger.info("Seed %d: entering stage %d (%s) at tick %d", self.seed, index, stage.name, self.world.tick)

        queries = {}
        for team, task in stage.tasks.items():
            if self.world.living_count(team) == 0:
                self.policies.pop(team, None)
                continue
            self.world.set_task(team, task)
            source = stage.policies[team]
            if source.kind == SCRIPTED:
                self.policies[team] = None
            elif source.kind == FIXED_SKILL:
                record = self._record(source.skill_id, task)
                self.policies[team] = lambda obs, r=record: actor_action(r.actor_spec, r.actor, obs)
            else:
                queries.setdefault((task, source.expected), []).append(team)

        for (task, expected), teams in queries.items():
            policy = self._graph_policy(stage, task, expected, teams)
            for team in teams:
                self.policies[team] = policy

    def close(self, reason):
        counts = alive_counts(self.world)
        self.summaries.append(StageSummary(
            seed=self.seed, stage=self.stage_index, name=self.stage.name, entry_tick=self.stage_entry_tick,
            exit_tick=self.world.tick, exit_reason=reason, alive_green=counts[GREEN], alive_red=counts[RED],
        ))

    def actions(self):
        world = self.world
        actions = {}
        for team in world.teams:
            living = world.living(team)
            if not living:
                continue
            policy = self.policies.get(team)
            if policy is None:
                actions.update(scripted_actions(world, living))
                continue
            on_path = world.tasks[team].is_flocking and team in world.leader_paths
            leaders = [agent for agent in living if agent.is_leader and on_path]
            others = [agent for agent in living if not (agent.is_leader and on_path)]
            actions.update(scripted_actions(world, leaders))
            if others:
                obs = np.array([observe(world, agent.id) for agent in others])
                for agent, action in zip(others, np.atleast_2d(policy(obs))):
                    actions[agent.id] = action
        return actions

    def entry_met(self, condition):
        world = self.world
        if condition == TEAM_ELIMINATED:
            return any(world.living_count(team) == 0 for team in world.teams)
        if condition == ENCOUNTER:
            for team in world.teams:
                reach = world.tasks[team].r_perc
                for other in world.teams:
                    centroid = world.centroid(other) if other != team else None
                    if centroid is None:
                        continue
                    if any(np.linalg.norm(world.displacement(agent.p, centroid)) <= reach
                           for agent in world.living(team)):
                        return True
        return False

    def run(self):
        spec, world = self.spec, self.world
        self.enter(0)
        if self.trajectory is not None:
            self.trajectory.write(world, None, stage=self.stage_index)
        last = len(spec.stages) - 1
        truncated, diagnostic = False, ''
        while True:
            if self.stage_index == last:
                if world.tick - self.stage_entry_tick >= spec.final_stage_steps:
                    self.close(FINAL_STEPS)
                    break
            elif world.tick - self.stage_entry_tick >= spec.step_budget:
                upcoming = spec.stages[self.stage_index + 1]
                truncated = True
                diagnostic = (f"Stage {upcoming.name!r} ({upcoming.entry}) was not entered within "
                              f"{spec.step_budget} steps of stage {self.stage.name!r}")
                logger.warning("Seed %d: %s", self.seed, diagnostic)
                self.close(BUDGET)
                break

            result = step(world, self.actions())
            if self.trajectory is not None:
                self.trajectory.write(world, result, stage=self.stage_index)
            if self.stage_index < last and self.entry_met(spec.stages[self.stage_index + 1].entry):
                self.close(NEXT_STAGE)
                self.enter(self.stage_index + 1)

        return ScenarioRun(self.seed, self.decisions, self.summaries, world.tick, truncated, diagnostic,
                           self.finetuned)


def run_scenario(spec, skills, graph, seed=0, allow_finetune=False, finetune_overrides=None, trajectory=None):
    """
    Run one seeded scenario. `skills` maps skill ids to SkillRecords (a registry view or a
    plain dict), `graph` is a trained GraphBundle and `trajectory` an optional open
    TrajectoryWriter. At most one stage transition happens per tick; the final stage runs
    `final_stage_steps` ticks and each other stage waits at most `step_budget` ticks for the next entry.
    """
    if not graph.model.trained:
        raise ScenarioError("Scenarios need a trained skill graph")
    runner = _Runner(spec, skills, graph, seed, allow_finetune, finetune_overrides, trajectory)
    return runner.run()


def run_scenarios(spec, skills, graph, seeds, threads=1, allow_finetune=False, finetune_overrides=None,
                  trajectory_dir=None):
    """
    One run per seed, fanned out over `threads`. Every skill the graph or the scenario
    names is loaded up front so runs only share read-only state.
    """
    needed = list(dict.fromkeys(graph.model.skill_ids + [
        skill_id for skill_id in spec.skill_ids() if skill_id not in graph.model.skill_ids
    ]))
    records = {skill_id: resolve_skill(skills, skill_id) for skill_id in needed}

    def one(seed):
        if trajectory_dir is None:
            return run_scenario(spec, records, graph, seed, allow_finetune, finetune_overrides)
        with TrajectoryWriter(Path(trajectory_dir) / TRAJECTORY_FILE.format(seed=seed)) as writer:
            return run_scenario(spec, records, graph, seed, allow_finetune, finetune_overrides, writer)

    seeds = list(seeds)
    if threads <= 1:
        return [one(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, seeds))
