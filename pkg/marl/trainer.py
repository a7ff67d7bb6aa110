"""
Local-critic MADDPG training and evaluation of a single skill.

One team (green) learns through a shared actor/critic; the opponent team runs the
scripted pursuit controller and flocking leaders follow their path. Every living
learner contributes one transition per step and one gradient update follows each
environment step once the buffer holds a full minibatch.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from marl.constants.marl_constants import (
    DEFAULT_LEADER_SPEED, DEFAULT_TEAM_SIZE, DISTANCE_ERROR_WINDOW, EVAL_SEED_OFFSET, HYPERPARAMETERS,
    LEARNER_TEAM, OPPONENT_TEAM,
)
from marl.exceptions import TaskKindMismatch, TrainingDiverged
from marl.policy import NoiseState, act, actor_action, bundle_from_weights, make_bundle, noise_sigma
from marl.records import CurveRow, SkillRecord
from marl.replay import ReplayBuffer
from numcore.exceptions import NonFiniteParameters
from numcore.network import backward, forward, forward_with_cache
from numcore.optim import optimizer_step, soft_update
from swarmsim.constants.swarmsim_constants import N_H, SPAWN_SPACING
from swarmsim.controllers import scripted_actions
from swarmsim.dynamics import step
from swarmsim.perception import observation_length, observe
from swarmsim.world import LeaderPath, TeamConfig, World, WorldConfig, flocking_leader_team

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    episodes: int
    episode_len: int
    buffer_size: int
    batch: int
    hidden_size: int
    hidden_layers: int
    critic_lr: float
    actor_lr: float
    gamma: float
    tau: float
    noise_scale: float
    exploration_decay: float
    seed: int = 0
    team_size: int = DEFAULT_TEAM_SIZE
    train_every: int = 1

    def __post_init__(self):
        if self.episodes < 0 or self.episode_len < 1 or self.batch < 1 or self.buffer_size < self.batch:
            raise ValueError("Need episodes >= 0, episode_len >= 1 and buffer_size >= batch >= 1")
        if not 0 <= self.gamma < 1:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.train_every < 1:
            raise ValueError("train_every must be >= 1")

    @classmethod
    def for_task(cls, kind, **overrides):
        values = dict(HYPERPARAMETERS[kind])
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainStepResult:
    critic_loss: float
    actor_loss: float
    skipped: bool = False


@dataclass
class EpisodeStats:
    reward_sum: float = 0.0
    steps: int = 0
    winner: Optional[str] = None
    distance_errors: List[float] = field(default_factory=list)


@dataclass
class SkillMetrics:
    mean_reward: float
    win_rate: float
    distance_error: float
    episodes: int

    def as_dict(self):
        return asdict(self)


def critic_loss_and_gradient(bundle, batch, gamma):
    """Mean squared TD error against y = r + gamma (1 - done) Q'(o', mu'(o'))."""
    next_actions = forward(bundle.actor_spec, bundle.actor_target, batch.next_obs)
    next_q = forward(bundle.critic_spec, bundle.critic_target, np.hstack([batch.next_obs, next_actions]))[:, 0]
    targets = batch.rewards + gamma * (1.0 - batch.dones.astype(np.float64)) * next_q

    inputs = np.hstack([batch.obs, batch.actions])
    q, cache = forward_with_cache(bundle.critic_spec, bundle.critic, inputs)
    error = q[:, 0] - targets
    size = len(error)
    loss = float(np.mean(error ** 2))
    gradient = backward(bundle.critic_spec, bundle.critic, inputs, (2.0 * error / size)[:, None], cache)
    return loss, gradient.parameter_gradients


def actor_objective_gradient(bundle, obs):
    """
    Returns (-mean Q(o, mu(o)), gradient w.r.t. actor parameters). The action part of the
    critic's input gradient is pushed back through the actor.
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    size = len(obs)
    actions, actor_cache = forward_with_cache(bundle.actor_spec, bundle.actor, obs)
    inputs = np.hstack([obs, actions])
    q, critic_cache = forward_with_cache(bundle.critic_spec, bundle.critic, inputs)
    critic_back = backward(bundle.critic_spec, bundle.critic, inputs, np.full((size, 1), -1.0 / size), critic_cache)
    action_gradient = critic_back.input_gradient[:, bundle.obs_dim:]
    actor_back = backward(bundle.actor_spec, bundle.actor, obs, action_gradient, actor_cache)
    return -float(np.mean(q)), actor_back.parameter_gradients


def train_step(bundle, buffer, config):
    """
    One critic update, one actor update and the soft target updates. Returns the new
    bundle and the losses; a buffer smaller than the batch returns the bundle untouched
    with skipped=True.
    """
    if len(buffer) < config.batch:
        logger.debug("Replay buffer holds %d < %d transitions, skipping update", len(buffer), config.batch)
        return bundle, TrainStepResult(float('nan'), float('nan'), skipped=True)

    batch = buffer.sample(config.batch)
    critic_loss, critic_gradient = critic_loss_and_gradient(bundle, batch, config.gamma)
    if not math.isfinite(critic_loss):
        raise TrainingDiverged(f"Critic loss is {critic_loss}")
    try:
        critic, critic_opt = optimizer_step(bundle.critic_opt, bundle.critic, critic_gradient)
        updated = replace(bundle, critic=critic, critic_opt=critic_opt)

        actor_loss, actor_gradient = actor_objective_gradient(updated, batch.obs)
        if not math.isfinite(actor_loss):
            raise TrainingDiverged(f"Actor loss is {actor_loss}")
        actor, actor_opt = optimizer_step(bundle.actor_opt, bundle.actor, actor_gradient)
    except NonFiniteParameters as e:
        raise TrainingDiverged(str(e)) from e

    updated = replace(
        updated,
        actor=actor,
        actor_opt=actor_opt,
        actor_target=soft_update(bundle.actor_target, actor, config.tau),
        critic_target=soft_update(bundle.critic_target, critic, config.tau),
    )
    return updated, TrainStepResult(critic_loss, actor_loss)


def training_world_config(env, task, team_size=DEFAULT_TEAM_SIZE, seed=0, n_h=N_H):
    """
    Default skill-collection world: flocking runs one team behind a leader path across the
    arena; adversarial runs the learners against an equal scripted red team.
    """
    length = env.L
    if task.is_flocking:
        start = (0.3 * length, 0.5 * length)
        path = LeaderPath((start, (0.7 * length, 0.5 * length)), speed=DEFAULT_LEADER_SPEED)
        team = flocking_leader_team(LEARNER_TEAM, task, team_size, start, path, spacing=task.d_ref)
        return WorldConfig(env=env, teams=[team], seed=seed, n_h=n_h)
    return WorldConfig(
        env=env,
        teams=[
            TeamConfig(LEARNER_TEAM, task, team_size, center=(0.3 * length, 0.5 * length),
                       heading=(1.0, 0.0), spacing=SPAWN_SPACING),
            TeamConfig(OPPONENT_TEAM, task, team_size, center=(0.7 * length, 0.5 * length),
                       heading=(-1.0, 0.0), spacing=SPAWN_SPACING),
        ],
        seed=seed,
        n_h=n_h,
    )


def formation_error(world, team, d_ref):
    """Mean |nearest-neighbour distance - d_ref| / d_ref over the team's living robots."""
    members = world.living(team)
    if len(members) < 2:
        return float('nan')
    errors = []
    for agent in members:
        nearest = min(world.distance(agent, other) for other in members if other.id != agent.id)
        errors.append(abs(nearest - d_ref) / d_ref)
    return float(np.mean(errors))


def episode_winner(world):
    """Returns (finished, winner). Only fights finish early: the last team standing wins."""
    if world.tasks[LEARNER_TEAM].is_flocking or len(world.teams) < 2:
        return False, None
    alive = [team for team in world.teams if world.living_count(team) > 0]
    if len(alive) == len(world.teams):
        return False, None
    return True, alive[0] if len(alive) == 1 else None


def run_episode(world, policy: Callable, episode_len, on_transition=None, on_step=None):
    """
    Roll out one episode. `policy` maps an (n, obs_dim) batch of learner observations to
    (n, 2) actions; leaders and opponents use the scripted controllers.
    """
    stats = EpisodeStats()
    task = world.tasks[LEARNER_TEAM]
    for _ in range(episode_len):
        learners = [a for a in world.living(LEARNER_TEAM) if not a.is_leader]
        learner_ids = {a.id for a in learners}
        actions = scripted_actions(world, [a for a in world.living() if a.id not in learner_ids])
        obs = np.array([observe(world, a.id) for a in learners]).reshape(len(learners), -1)
        if learners:
            learner_actions = policy(obs)
            for agent, action in zip(learners, learner_actions):
                actions[agent.id] = action

        result = step(world, actions)
        finished, winner = episode_winner(world)

        if learners:
            rewards = [result.rewards[a.id] for a in learners]
            stats.reward_sum += float(np.mean(rewards))
            if on_transition is not None:
                for index, agent in enumerate(learners):
                    done = (not agent.alive) or finished
                    next_obs = observe(world, agent.id) if agent.alive else np.zeros(obs.shape[1])
                    on_transition(obs[index], learner_actions[index], rewards[index], next_obs, done)
        stats.steps += 1
        if task.is_flocking:
            stats.distance_errors.append(formation_error(world, LEARNER_TEAM, task.d_ref))
        if on_step is not None:
            on_step()
        if finished:
            stats.winner = winner
            break
    return stats


def _check_learner_task(world_config, task):
    learner_task = world_config.team_config(LEARNER_TEAM).task
    if learner_task.kind != task.kind:
        raise TaskKindMismatch(f"Skill is {task.kind} but the world's {LEARNER_TEAM} team runs {learner_task.kind}")


def train_skill(env, task, train_config, world_config=None, skill_id=None, warm_start=None, progress=None):
    """
    Train (or, with `warm_start`, fine-tune) a skill and return its SkillRecord.

    `progress`, when given, is called with (episode, CurveRow) after every episode.
    """
    world_config = world_config or training_world_config(env, task, train_config.team_size, train_config.seed)
    _check_learner_task(world_config, task)
    obs_dim = observation_length(world_config.n_h)

    if warm_start is not None:
        if warm_start.task_kind != task.kind:
            raise TaskKindMismatch(f"Cannot warm-start a {task.kind} skill from {warm_start.task_kind} "
                                   f"skill {warm_start.skill_id}")
        bundle = bundle_from_weights(task.kind, warm_start.actor_spec, warm_start.actor, warm_start.critic_spec,
                                     warm_start.critic, train_config.actor_lr, train_config.critic_lr)
    else:
        bundle = make_bundle(task.kind, obs_dim, train_config.hidden_size, train_config.hidden_layers,
                             train_config.actor_lr, train_config.critic_lr, seed=train_config.seed)
    if bundle.obs_dim != obs_dim:
        raise TaskKindMismatch(f"Policy expects observations of length {bundle.obs_dim}, world produces {obs_dim}")

    buffer = ReplayBuffer(train_config.buffer_size, obs_dim, seed=train_config.seed + 2)
    noise = NoiseState.seeded(train_config.noise_scale, train_config.seed + 1)
    state = {'bundle': bundle, 'steps': 0, 'critic_losses': [], 'actor_losses': []}

    def policy(obs):
        return act(state['bundle'], obs, explore=True, noise_state=noise)

    def learn():
        state['steps'] += 1
        if state['steps'] % train_config.train_every:
            return
        state['bundle'], result = train_step(state['bundle'], buffer, train_config)
        if not result.skipped:
            state['critic_losses'].append(result.critic_loss)
            state['actor_losses'].append(result.actor_loss)

    curve = []
    for episode in range(train_config.episodes):
        noise.sigma = noise_sigma(episode, train_config.episodes, train_config.noise_scale,
                                  train_config.exploration_decay)
        state['critic_losses'], state['actor_losses'] = [], []
        world = World(replace(world_config, seed=world_config.seed + episode))
        try:
            stats = run_episode(world, policy, train_config.episode_len, on_transition=buffer.push, on_step=learn)
        except TrainingDiverged as e:
            raise TrainingDiverged(f"Training diverged in episode {episode} at tick {world.tick}: {e}") from e

        row = CurveRow(
            episode=episode,
            mean_reward=stats.reward_sum,
            critic_loss=float(np.mean(state['critic_losses'])) if state['critic_losses'] else float('nan'),
            actor_loss=float(np.mean(state['actor_losses'])) if state['actor_losses'] else float('nan'),
        )
        curve.append(row)
        logger.info("%s episode %d/%d reward %.4f sigma %.3f critic %.5f", skill_id or task.kind, episode + 1,
                    train_config.episodes, row.mean_reward, noise.sigma, row.critic_loss)
        if progress is not None:
            progress(episode, row)

    final = state['bundle']
    return SkillRecord(
        skill_id=skill_id or f"{task.kind}-{train_config.seed}",
        env=env,
        task=task,
        actor_spec=final.actor_spec,
        actor=final.actor,
        critic_spec=final.critic_spec,
        critic=final.critic,
        train_config=train_config.to_dict(),
        curve=curve,
        seed=train_config.seed,
        parent_id=warm_start.skill_id if warm_start is not None else None,
    )


def evaluate_skill(record, world_config, n_episodes, seed=0, episode_len=None):
    """Noise-free rollouts of the skill's actor. Deterministic for a given seed."""
    _check_learner_task(world_config, record.task)
    obs_dim = observation_length(world_config.n_h)
    if record.actor_spec.input_dim != obs_dim:
        raise TaskKindMismatch(f"Skill {record.skill_id} expects observations of length "
                               f"{record.actor_spec.input_dim}, world produces {obs_dim}")
    episode_len = episode_len or HYPERPARAMETERS[record.task_kind]['episode_len']

    def policy(obs):
        return actor_action(record.actor_spec, record.actor, obs)

    rewards, wins, errors = [], 0, []
    for episode in range(n_episodes):
        world = World(replace(world_config, seed=seed + EVAL_SEED_OFFSET + episode))
        stats = run_episode(world, policy, episode_len)
        rewards.append(stats.reward_sum)
        wins += stats.winner == LEARNER_TEAM
        if stats.distance_errors:
            window = [e for e in stats.distance_errors[-DISTANCE_ERROR_WINDOW:] if not math.isnan(e)]
            if window:
                errors.append(float(np.mean(window)))

    adversarial = not record.task.is_flocking
    metrics = SkillMetrics(
        mean_reward=float(np.mean(rewards)) if rewards else float('nan'),
        win_rate=wins / n_episodes if (adversarial and n_episodes) else float('nan'),
        distance_error=float(np.mean(errors)) if errors else float('nan'),
        episodes=n_episodes,
    )
    logger.info("Evaluated %s over %d episodes: %s", record.skill_id, n_episodes, metrics)
    return metrics
