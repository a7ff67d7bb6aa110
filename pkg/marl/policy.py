"""
Shared actor/critic bundle for one team and the action selection that goes with it.

The critic is local: it sees a single robot's observation and action, Q(o_i, a_i),
so its input length is the observation length plus the action length.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from marl.constants.marl_constants import ACTION_DIM
from numcore.constants.numcore_constants import ADAM, LINEAR, TANH, UNIFORM_SCALED, ZEROS
from numcore.exceptions import DimensionMismatch
from numcore.initializers import init_weights
from numcore.network import NetSpec, NetWeights, forward
from numcore.optim import OptimizerState, make_optimizer


@dataclass
class PolicyBundle:
    task_kind: str
    actor_spec: NetSpec
    actor: NetWeights
    critic_spec: NetSpec
    critic: NetWeights
    actor_target: NetWeights
    critic_target: NetWeights
    actor_opt: OptimizerState
    critic_opt: OptimizerState

    @property
    def obs_dim(self):
        return self.actor_spec.input_dim

    def copy(self):
        return PolicyBundle(
            self.task_kind, self.actor_spec, self.actor.copy(), self.critic_spec, self.critic.copy(),
            self.actor_target.copy(), self.critic_target.copy(), self.actor_opt.copy(), self.critic_opt.copy(),
        )


def actor_spec_for(obs_dim, hidden_size, hidden_layers):
    return NetSpec(obs_dim, hidden_size, hidden_layers, ACTION_DIM, output_activation=TANH)


def critic_spec_for(obs_dim, hidden_size, hidden_layers):
    return NetSpec(obs_dim + ACTION_DIM, hidden_size, hidden_layers, 1, output_activation=LINEAR)


def bundle_from_weights(task_kind, actor_spec, actor, critic_spec, critic, actor_lr, critic_lr):
    """Online nets as given, targets as copies, fresh Adam moments shaped like the nets."""
    if critic_spec.input_dim != actor_spec.input_dim + ACTION_DIM:
        raise DimensionMismatch(
            f"Critic input {critic_spec.input_dim} must equal observation {actor_spec.input_dim} + {ACTION_DIM}"
        )
    actor.check_shapes(actor_spec)
    critic.check_shapes(critic_spec)
    return PolicyBundle(
        task_kind=task_kind,
        actor_spec=actor_spec,
        actor=actor.copy(),
        critic_spec=critic_spec,
        critic=critic.copy(),
        actor_target=actor.copy(),
        critic_target=critic.copy(),
        actor_opt=make_optimizer(ADAM, actor_lr, actor),
        critic_opt=make_optimizer(ADAM, critic_lr, critic),
    )


def make_bundle(task_kind, obs_dim, hidden_size, hidden_layers, actor_lr, critic_lr, seed=0, zero=False):
    actor_spec = actor_spec_for(obs_dim, hidden_size, hidden_layers)
    critic_spec = critic_spec_for(obs_dim, hidden_size, hidden_layers)
    scheme = ZEROS if zero else UNIFORM_SCALED
    actor = init_weights(actor_spec, scheme, seed)
    critic = init_weights(critic_spec, scheme, seed + 1)
    return bundle_from_weights(task_kind, actor_spec, actor, critic_spec, critic, actor_lr, critic_lr)


@dataclass
class NoiseState:
    sigma: float
    rng: np.random.Generator

    @classmethod
    def seeded(cls, sigma, seed):
        return cls(sigma, np.random.default_rng(seed))


def noise_sigma(episode, episodes, noise_scale, exploration_decay):
    """Exponential decay from noise_scale to exploration_decay * noise_scale over the schedule."""
    if episodes <= 1:
        return noise_scale
    return noise_scale * exploration_decay ** (episode / (episodes - 1))


def act(bundle, obs, explore=False, noise_state: Optional[NoiseState] = None):
    """
    mu(o) for a single observation or a batch of them. With explore=True, Gaussian
    noise of the current sigma is added before clipping to [-1, 1].
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != bundle.obs_dim:
        raise DimensionMismatch(f"Observation must have length {bundle.obs_dim}, got {obs.shape[-1]}")
    action = forward(bundle.actor_spec, bundle.actor, obs)
    if explore and noise_state is not None and noise_state.sigma > 0:
        action = action + noise_state.rng.normal(0.0, noise_state.sigma, size=action.shape)
    return np.clip(action, -1.0, 1.0)


def actor_action(actor_spec, actor, obs):
    """Deterministic action of a bare actor (no bundle), used for reuse and blending."""
    return np.clip(forward(actor_spec, actor, obs), -1.0, 1.0)
