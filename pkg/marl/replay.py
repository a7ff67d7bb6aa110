from __future__ import annotations

from typing import NamedTuple

import numpy as np

from marl.constants.marl_constants import ACTION_DIM, REPLAY_INITIAL_ALLOCATION
from numcore.exceptions import DimensionMismatch


class Transition(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool


class TransitionBatch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """
    Ring buffer of transitions stored column-wise in numpy arrays.

    Storage grows by doubling until it reaches `capacity`; after that the oldest
    transition is overwritten. Minibatches are drawn uniformly without replacement.
    """

    def __init__(self, capacity, obs_dim, seed=0):
        if capacity < 1:
            raise ValueError(f"Replay capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.rng = np.random.default_rng(seed)
        self._size = 0
        self._next = 0
        self._allocate(min(self.capacity, REPLAY_INITIAL_ALLOCATION))

    def _allocate(self, rows):
        old = getattr(self, '_obs', None)
        obs = np.zeros((rows, self.obs_dim))
        actions = np.zeros((rows, ACTION_DIM))
        rewards = np.zeros(rows)
        next_obs = np.zeros((rows, self.obs_dim))
        dones = np.zeros(rows, dtype=bool)
        if old is not None:
            n = self._size
            obs[:n] = self._obs[:n]
            actions[:n] = self._actions[:n]
            rewards[:n] = self._rewards[:n]
            next_obs[:n] = self._next_obs[:n]
            dones[:n] = self._dones[:n]
        self._obs, self._actions, self._rewards, self._next_obs, self._dones = obs, actions, rewards, next_obs, dones

    def __len__(self):
        return self._size

    def push(self, obs, action, reward, next_obs, done):
        obs = np.asarray(obs, dtype=np.float64)
        next_obs = np.asarray(next_obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,) or next_obs.shape != (self.obs_dim,):
            raise DimensionMismatch(f"Observations must have length {self.obs_dim}")
        if self._next >= len(self._rewards) and len(self._rewards) < self.capacity:
            self._allocate(min(self.capacity, 2 * len(self._rewards)))
        row = self._next
        self._obs[row] = obs
        self._actions[row] = action
        self._rewards[row] = reward
        self._next_obs[row] = next_obs
        self._dones[row] = done
        self._next = (row + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample_indices(self, batch):
        if batch > self._size:
            raise ValueError(f"Cannot draw {batch} transitions from a buffer of {self._size}")
        return self.rng.choice(self._size, size=batch, replace=False)

    def sample(self, batch):
        rows = self.sample_indices(batch)
        return TransitionBatch(
            self._obs[rows], self._actions[rows], self._rewards[rows], self._next_obs[rows], self._dones[rows],
        )
