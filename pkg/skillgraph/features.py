"""
Graph-side view of environment and task features.

Tasks of both kinds share one encoder, so flocking tasks (4 values) are padded
with a trailing 0 to the 5-slot adversarial layout.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from django.conf import settings

from skillgraph.constants.skillgraph_constants import (
    ENV_FEATURE_DIM, ENVIRONMENT, FLOCKING_PROFILE_CHOICES, TASK, TASK_FEATURE_DIM,
)
from swarmsim.constants.swarmsim_constants import ADVERSARIAL, FLOCKING


@dataclass(frozen=True)
class EntityFeature:
    kind: str
    values: Tuple[float, ...]
    task_kind: Optional[str] = None

    def __post_init__(self):
        width = ENV_FEATURE_DIM if self.kind == ENVIRONMENT else TASK_FEATURE_DIM
        if len(self.values) != width:
            raise ValueError(f"{self.kind} features have {width} values, got {len(self.values)}")

    @classmethod
    def from_env(cls, env):
        return cls(ENVIRONMENT, tuple(float(v) for v in env.to_vector()))

    @classmethod
    def from_task(cls, task):
        values = [float(v) for v in task.to_vector()]
        values += [0.0] * (TASK_FEATURE_DIM - len(values))
        return cls(TASK, tuple(values), task.kind)

    @property
    def vector(self):
        return np.array(self.values, dtype=np.float64)

    def label(self):
        return '(' + ','.join(f"{v:g}" for v in self.values) + ')'


def delta_weights(entity, flocking_profile=None, profiles=None, env_weights=None):
    """Attribute weights k_j used for the similarity of two entities of `entity`'s kind."""
    config = settings.SGSWARM
    if entity.kind == ENVIRONMENT:
        return np.asarray(env_weights if env_weights is not None else config['ENV_DELTA_WEIGHTS'], dtype=np.float64)
    profiles = profiles or config['TASK_DELTA_WEIGHTS']
    if entity.task_kind == FLOCKING:
        profile = flocking_profile or config['FLOCKING_DELTA_PROFILE']
        if profile not in dict(FLOCKING_PROFILE_CHOICES):
            raise ValueError(f"Unknown flocking weight profile {profile!r}")
        return np.asarray(profiles[profile], dtype=np.float64)
    return np.asarray(profiles[ADVERSARIAL], dtype=np.float64)


def similarity_delta(first, second, weights):
    """
    delta = sum_j k_j |p_j1 - p_j2| / sum_j k_j, clamped to [0, 1]. Absolute differences
    keep the value symmetric and non-negative.
    """
    weights = np.asarray(weights, dtype=np.float64)
    total = weights.sum()
    if total <= 0:
        return 0.0
    delta = float(np.dot(weights, np.abs(first.vector - second.vector)) / total)
    return min(delta, 1.0)
