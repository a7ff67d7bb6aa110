from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from marl.constants.marl_constants import (
    ACTOR_STEM, CRITIC_STEM, CURVE_FIELDS, CURVE_FILE, HYPERPARAMETERS, SKILL_FORMAT_VERSION, SKILL_META_FILE,
)
from marl.exceptions import CorruptSkillRecord
from marl.policy import actor_spec_for, critic_spec_for
from numcore.constants.numcore_constants import ZEROS
from numcore.exceptions import NumcoreError
from numcore.initializers import init_weights
from numcore.network import NetSpec, NetWeights
from numcore.storage import load_net, save_net
from swarmsim.constants.swarmsim_constants import N_H
from swarmsim.features import EnvFeature, TaskFeature
from swarmsim.perception import observation_length

logger = logging.getLogger(__name__)


@dataclass
class CurveRow:
    episode: int
    mean_reward: float
    critic_loss: float
    actor_loss: float

    def as_row(self):
        return [self.episode, self.mean_reward, self.critic_loss, self.actor_loss]


@dataclass
class SkillRecord:
    """A trained policy plus the environment and task features it was trained under."""
    skill_id: str
    env: EnvFeature
    task: TaskFeature
    actor_spec: NetSpec
    actor: NetWeights
    critic_spec: NetSpec
    critic: NetWeights
    train_config: dict = field(default_factory=dict)
    curve: List[CurveRow] = field(default_factory=list)
    seed: int = 0
    parent_id: Optional[str] = None
    placeholder: bool = False

    @property
    def task_kind(self):
        return self.task.kind

    def meta(self):
        return {
            'format_version': SKILL_FORMAT_VERSION,
            'skill_id': self.skill_id,
            'env': [float(v) for v in self.env.to_vector()],
            'task': [float(v) for v in self.task.to_vector()],
            'task_kind': self.task_kind,
            'r_perc': self.task.r_perc,
            'train_config': self.train_config,
            'seed': self.seed,
            'parent_id': self.parent_id,
            'placeholder': self.placeholder,
            'curve': CURVE_FILE,
        }

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_net(directory / ACTOR_STEM, self.actor_spec, self.actor, seed=self.seed)
        save_net(directory / CRITIC_STEM, self.critic_spec, self.critic, seed=self.seed)
        write_curve(directory / CURVE_FILE, self.curve)
        (directory / SKILL_META_FILE).write_text(json.dumps(self.meta(), indent=2, sort_keys=True) + '\n')
        logger.info("Saved skill %s to %s", self.skill_id, directory)
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        try:
            meta = json.loads((directory / SKILL_META_FILE).read_text())
        except (OSError, ValueError) as e:
            raise CorruptSkillRecord(f"Cannot read {directory / SKILL_META_FILE}: {e}") from e
        if meta.get('format_version') != SKILL_FORMAT_VERSION:
            raise CorruptSkillRecord(f"{directory}: unsupported skill format {meta.get('format_version')!r}")

        try:
            actor_spec, actor, _ = load_net(directory / ACTOR_STEM)
            critic_spec, critic, _ = load_net(directory / CRITIC_STEM)
        except NumcoreError as e:
            raise CorruptSkillRecord(f"{directory}: {e}") from e

        task = TaskFeature.from_values(meta['task'])
        if task.kind != meta['task_kind']:
            raise CorruptSkillRecord(f"{directory}: task vector does not match task kind {meta['task_kind']!r}")
        if not task.is_flocking and meta.get('r_perc') is not None:
            task = TaskFeature.adversarial(*meta['task'], r_perc=meta['r_perc'])

        return cls(
            skill_id=meta['skill_id'],
            env=EnvFeature.from_values(meta['env']),
            task=task,
            actor_spec=actor_spec,
            actor=actor,
            critic_spec=critic_spec,
            critic=critic,
            train_config=meta.get('train_config') or {},
            curve=read_curve(directory / meta.get('curve', CURVE_FILE)),
            seed=meta.get('seed', 0),
            parent_id=meta.get('parent_id'),
            placeholder=meta.get('placeholder', False),
        )


def write_curve(path, rows):
    with Path(path).open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(CURVE_FIELDS)
        for row in rows:
            writer.writerow(row.as_row())


def read_curve(path):
    path = Path(path)
    if not path.exists():
        return []
    with path.open(newline='') as handle:
        return [
            CurveRow(int(row['episode']), float(row['mean_reward']), float(row['critic_loss']),
                     float(row['actor_loss']))
            for row in csv.DictReader(handle)
        ]


def placeholder_record(skill_id, env, task, n_h=N_H):
    """Zero-weight record for a feature pair; enough for graph construction, which never reads weights."""
    hyper = HYPERPARAMETERS[task.kind]
    obs_dim = observation_length(n_h)
    actor_spec = actor_spec_for(obs_dim, hyper['hidden_size'], hyper['hidden_layers'])
    critic_spec = critic_spec_for(obs_dim, hyper['hidden_size'], hyper['hidden_layers'])
    return SkillRecord(
        skill_id=skill_id,
        env=env,
        task=task,
        actor_spec=actor_spec,
        actor=init_weights(actor_spec, ZEROS),
        critic_spec=critic_spec,
        critic=init_weights(critic_spec, ZEROS),
        placeholder=True,
    )
