"""
Graph utilization: score every skill for an (environment, task) query, pick a
dispatch band and turn the decision into actions or a fine-tuning run.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from django.conf import settings

from marl.policy import actor_action
from marl.trainer import train_skill
from skillgraph.constants.skillgraph_constants import (
    BLEND, ENV_TO_SKILL, FINETUNE, REUSE, SCORE_FIELDS, TASK_TO_SKILL,
)
from skillgraph.exceptions import EmptyScoreTable, MixedSkillKinds, UnknownSkill
from skillgraph.features import EntityFeature
from skillgraph.model import encode
from skillgraph.scoring import score_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreRow:
    skill_id: str
    s_env: float
    s_task: float
    score: float

    def as_row(self):
        return [self.skill_id, repr(self.s_env), repr(self.s_task), repr(self.score)]


@dataclass(frozen=True)
class ScoreTable:
    rows: Tuple[ScoreRow, ...]

    @classmethod
    def from_rows(cls, rows):
        return cls(tuple(sorted(rows, key=lambda row: (-row.score, row.skill_id))))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def top(self):
        if not self.rows:
            raise EmptyScoreTable("Score table is empty")
        return self.rows[0]

    def restricted(self, skill_ids):
        """Rows of the given skills only, order kept."""
        keep = set(skill_ids)
        return ScoreTable(tuple(row for row in self.rows if row.skill_id in keep))

    def csv_text(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(SCORE_FIELDS)
        for row in self.rows:
            writer.writerow(row.as_row())
        return buffer.getvalue()

    def digest(self):
        return hashlib.sha256(self.csv_text().encode()).hexdigest()

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.csv_text())
        return path


@dataclass(frozen=True)
class DispatchDecision:
    band: str
    members: Tuple[Tuple[str, float], ...]

    @property
    def skill_ids(self):
        return tuple(skill_id for skill_id, _ in self.members)

    @property
    def weights(self):
        return tuple(weight for _, weight in self.members)

    @property
    def top(self):
        return self.members[0][0]

    def as_dict(self):
        return {'band': self.band, 'skills': [{'skill': s, 'weight': w} for s, w in self.members]}


def query(model, env, task):
    """ScoreTable of S = S_env * S_task for every skill in the graph."""
    if not model.trained:
        logger.warning("Querying a graph model that has not been trained")
    model = model.normalized()
    count = len(model.skill_ids)
    tails = model.skill_embeddings

    def scores(head, relation):
        normal, translation = model.relation(relation)
        return score_batch(np.tile(head, (count, 1)), np.tile(normal, (count, 1)),
                           np.tile(translation, (count, 1)), tails, model.lam).score

    s_env = scores(encode(model, EntityFeature.from_env(env)), ENV_TO_SKILL)
    s_task = scores(encode(model, EntityFeature.from_task(task)), TASK_TO_SKILL)
    table = ScoreTable.from_rows(
        ScoreRow(skill_id, float(e), float(t), float(e * t))
        for skill_id, e, t in zip(model.skill_ids, s_env, s_task)
    )
    if len(table):
        logger.info("Query %s+%s: top %s (S=%.4f)", env.to_vector().tolist(), task.label(), table.top.skill_id,
                    table.top.score)
    return table


def dispatch(table, alpha_high=None, alpha_low=None, blend_cap=None):
    """
    reuse    top S > alpha_high
    blend    skills with alpha_low < S <= alpha_high (at most blend_cap), weights S_j / sum S
    finetune otherwise, seeded from the top skill
    """
    config = settings.SGSWARM
    alpha_high = config['ALPHA_HIGH'] if alpha_high is None else alpha_high
    alpha_low = config['ALPHA_LOW'] if alpha_low is None else alpha_low
    blend_cap = blend_cap or config['BLEND_CAP']
    if not 0 <= alpha_low < alpha_high <= 1:
        raise ValueError(f"Need 0 <= alpha_low < alpha_high <= 1, got {alpha_low}, {alpha_high}")
    if not len(table):
        raise EmptyScoreTable("Cannot dispatch on an empty score table")

    top = table.top
    if top.score > alpha_high:
        return DispatchDecision(REUSE, ((top.skill_id, 1.0),))
    band = [row for row in table.rows if alpha_low < row.score <= alpha_high][:blend_cap]
    if band:
        total = sum(row.score for row in band)
        return DispatchDecision(BLEND, tuple((row.skill_id, row.score / total) for row in band))
    return DispatchDecision(FINETUNE, ((top.skill_id, 1.0),))


def _lookup(skills, skill_id):
    if isinstance(skills, dict):
        record = skills.get(skill_id)
    else:
        record = next((r for r in skills if r.skill_id == skill_id), None)
    if record is None:
        raise UnknownSkill(skill_id)
    return record


def blended_act(decision, skills, obs):
    """sum_j w_j mu_j(o), clipped; a reuse decision is the one-member case."""
    if decision.band == FINETUNE:
        raise ValueError("A fine-tune decision has no policy until training finishes")
    records = [_lookup(skills, skill_id) for skill_id in decision.skill_ids]
    if len({(r.task_kind, r.actor_spec.input_dim) for r in records}) > 1:
        raise MixedSkillKinds(f"Cannot blend skills {list(decision.skill_ids)} of different kinds")
    action = sum(weight * actor_action(r.actor_spec, r.actor, obs) for weight, r in zip(decision.weights, records))
    return np.clip(action, -1.0, 1.0)


def episodes_to_reach(curve, target, window=10):
    """1-based episode at which the trailing mean reward first reaches `target`, or None."""
    rewards = [row.mean_reward for row in curve]
    for end in range(1, len(rewards) + 1):
        if np.mean(rewards[max(0, end - window):end]) >= target:
            return end
    return None


@dataclass
class FinetuneResult:
    record: object
    scratch: Optional[object] = None

    def budget_fraction(self, window=10):
        """Share of the scratch run's episodes the warm start needs to reach the scratch final reward."""
        if self.scratch is None or not self.scratch.curve:
            return None
        target = float(np.mean([row.mean_reward for row in self.scratch.curve[-window:]]))
        reached = episodes_to_reach(self.record.curve, target, window)
        return None if reached is None else reached / len(self.scratch.curve)


def finetune(decision, skills, env, task, train_config, world_config=None, scratch_baseline=False, skill_id=None):
    """Warm-start training from the decision's top skill, optionally paired with a scratch run."""
    if decision.band != FINETUNE:
        raise ValueError(f"Expected a {FINETUNE} decision, got {decision.band}")
    seed_record = _lookup(skills, decision.top)
    skill_id = skill_id or f"{decision.top}-ft{train_config.seed}"
    logger.info("Fine-tuning %s from %s for %d episodes", skill_id, seed_record.skill_id, train_config.episodes)
    record = train_skill(env, task, train_config, world_config=world_config, skill_id=skill_id,
                         warm_start=seed_record)
    scratch = None
    if scratch_baseline:
        scratch = train_skill(env, task, train_config, world_config=world_config, skill_id=f"{skill_id}-scratch")
    return FinetuneResult(record, scratch)
